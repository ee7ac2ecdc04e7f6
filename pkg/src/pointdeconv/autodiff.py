"""Minimal dense-tensor reverse-mode autodiff on top of numpy.

Every array is float64. Each op records a backward closure on the output
tensor; calling ``backward`` on a scalar walks the graph in reverse
topological order and accumulates gradients into ``.grad``.
"""

from __future__ import annotations

import contextlib

import numpy as np


class AutodiffError(ValueError):
    pass


class ShapeError(AutodiffError):
    pass


class NonFiniteError(AutodiffError):
    pass


_grad_enabled = True
# Forward ops verify their outputs are finite.  Can be switched off for
# throughput; the error contract then falls back on the caller.
check_finite = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _as_array(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None):
        self.data = _as_array(data)
        if _backward is None and check_finite and not np.all(np.isfinite(self.data)):
            raise NonFiniteError("tensor created from non-finite data")
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = _backward
        self.name = name

    # ------------------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    __float__ = item

    def __repr__(self):
        return f"Tensor(shape={self.shape}, name={self.name})"

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    # ------------------------------------------------------------------
    def _make(self, data, parents, backward, op):
        if check_finite and not np.all(np.isfinite(data)):
            raise NonFiniteError(f"non-finite output from op '{op}'")
        if _grad_enabled and any(p.requires_grad or p._parents for p in parents):
            out = Tensor(data, _parents=parents, _backward=backward)
        else:
            out = Tensor(data)
        return out

    def _accum(self, g):
        if self.grad is None:
            self.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g, dtype=np.float64)
        else:
            self.grad = self.grad + g

    # -------------------------------------------------- elementwise binary
    @staticmethod
    def _coerce(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    def __add__(self, other):
        other = Tensor._coerce(other)
        out_data = self.data + other.data

        def backward(g):
            self._accum(_unbroadcast(g, self.shape))
            other._accum(_unbroadcast(g, other.shape))

        return self._make(out_data, (self, other), backward, "add")

    __radd__ = __add__

    def __sub__(self, other):
        other = Tensor._coerce(other)
        out_data = self.data - other.data

        def backward(g):
            self._accum(_unbroadcast(g, self.shape))
            other._accum(_unbroadcast(-g, other.shape))

        return self._make(out_data, (self, other), backward, "sub")

    def __rsub__(self, other):
        return Tensor._coerce(other).__sub__(self)

    def __mul__(self, other):
        other = Tensor._coerce(other)
        out_data = self.data * other.data

        def backward(g):
            self._accum(_unbroadcast(g * other.data, self.shape))
            other._accum(_unbroadcast(g * self.data, other.shape))

        return self._make(out_data, (self, other), backward, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._coerce(other)
        with np.errstate(divide="ignore", invalid="ignore"):
            out_data = self.data / other.data

        def backward(g):
            self._accum(_unbroadcast(g / other.data, self.shape))
            other._accum(_unbroadcast(-g * self.data / (other.data * other.data), other.shape))

        return self._make(out_data, (self, other), backward, "div")

    def __rtruediv__(self, other):
        return Tensor._coerce(other).__truediv__(self)

    def __neg__(self):
        def backward(g):
            self._accum(-g)

        return self._make(-self.data, (self,), backward, "neg")

    def __pow__(self, exponent):
        if not np.isscalar(exponent):
            raise ShapeError("pow supports scalar exponents only")
        out_data = self.data ** exponent

        def backward(g):
            self._accum(g * exponent * self.data ** (exponent - 1))

        return self._make(out_data, (self,), backward, "pow")

    # -------------------------------------------------------------- matmul
    def __matmul__(self, other):
        other = Tensor._coerce(other)
        if self.ndim < 1 or other.ndim < 2:
            raise ShapeError("matmul needs at least 1-d @ 2-d operands")
        if self.shape[-1] != other.shape[-2]:
            raise ShapeError(
                f"matmul contraction mismatch: {self.shape} @ {other.shape}"
            )
        out_data = self.data @ other.data
        a2 = self.data if self.ndim > 1 else self.data[None, :]

        def backward(g):
            g2 = g if out_data.ndim > 1 else g[None, :]
            ga = g2 @ np.swapaxes(other.data, -1, -2)
            gb = np.swapaxes(a2, -1, -2) @ g2
            if self.ndim == 1:
                ga = ga[0]
            self._accum(_unbroadcast(ga, self.shape))
            other._accum(_unbroadcast(gb, other.shape))

        return self._make(out_data, (self, other), backward, "matmul")

    # --------------------------------------------------- elementwise unary
    def exp(self):
        with np.errstate(over="ignore"):
            out_data = np.exp(self.data)

        def backward(g):
            self._accum(g * out_data)

        return self._make(out_data, (self,), backward, "exp")

    def log(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            out_data = np.log(self.data)

        def backward(g):
            self._accum(g / self.data)

        return self._make(out_data, (self,), backward, "log")

    def sqrt(self):
        out_data = np.sqrt(self.data)

        def backward(g):
            # subgradient 0 at exactly 0 so zero-distance terms stay finite
            denom = np.where(out_data == 0.0, np.inf, 2.0 * out_data)
            self._accum(g / denom)

        return self._make(out_data, (self,), backward, "sqrt")

    def tanh(self):
        out_data = np.tanh(self.data)

        def backward(g):
            self._accum(g * (1.0 - out_data * out_data))

        return self._make(out_data, (self,), backward, "tanh")

    def relu(self):
        out_data = np.maximum(self.data, 0.0)

        def backward(g):
            self._accum(g * (self.data > 0.0))

        return self._make(out_data, (self,), backward, "relu")

    def leaky_relu(self, slope=0.2):
        out_data = np.where(self.data > 0.0, self.data, slope * self.data)

        def backward(g):
            self._accum(g * np.where(self.data > 0.0, 1.0, slope))

        return self._make(out_data, (self,), backward, "leaky_relu")

    def sigmoid(self):
        x = self.data
        out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                            np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

        def backward(g):
            self._accum(g * out_data * (1.0 - out_data))

        return self._make(out_data, (self,), backward, "sigmoid")

    def clip(self, lo: float, hi: float):
        out_data = np.clip(self.data, lo, hi)
        inside = (self.data > lo) & (self.data < hi)

        def backward(g):
            self._accum(g * inside)

        return self._make(out_data, (self,), backward, "clip")

    def softplus(self):
        """log(1 + exp(x)), computed stably."""
        x = self.data
        out_data = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

        def backward(g):
            s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                         np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
            self._accum(g * s)

        return self._make(out_data, (self,), backward, "softplus")

    def log_sigmoid(self):
        """log(sigmoid(x)) = -softplus(-x), stable for large |x|."""
        return -((-self).softplus())

    # ----------------------------------------------------------- reductions
    def sum(self, axis=None, keepdims=False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            gg = g
            if axis is not None and not keepdims:
                gg = np.expand_dims(gg, axis)
            self._accum(np.broadcast_to(gg, self.shape))

        return self._make(out_data, (self,), backward, "sum")

    def mean(self, axis=None, keepdims=False):
        n = self.size if axis is None else self.shape[axis]
        out_data = self.data.mean(axis=axis, keepdims=keepdims)

        def backward(g):
            gg = g
            if axis is not None and not keepdims:
                gg = np.expand_dims(gg, axis)
            self._accum(np.broadcast_to(gg, self.shape) / n)

        return self._make(out_data, (self,), backward, "mean")

    def _extremum(self, axis, keepdims, mode):
        if axis is None:
            raise ShapeError(f"{mode} requires an explicit axis")
        pick = np.argmax(self.data, axis=axis) if mode == "max" else np.argmin(self.data, axis=axis)
        out_data = np.take_along_axis(self.data, np.expand_dims(pick, axis), axis=axis)
        if not keepdims:
            out_data = np.squeeze(out_data, axis=axis)

        def backward(g):
            gg = g if keepdims else np.expand_dims(g, axis)
            full = np.zeros_like(self.data)
            np.put_along_axis(full, np.expand_dims(pick, axis), gg, axis=axis)
            self._accum(full)

        return self._make(out_data, (self,), backward, mode)

    def max(self, axis, keepdims=False):
        """Max over one axis; gradient routes to the lowest-index argmax."""
        return self._extremum(axis, keepdims, "max")

    def min(self, axis, keepdims=False):
        return self._extremum(axis, keepdims, "min")

    # -------------------------------------------------------------- shaping
    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out_data = self.data.reshape(shape)
        src_shape = self.shape

        def backward(g):
            self._accum(g.reshape(src_shape))

        return self._make(out_data, (self,), backward, "reshape")

    def transpose(self, *axes):
        axes = axes or None
        out_data = self.data.transpose(axes) if axes else self.data.T
        inv = np.argsort(axes) if axes else None

        def backward(g):
            self._accum(g.transpose(inv) if inv is not None else g.T)

        return self._make(out_data, (self,), backward, "transpose")

    def broadcast_to(self, shape):
        out_data = np.broadcast_to(self.data, shape)
        src = self.shape

        def backward(g):
            self._accum(_unbroadcast(g, src))

        return self._make(out_data.copy(), (self,), backward, "broadcast")

    def __getitem__(self, idx):
        out_data = self.data[idx]
        src_shape = self.shape

        def backward(g):
            full = np.zeros(src_shape)
            np.add.at(full, idx, g)
            self._accum(full)

        return self._make(out_data.copy(), (self,), backward, "getitem")

    # ------------------------------------------------------------- backward
    def backward(self):
        if self.size != 1:
            raise ShapeError("backward requires a scalar loss")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


# ----------------------------------------------------------------- helpers
def concat(tensors, axis=0):
    tensors = [Tensor._coerce(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            t._accum(piece)

    return tensors[0]._make(out_data, tuple(tensors), backward, "concat")


def maximum(a, b):
    """Elementwise max of two tensors; ties route the gradient to `a`."""
    a = Tensor._coerce(a)
    b = Tensor._coerce(b)
    out_data = np.maximum(a.data, b.data)
    take_a = a.data >= b.data

    def backward(g):
        a._accum(_unbroadcast(g * take_a, a.shape))
        b._accum(_unbroadcast(g * ~take_a, b.shape))

    return a._make(out_data, (a, b), backward, "maximum")


def gradients(loss: Tensor, params) -> list:
    """Backward pass returning one gradient per parameter.

    Parameters that do not influence the loss get a zero gradient.
    """
    for p in params:
        p.grad = None
    loss.backward()
    return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
