"""Layers and the Adam optimizer built on the autodiff tensor."""

from __future__ import annotations

import numpy as np

from .autodiff import AutodiffError, Tensor


def uniform_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, name=""):
        self.name = name
        self.weight = Tensor(uniform_init(rng, in_dim, (in_dim, out_dim)),
                             requires_grad=True, name=f"{name}.weight")
        self.bias = Tensor(uniform_init(rng, in_dim, (out_dim,)),
                           requires_grad=True, name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias

    def parameters(self):
        return [self.weight, self.bias]

    def state_arrays(self):
        return {}


class BatchNorm:
    """Per-feature batch norm over axis 0 of a 2-d input.

    Training mode normalizes with batch statistics and updates running
    stats; eval mode uses the frozen running stats (an affine map).
    """

    def __init__(self, dim: int, rng=None, momentum=0.9, eps=1e-5, name=""):
        self.name = name
        self.gamma = Tensor(np.ones(dim), requires_grad=True, name=f"{name}.gamma")
        self.beta = Tensor(np.zeros(dim), requires_grad=True, name=f"{name}.beta")
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self.momentum = momentum
        self.eps = eps
        self.training = True

    def __call__(self, x: Tensor) -> Tensor:
        if self.training:
            mu = x.mean(axis=0, keepdims=True)
            centered = x - mu
            var = (centered * centered).mean(axis=0, keepdims=True)
            xhat = centered / (var + self.eps).sqrt()
            n = x.shape[0]
            unbias = n / max(n - 1, 1)
            self.running_mean = (self.momentum * self.running_mean
                                 + (1 - self.momentum) * mu.data[0])
            self.running_var = (self.momentum * self.running_var
                                + (1 - self.momentum) * var.data[0] * unbias)
        else:
            xhat = (x - self.running_mean) / np.sqrt(self.running_var + self.eps)
        return self.gamma * xhat + self.beta

    def parameters(self):
        return [self.gamma, self.beta]

    def state_arrays(self):
        return {f"{self.name}.running_mean": self.running_mean,
                f"{self.name}.running_var": self.running_var}

    def load_state(self, arrays: dict):
        self.running_mean = arrays[f"{self.name}.running_mean"].copy()
        self.running_var = arrays[f"{self.name}.running_var"].copy()


class MLP:
    """Stack of Linear layers with leaky-ReLU (+ optional batch norm) between.

    `final` selects the last layer's activation: "tanh", "sigmoid" or None.
    """

    def __init__(self, widths, rng, name="", final=None, batchnorm=True,
                 slope=0.2, activate_final=False):
        self.layers = []
        self.norms = []
        self.final = final
        self.slope = slope
        self.activate_final = activate_final
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            self.layers.append(Linear(a, b, rng, name=f"{name}.fc{i}"))
            last = i == len(widths) - 2
            self.norms.append(BatchNorm(b, name=f"{name}.bn{i}")
                              if batchnorm and (activate_final or not last) else None)

    def __call__(self, x: Tensor) -> Tensor:
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < last or self.activate_final:
                if self.norms[i] is not None:
                    x = self.norms[i](x)
                x = x.leaky_relu(self.slope)
        if self.final == "tanh":
            x = x.tanh()
        elif self.final == "sigmoid":
            x = x.sigmoid()
        return x

    def parameters(self):
        out = []
        for layer in self.layers:
            out.extend(layer.parameters())
        for norm in self.norms:
            if norm is not None:
                out.extend(norm.parameters())
        return out

    def state_arrays(self):
        out = {}
        for norm in self.norms:
            if norm is not None:
                out.update(norm.state_arrays())
        return out

    def load_state(self, arrays):
        for norm in self.norms:
            if norm is not None:
                norm.load_state(arrays)

    def set_training(self, flag: bool):
        for norm in self.norms:
            if norm is not None:
                norm.training = flag


class Adam:
    """Bias-corrected Adam over a fixed list of parameters."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads=None):
        if grads is None:
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data)
                     for p in self.params]
        for g, p in zip(grads, self.params):
            if g.shape != p.data.shape:
                raise AutodiffError(
                    f"gradient shape {g.shape} does not match parameter {p.data.shape}")
            if not np.all(np.isfinite(g)):
                raise AutodiffError("non-finite gradient; step rejected")
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for i, (g, p) in enumerate(zip(grads, self.params)):
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * (g * g)
            m_hat = self.m[i] / b1t
            v_hat = self.v[i] / b2t
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def state_arrays(self, prefix: str) -> dict:
        out = {f"{prefix}.t": np.array([self.t], dtype=np.int64)}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"{prefix}.m{i}"] = m
            out[f"{prefix}.v{i}"] = v
        return out

    def load_state(self, arrays: dict, prefix: str):
        self.t = int(arrays[f"{prefix}.t"][0])
        self.m = [arrays[f"{prefix}.m{i}"].copy() for i in range(len(self.params))]
        self.v = [arrays[f"{prefix}.v{i}"].copy() for i in range(len(self.params))]
