"""Progressive deconvolution generator.

Each stage doubles the point count: a feature-space k-NN graph feeds a
learned bilateral interpolation, every point's neighborhood is enlarged
to 2k members (k originals + k interpolated counterparts), a shared MLP
with two-region max-pooling emits two local feature vectors per point,
and a replicated global max-pool branch is concatenated on. A per-stage
MLP head with a Tanh output maps features to coordinates in [-1, 1]^3.
"""

from __future__ import annotations

import numpy as np

from . import geometry
from .autodiff import ShapeError, Tensor, concat, no_grad
from .config import Config
from .nn import MLP, Linear, uniform_init

EPS_DEN = 1e-8


class StageOutput:
    def __init__(self, points: Tensor, features: Tensor):
        self.points = points
        self.features = features


def bilateral_interpolate(coords, feats: Tensor, graph: geometry.NeighborGraph,
                          w_theta: Tensor, w_psi: Tensor) -> Tensor:
    """Channel-wise bilateral interpolation over each point's k-neighborhood.

    Weights are products of ReLU-embedded spatial offsets (theta) and
    feature offsets (psi), with per-neighbor-slot weight matrices. When
    `coords` is None (the seed stage has no coordinates yet) the spatial
    branch is skipped and only the feature embedding weighs neighbors.
    """
    n, d = feats.shape
    idx = graph.indices
    k = graph.k
    feats_j = feats[idx]                              # (n, k, d)
    xdiff = feats.reshape(n, 1, d) - feats_j
    psi = (xdiff.transpose(1, 0, 2) @ w_psi).transpose(1, 0, 2).relu()
    if coords is not None:
        coords_j = coords[idx]
        pdiff = coords.reshape(n, 1, 3) - coords_j
        theta = (pdiff.transpose(1, 0, 2) @ w_theta).transpose(1, 0, 2).relu()
        weights = theta * psi
    else:
        weights = psi
    num = (weights * feats_j).sum(axis=1)
    den = weights.sum(axis=1) + EPS_DEN
    return num / den


class DeconvStage:
    """One deconvolution block plus its coordinate head."""

    def __init__(self, d_in: int, width: int, cfg: Config, rng, name: str):
        k = cfg.k
        self.k = k
        self.beta = cfg.beta
        self.d_in = d_in
        self.width = width
        self.w_theta = Tensor(uniform_init(rng, 3, (k, 3, d_in)),
                              requires_grad=True, name=f"{name}.w_theta")
        self.w_psi = Tensor(uniform_init(rng, d_in, (k, d_in, d_in)),
                            requires_grad=True, name=f"{name}.w_psi")
        half = width // 2
        mlp_widths = (d_in, *cfg.region_hidden, half)
        self.region_mlp = MLP(mlp_widths, rng, name=f"{name}.region",
                              batchnorm=cfg.batchnorm)
        self.region_mlp2 = (MLP(mlp_widths, rng, name=f"{name}.region2",
                                batchnorm=cfg.batchnorm)
                            if cfg.separate_region_mlps else None)
        self.head = MLP((width, *cfg.head_widths, 3), rng, name=f"{name}.head",
                        batchnorm=cfg.batchnorm, final="tanh")
        # spread the initial outputs so early clouds are not one tight blob
        self.head.layers[-1].weight.data *= cfg.head_gain

    def deconv(self, coords, feats: Tensor) -> Tensor:
        n, d = feats.shape
        k = self.k
        if n <= k:
            raise ShapeError(f"stage needs N > k, got N={n}, k={k}")
        graph = geometry.knn_graph(feats.data, k, self.beta)
        interp = bilateral_interpolate(coords, feats, graph,
                                       self.w_theta, self.w_psi)
        idx = graph.indices
        members = concat([feats[idx], interp[idx]], axis=1)   # (n, 2k, d)

        # split the 2k members into two regions by feature-space distance
        # to the center; ranking is a data-side decision
        md = ((members.data - feats.data[:, None, :]) ** 2).sum(axis=-1)
        order = np.argsort(md, axis=1, kind="stable")
        ranked = members[np.arange(n)[:, None], order]        # (n, 2k, d)

        if self.region_mlp2 is None:
            hidden = self.region_mlp(ranked.reshape(2 * n * k, d))
            hidden = hidden.reshape(n, 2 * k, hidden.shape[-1])
            region1 = hidden[:, :k, :].max(axis=1)
            region2 = hidden[:, k:, :].max(axis=1)
        else:
            h1 = self.region_mlp(ranked[:, :k, :].reshape(n * k, d))
            h2 = self.region_mlp2(ranked[:, k:, :].reshape(n * k, d))
            region1 = h1.reshape(n, k, h1.shape[-1]).max(axis=1)
            region2 = h2.reshape(n, k, h2.shape[-1]).max(axis=1)

        half = region1.shape[-1]
        local = concat([region1.reshape(n, 1, half),
                        region2.reshape(n, 1, half)], axis=1).reshape(2 * n, half)
        global_vec = local.max(axis=0)
        global_map = global_vec.reshape(1, half).broadcast_to((2 * n, half))
        return concat([local, global_map], axis=1)

    def __call__(self, coords, feats: Tensor) -> StageOutput:
        fused = self.deconv(coords, feats)
        return StageOutput(points=self.head(fused), features=fused)

    def parameters(self):
        out = [self.w_theta, self.w_psi]
        out += self.region_mlp.parameters()
        if self.region_mlp2 is not None:
            out += self.region_mlp2.parameters()
        out += self.head.parameters()
        return out

    def _mlps(self):
        mlps = [self.region_mlp, self.head]
        if self.region_mlp2 is not None:
            mlps.insert(1, self.region_mlp2)
        return mlps

    def state_arrays(self):
        out = {}
        for m in self._mlps():
            out.update(m.state_arrays())
        return out

    def load_state(self, arrays):
        for m in self._mlps():
            m.load_state(arrays)

    def set_training(self, flag: bool):
        for m in self._mlps():
            m.set_training(flag)


class Generator:
    def __init__(self, cfg: Config, rng: np.random.Generator):
        self.cfg = cfg
        self.seed_fc = Linear(cfg.latent_dim, cfg.seed_points * cfg.seed_width,
                              rng, name="gen.seed_fc")
        self.stages = []
        d_in = cfg.seed_width
        for i, width in enumerate(cfg.stage_widths):
            stage = DeconvStage(d_in, width, cfg, rng, name=f"gen.stage{i}")
            if cfg.head_spread:
                # offset each stage's initial output along alternating axes
                # so the resolutions do not start as one coincident blob
                bias = stage.head.layers[-1].bias.data
                bias[i % 3] += cfg.head_spread * (1.0 if i % 2 == 0 else -1.0)
            self.stages.append(stage)
            d_in = width + 3    # next block consumes [coords; features]

    def seed_features(self, z: Tensor) -> Tensor:
        if z.shape != (self.cfg.latent_dim,):
            raise ShapeError(
                f"latent vector must have {self.cfg.latent_dim} entries, got {z.shape}")
        flat = self.seed_fc(z)
        return flat.reshape(self.cfg.seed_points, self.cfg.seed_width)

    def forward(self, z: Tensor) -> list:
        """All resolutions generated from one latent vector."""
        feats = self.seed_features(z)
        coords = None
        outputs = []
        for stage in self.stages:
            out = stage(coords, feats)
            outputs.append(out)
            coords = out.points
            feats = concat([out.points, out.features], axis=1)
        return outputs

    def generate(self, z: np.ndarray) -> list:
        """Inference-mode clouds (numpy), one per resolution."""
        self.set_training(False)
        try:
            with no_grad():
                outs = self.forward(Tensor(z))
        finally:
            self.set_training(True)
        return [o.points.data.copy() for o in outs]

    def parameters(self):
        out = list(self.seed_fc.parameters())
        for stage in self.stages:
            out += stage.parameters()
        return out

    def state_arrays(self):
        out = {}
        for stage in self.stages:
            out.update(stage.state_arrays())
        return out

    def load_state(self, arrays):
        for stage in self.stages:
            stage.load_state(arrays)

    def set_training(self, flag: bool):
        for stage in self.stages:
            stage.set_training(flag)


def sample_latent(seed: int, count: int, dim: int = 128, std: float = 0.2) -> np.ndarray:
    """Latent vectors with i.i.d. N(0, std^2) entries, reproducible from seed."""
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, std, size=(count, dim))
