"""Per-resolution PointNet-like discriminators."""

from __future__ import annotations

from .autodiff import ShapeError, Tensor
from .config import Config
from .nn import MLP

# logits are clamped so sigmoid stays strictly inside (0, 1) in float64
_LOGIT_CLAMP = 36.0


class Discriminator:
    """Shared per-point MLP, channel-wise max-pool, FC scorer with sigmoid."""

    def __init__(self, resolution: int, widths, scorer_hidden: int, rng,
                 batchnorm=True, name="disc"):
        self.resolution = resolution
        # every point-MLP layer gets batch norm + leaky-ReLU, last included,
        # since its output feeds the pool rather than a loss
        self.point_mlp = MLP((3, *widths), rng, name=f"{name}.point",
                             batchnorm=batchnorm, activate_final=True)
        # scorer runs on a single pooled vector, so no batch norm here
        self.scorer = MLP((widths[-1], scorer_hidden, 1), rng,
                          name=f"{name}.scorer", batchnorm=False)

    def _check(self, cloud: Tensor):
        if cloud.ndim != 2 or cloud.shape[1] != 3:
            raise ShapeError(f"expected an (N, 3) cloud, got {cloud.shape}")
        if cloud.shape[0] != self.resolution:
            raise ShapeError(
                f"cloud has {cloud.shape[0]} points, discriminator expects "
                f"{self.resolution}")

    def extract_features(self, cloud: Tensor) -> Tensor:
        """Permutation-invariant pooled feature vector (pre-scorer)."""
        self._check(cloud)
        return self.point_mlp(cloud).max(axis=0)

    def score_logit(self, cloud: Tensor) -> Tensor:
        pooled = self.extract_features(cloud)
        return self.scorer(pooled.reshape(1, -1)).reshape(())

    def score(self, cloud: Tensor) -> Tensor:
        """Real/fake probability, strictly inside (0, 1) for finite inputs."""
        logit = self.score_logit(cloud)
        return logit.clip(-_LOGIT_CLAMP, _LOGIT_CLAMP).sigmoid()

    def parameters(self):
        return self.point_mlp.parameters() + self.scorer.parameters()

    def state_arrays(self):
        return self.point_mlp.state_arrays()

    def load_state(self, arrays):
        self.point_mlp.load_state(arrays)

    def set_training(self, flag: bool):
        self.point_mlp.set_training(flag)
        self.scorer.set_training(flag)


def build_discriminators(cfg: Config, rng) -> list:
    """One independently parameterized discriminator per resolution."""
    discs = []
    for i, (npts, widths) in enumerate(zip(cfg.stage_points, cfg.disc_widths)):
        discs.append(Discriminator(npts, widths, cfg.scorer_hidden, rng,
                                   batchnorm=cfg.batchnorm, name=f"disc{i}"))
    return discs
