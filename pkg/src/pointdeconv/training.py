"""Shape-preserving adversarial losses and the alternating GAN loop."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry
from .autodiff import AutodiffError, Tensor, gradients, maximum
from .config import Config
from .data import Corpus, synth_corpus, load_directory, normalize
from .discriminator import build_discriminators
from .generator import Generator
from .nn import Adam


class TrainingError(RuntimeError):
    pass


# ----------------------------------------------------- differentiable stats
def _stats_tensors(coords: Tensor, m: int, k: int):
    """Mean and covariance tensors over FPS centroid neighborhoods.

    Centroid and neighbor selection run on raw data; the statistics stay
    on the gradient tape. FPS is seeded at the lexicographically smallest
    point so the result does not depend on point order.
    """
    pts = coords.data
    m = min(m, pts.shape[0])
    k = min(k, pts.shape[0])
    seed = int(np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0]))[0])
    centroids = geometry.fps(pts, m, seed_index=seed)
    neigh = geometry.spatial_knn_indices(pts, centroids, k)
    local = coords[neigh]                              # (m, k, 3)
    mu = local.mean(axis=1)                            # (m, 3)
    centered = local - mu.reshape(m, 1, 3)
    cov = (centered.transpose(0, 2, 1) @ centered) / (k - 1)
    return mu, cov.reshape(m, 9)


def _chamfer_stat(a: Tensor, b: Tensor) -> Tensor:
    """Max of the two directed mean nearest-neighbor L2 distances."""
    na, nb = a.shape[0], b.shape[0]
    diff = a.reshape(na, 1, a.shape[1]) - b.reshape(1, nb, b.shape[1])
    d = (diff * diff).sum(axis=2).sqrt()
    return maximum(d.min(axis=1).mean(), d.min(axis=0).mean())


def spl_pair(coords_a: Tensor, coords_b: Tensor, centroids: int, k: int) -> Tensor:
    """d1 + d2 between the centroid statistics of two adjacent resolutions."""
    mu_a, cov_a = _stats_tensors(coords_a, centroids, k)
    mu_b, cov_b = _stats_tensors(coords_b, centroids, k)
    return _chamfer_stat(mu_a, mu_b) + _chamfer_stat(cov_a, cov_b)


def spl(outputs, centroids: int, k: int,
        stop_gradient_finer: bool = False) -> Tensor:
    """Shape-preserving loss summed over adjacent resolution pairs."""
    if len(outputs) < 2:
        raise TrainingError("shape-preserving loss needs at least 2 resolutions")
    total = Tensor(0.0)
    for a, b in zip(outputs[:-1], outputs[1:]):
        coarse = a.points
        fine = b.points.detach() if stop_gradient_finer else b.points
        total = total + spl_pair(coarse, fine, centroids, k)
    return total


# ------------------------------------------------------- coupled ablations
def _chamfer_tensor(a: Tensor, b: Tensor) -> Tensor:
    na, nb = a.shape[0], b.shape[0]
    diff = a.reshape(na, 1, 3) - b.reshape(1, nb, 3)
    d2 = (diff * diff).sum(axis=2)
    return d2.min(axis=1).mean() + d2.min(axis=0).mean()


def _emd_tensor(a: Tensor, b: Tensor) -> Tensor:
    col = geometry.emd_assignment(a.data, b.data)
    diff = a - b[col]
    return (diff * diff).sum(axis=1).sqrt().mean()


def coupled_loss(outputs, kind: str, fps_seed: int = 0) -> Tensor:
    """CD/EMD between adjacent resolutions, the finer one FPS-downsampled."""
    total = Tensor(0.0)
    for a, b in zip(outputs[:-1], outputs[1:]):
        n = a.points.shape[0]
        keep = geometry.fps(b.points.data, n, seed_index=fps_seed)
        fine = b.points[keep]
        if kind == "cd-coupled":
            total = total + _chamfer_tensor(a.points, fine)
        else:
            total = total + _emd_tensor(a.points, fine)
    return total


def regularizer(outputs, cfg: Config) -> Tensor:
    variant = cfg.loss_variant
    if variant == "plain-adversarial":
        return Tensor(0.0)
    if variant == "shape-preserving":
        return spl(outputs, cfg.spl_centroids, cfg.spl_k,
                   cfg.spl_stop_gradient_finer)
    if variant in ("cd-coupled", "emd-coupled"):
        return coupled_loss(outputs, variant, cfg.fps_seed)
    raise TrainingError(f"unknown loss variant '{variant}'")


# ------------------------------------------------------------- GAN losses
def discriminator_loss(disc, real: Tensor, fake: Tensor) -> Tensor:
    """-(log D(real) + log(1 - D(fake))), computed on logits for stability."""
    lr = disc.score_logit(real)
    lf = disc.score_logit(fake)
    return -(lr.log_sigmoid() + (-lf).log_sigmoid())


def generator_adv_loss(disc, fake: Tensor, non_saturating: bool) -> Tensor:
    lf = disc.score_logit(fake)
    if non_saturating:
        return -lf.log_sigmoid()
    return (-lf).log_sigmoid()


# ----------------------------------------------------------------- dataset
def real_multiresolution(cloud: np.ndarray, resolutions, fps_seed: int = 0):
    """FPS-downsampled copies of a real cloud at each configured resolution."""
    cloud = np.asarray(cloud, dtype=np.float64)
    if cloud.shape[0] < max(resolutions):
        raise TrainingError(
            f"cloud has {cloud.shape[0]} points, need >= {max(resolutions)}")
    out = []
    for n in resolutions:
        out.append(cloud[geometry.fps(cloud, n, seed_index=fps_seed)])
    return out


def prepare_corpus(cfg: Config) -> Corpus:
    points = cfg.data_points or max(cfg.stage_points)
    if cfg.data_kind == "dir":
        corpus = load_directory(cfg.data_path)
        for i, cloud in enumerate(corpus.clouds):
            corpus.clouds[i], corpus.records[i] = normalize(cloud)
        return corpus
    return synth_corpus(cfg.data_kind, cfg.data_count, points, cfg.seed)


# ------------------------------------------------------------------- state
@dataclass
class TrainState:
    cfg: Config
    generator: Generator
    discriminators: list
    adam_g: Adam
    adam_d: list
    rng: np.random.Generator
    iteration: int = 0
    history: list = field(default_factory=list)

    @classmethod
    def fresh(cls, cfg: Config) -> "TrainState":
        rng = np.random.default_rng(cfg.seed)
        gen = Generator(cfg, rng)
        discs = build_discriminators(cfg, rng)
        adam_g = Adam(gen.parameters(), lr=cfg.lr, beta1=cfg.adam_beta1,
                      beta2=cfg.adam_beta2, eps=cfg.adam_eps)
        lr_d = cfg.lr_disc or cfg.lr
        adam_d = [Adam(d.parameters(), lr=lr_d, beta1=cfg.adam_beta1,
                       beta2=cfg.adam_beta2, eps=cfg.adam_eps) for d in discs]
        return cls(cfg=cfg, generator=gen, discriminators=discs,
                   adam_g=adam_g, adam_d=adam_d, rng=rng)


def _sample_latents(state: TrainState) -> np.ndarray:
    cfg = state.cfg
    return state.rng.normal(0.0, cfg.latent_std,
                            size=(cfg.batch_size, cfg.latent_dim))


def train_step(state: TrainState, reals_by_stage) -> list:
    """One alternation: D step per resolution, then a generator step.

    `reals_by_stage[l]` is the list of this batch's real clouds at stage l.
    Returns per-stage records (loss_D, loss_G, spl).
    """
    cfg = state.cfg
    m = len(cfg.stage_points)
    z_batch = _sample_latents(state)
    outputs = [state.generator.forward(Tensor(z)) for z in z_batch]

    # --- discriminator phase (fakes detached)
    loss_d = []
    for l, disc in enumerate(state.discriminators):
        total = Tensor(0.0)
        for b in range(cfg.batch_size):
            real = Tensor(reals_by_stage[l][b])
            fake = outputs[b][l].points.detach()
            total = total + discriminator_loss(disc, real, fake)
        total = total / cfg.batch_size
        grads = gradients(total, state.adam_d[l].params)
        state.adam_d[l].step(grads)
        loss_d.append(total.item())

    # --- generator phase (all resolutions in one backward)
    adv = [Tensor(0.0) for _ in range(m)]
    reg = [Tensor(0.0) for _ in range(m)]
    for b in range(cfg.batch_size):
        outs = outputs[b]
        for l, disc in enumerate(state.discriminators):
            adv[l] = adv[l] + generator_adv_loss(disc, outs[l].points,
                                                 cfg.non_saturating)
        if cfg.lam > 0 and cfg.loss_variant != "plain-adversarial":
            if cfg.loss_variant == "shape-preserving":
                for l in range(m - 1):
                    fine = (outs[l + 1].points.detach()
                            if cfg.spl_stop_gradient_finer else outs[l + 1].points)
                    reg[l] = reg[l] + spl_pair(outs[l].points, fine,
                                               cfg.spl_centroids, cfg.spl_k)
            else:
                for l in range(m - 1):
                    reg[l] = reg[l] + coupled_loss([outs[l], outs[l + 1]],
                                                   cfg.loss_variant, cfg.fps_seed)
    total_g = Tensor(0.0)
    for l in range(m):
        total_g = total_g + (adv[l] + cfg.lam * reg[l]) / cfg.batch_size
    grads = gradients(total_g, state.adam_g.params)
    state.adam_g.step(grads)

    records = []
    for l in range(m):
        g_l = (adv[l].item() + cfg.lam * reg[l].item()) / cfg.batch_size
        records.append((loss_d[l], g_l, reg[l].item() / cfg.batch_size))
    return records


def train(cfg: Config, out_dir, corpus: Corpus = None,
          resume_from=None, log_name="loss_log.txt") -> TrainState:
    """Run the alternating loop for `cfg.iterations` steps.

    Writes an append-only loss log (`iter, stage, loss_D, loss_G, spl`) and
    periodic checkpoints under `out_dir`. On a non-finite loss the last
    finite state is checkpointed and TrainingError is raised.
    """
    from .checkpoint import save_checkpoint, load_checkpoint

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if corpus is None:
        corpus = prepare_corpus(cfg)
    if resume_from is not None:
        state = load_checkpoint(resume_from)
        # the iteration budget may grow on resume; everything else must match
        saved = dict(state.cfg.as_dict(), iterations=cfg.iterations)
        if saved != cfg.as_dict():
            raise TrainingError("resume checkpoint was trained with a different config")
        state.cfg = cfg
    else:
        state = TrainState.fresh(cfg)

    resolutions = cfg.stage_points
    multi = [real_multiresolution(c, resolutions, cfg.fps_seed)
             for c in corpus.clouds]

    log_path = out_dir / log_name
    mode = "a" if resume_from is not None else "w"
    with open(log_path, mode) as log:
        while state.iteration < cfg.iterations:
            picks = state.rng.integers(0, len(multi), size=cfg.batch_size)
            reals_by_stage = [[multi[p][l] for p in picks]
                              for l in range(len(resolutions))]
            try:
                records = train_step(state, reals_by_stage)
            except AutodiffError as exc:
                save_checkpoint(out_dir / "abort.ckpt", state)
                raise TrainingError(f"non-finite loss at iteration "
                                    f"{state.iteration}: {exc}") from exc
            state.iteration += 1
            for l, (ld, lg, sp) in enumerate(records):
                log.write(f"{state.iteration}, {l}, {ld!r}, {lg!r}, {sp!r}\n")
            state.history.append(records)
            if cfg.checkpoint_every and state.iteration % cfg.checkpoint_every == 0:
                save_checkpoint(out_dir / f"step_{state.iteration:07d}.ckpt", state)
    save_checkpoint(out_dir / "final.ckpt", state)
    return state
