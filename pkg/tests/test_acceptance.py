"""Acceptance suite: one test per criterion, one printed verdict line each.

The toy-training criteria (6 and 7) run real training and dominate the
suite's runtime; everything here stays on one core.
"""

import filecmp
import itertools
import time

import numpy as np

from conftest import max_rel_err, numerical_grad
from pointdeconv import geometry
from pointdeconv.autodiff import Tensor, concat, gradients, maximum
from pointdeconv.config import Config, toy_config
from pointdeconv.data import synth_corpus
from pointdeconv.discriminator import build_discriminators
from pointdeconv.generator import Generator, sample_latent
from pointdeconv.metrics import evaluate_sets, jsd, one_nna
from pointdeconv.training import (TrainState, discriminator_loss,
                                  generator_adv_loss, prepare_corpus,
                                  spl, train)


def _verdict(criterion, ok, detail=""):
    tag = "PASS" if ok else "FAIL"
    print(f"[criterion {criterion}] {tag} {detail}".rstrip())
    assert ok, f"criterion {criterion}: {detail}"


def tiny_config(**overrides):
    base = dict(latent_dim=4, seed_points=4, seed_width=2,
                stage_points=(8, 16), stage_widths=(4, 8),
                k=3, head_widths=(6,), disc_widths=((4,), (4,)),
                scorer_hidden=4, spl_centroids=4, spl_k=3, batch_size=2,
                seed=0)
    base.update(overrides)
    return Config(**base)


# --------------------------------------------------------------- criterion 1
_OPS = [
    lambda t: t.exp(), lambda t: (t * t + 0.5).log(), lambda t: (t * t + 0.5).sqrt(),
    lambda t: t.tanh(), lambda t: (t + 0.05).relu(), lambda t: (t + 0.05).leaky_relu(0.2),
    lambda t: t.sigmoid(), lambda t: t.softplus(), lambda t: t.log_sigmoid(),
    lambda t: t ** 3, lambda t: -t, lambda t: t.clip(-0.5, 0.5),
    lambda t: t.sum(axis=0), lambda t: t.mean(axis=1),
    lambda t: t.max(axis=1), lambda t: t.min(axis=0),
    lambda t: t.reshape(4, 3), lambda t: t.transpose(),
    lambda t: t.broadcast_to((2, 3, 4)), lambda t: t[np.array([0, 2, 2])],
    lambda t: t @ t.transpose(), lambda t: t * t + t,
    lambda t: maximum(t, -t), lambda t: concat([t, t * 2], axis=1),
]


def test_criterion_1_gradient_integrity():
    t0 = time.time()
    r = np.random.default_rng(0)

    # every differentiable op against central finite differences (< 1e-4)
    worst_op = 0.0
    for op in _OPS:
        x = r.normal(size=(3, 4))
        w = r.normal(size=op(Tensor(x)).shape)
        t = Tensor(x, requires_grad=True)
        (op(t) * Tensor(w)).sum().backward()
        fd = numerical_grad(lambda v: float((op(Tensor(v)) * w).sum()), x.copy())
        worst_op = max(worst_op, max_rel_err(t.grad, fd))

    # end-to-end tiny generator + discriminator losses (< 1e-3)
    cfg = tiny_config()
    rng = np.random.default_rng(1)
    gen = Generator(cfg, rng)
    discs = build_discriminators(cfg, rng)
    z = sample_latent(2, 1, cfg.latent_dim)[0]
    reals = [r.normal(scale=0.5, size=(n, 3)) for n in cfg.stage_points]

    def loss_fn():
        outs = gen.forward(Tensor(z))
        total = Tensor(0.0)
        for l, disc in enumerate(discs):
            total = total + discriminator_loss(disc, Tensor(reals[l]),
                                               outs[l].points)
            total = total + generator_adv_loss(disc, outs[l].points,
                                               non_saturating=True)
        return total + cfg.lam * spl(outs, cfg.spl_centroids, cfg.spl_k)

    params = gen.parameters() + [p for d in discs for p in d.parameters()]
    grads = gradients(loss_fn(), params)
    worst_e2e = 0.0
    for p, g in zip(params, grads):
        def f(v, p=p):
            old = p.data
            p.data = v
            out = float(loss_fn())
            p.data = old
            return out

        fd = numerical_grad(f, p.data.copy(), h=1e-6)
        worst_e2e = max(worst_e2e, max_rel_err(g, fd, floor=1e-4))

    elapsed = time.time() - t0
    ok = worst_op < 1e-4 and worst_e2e < 1e-3 and elapsed < 120
    _verdict(1, ok, f"op err {worst_op:.2e}, end-to-end err {worst_e2e:.2e}, "
                    f"{elapsed:.0f}s")


# --------------------------------------------------------------- criterion 2
def _brute_emd(a, b):
    best = np.inf
    for perm in itertools.permutations(range(len(a))):
        best = min(best, float(np.mean(
            [np.linalg.norm(a[i] - b[p]) for i, p in enumerate(perm)])))
    return best


def _brute_knn(feats, k):
    n = len(feats)
    out = np.empty((n, k), dtype=np.int64)
    d = ((feats[:, None, :] - feats[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d, np.inf)
    for i in range(n):
        out[i] = np.argsort(d[i], kind="stable")[:k]
    return out


def _brute_fps(points, m, seed):
    chosen = [seed]
    dist = np.linalg.norm(points - points[seed], axis=1)
    for _ in range(m - 1):
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(points - points[nxt], axis=1))
    return np.asarray(chosen)


def test_criterion_2_oracle_equivalence():
    r = np.random.default_rng(42)
    worst = 0.0
    for _ in range(200):
        n = int(r.integers(2, 7))
        a, b = r.normal(size=(n, 3)), r.normal(size=(n, 3))
        worst = max(worst, abs(geometry.emd(a, b, method="exact")
                               - _brute_emd(a, b)))
    knn_ok = fps_ok = True
    for _ in range(100):
        n = int(r.integers(10, 201))
        pts = r.normal(size=(n, 3))
        k = int(r.integers(1, 9))
        m = int(r.integers(1, min(n, 12) + 1))
        g = geometry.knn_graph(pts, k)
        knn_ok &= np.array_equal(g.indices, _brute_knn(pts, k))
        fps_ok &= np.array_equal(geometry.fps(pts, m), _brute_fps(pts, m, 0))
    ok = worst < 1e-9 and knn_ok and fps_ok
    _verdict(2, ok, f"emd err {worst:.1e}, knn {knn_ok}, fps {fps_ok}")


# --------------------------------------------------------------- criterion 3
def test_criterion_3_structural_contract():
    gen = Generator(Config(), np.random.default_rng(0))
    clouds = gen.generate(sample_latent(0, 1)[0])
    sizes = [c.shape for c in clouds]
    in_range = all(np.all(np.abs(c) <= 1.0) for c in clouds)
    default_ok = (sizes == [(256, 3), (512, 3), (1024, 3), (2048, 3)]
                  and in_range)

    doubling_ok = True
    for cfg in (tiny_config(),
                Config(latent_dim=6, seed_points=8, seed_width=4,
                       stage_points=(16, 32, 64), stage_widths=(4, 6, 8),
                       k=5, head_widths=(8,),
                       disc_widths=((4,), (4,), (4,)), scorer_hidden=4)):
        gen = Generator(cfg, np.random.default_rng(1))
        outs = gen.forward(Tensor(np.zeros(cfg.latent_dim)))
        prev = cfg.seed_points
        for o in outs:
            doubling_ok &= o.points.shape == (2 * prev, 3)
            prev = o.points.shape[0]
    _verdict(3, default_ok and doubling_ok,
             f"default sizes {[s[0] for s in sizes]}, in [-1,1] {in_range}, "
             f"doubling {doubling_ok}")


# --------------------------------------------------------------- criterion 4
def test_criterion_4_spl_correctness():
    from types import SimpleNamespace

    def outs(*clouds):
        return [SimpleNamespace(points=Tensor(np.asarray(c, float)))
                for c in clouds]

    r = np.random.default_rng(5)
    cloud = r.normal(size=(20, 3))
    identical = spl(outs(cloud, cloud.copy()), centroids=5, k=4).item()

    a = np.zeros((2, 3))
    b = np.zeros((2, 3))
    b[:, 0] = 1.0
    singleton = spl(outs(a, b), centroids=1, k=2).item()

    x = r.normal(size=(16, 3))
    y = r.normal(size=(32, 3))
    base = spl(outs(x, y), centroids=6, k=4).item()
    perm = spl(outs(x[r.permutation(16)], y[r.permutation(32)]),
               centroids=6, k=4).item()

    ok = identical < 1e-9 and abs(singleton - 1.0) < 1e-9 \
        and abs(base - perm) < 1e-12
    _verdict(4, ok, f"identical {identical:.1e}, singleton {singleton!r}, "
                    f"perm delta {abs(base - perm):.1e}")


# --------------------------------------------------------------- criterion 5
def test_criterion_5_metric_sanity():
    r = np.random.default_rng(9)
    ref = [np.clip(r.normal(scale=0.3, size=(8, 3)), -1, 1) for _ in range(4)]
    rep = evaluate_sets([c.copy() for c in ref], ref)
    identical_ok = (rep.jsd == 0.0 and rep.mmd_cd == 0.0 and rep.mmd_emd == 0.0
                    and rep.cov_cd == 1.0 and rep.cov_emd == 1.0
                    and rep.nna_cd == 0.0 and rep.nna_emd == 0.0)

    disjoint = jsd([np.tile([[-0.9, -0.9, -0.9]], (5, 1))],
                   [np.tile([[0.9, 0.9, 0.9]], (5, 1))])
    ln2_ok = abs(disjoint - np.log(2)) < 1e-9

    passes = 0
    for seed in range(5):
        corpus = synth_corpus("sphere", 200, 32, seed)
        acc = one_nna(corpus.clouds[:100], corpus.clouds[100:], "cd")
        if 0.40 <= acc <= 0.60:
            passes += 1
    ok = identical_ok and ln2_ok and passes >= 4
    _verdict(5, ok, f"identical {identical_ok}, ln2 err "
                    f"{abs(disjoint - np.log(2)):.1e}, 1-NNA passes {passes}/5")


# ------------------------------------------------------------ criteria 6 & 7
TOY_ITERATIONS = 1500


def _toy_cfg(seed, **overrides):
    return toy_config(seed=seed, iterations=TOY_ITERATIONS,
                      checkpoint_every=0, **overrides)


def _median_cd(state, refs, n=12):
    zs = sample_latent(12345, n, state.cfg.latent_dim, state.cfg.latent_std)
    vals = []
    for z in zs:
        top = state.generator.generate(z)[-1]
        vals.append(min(geometry.chamfer_distance(top, r) for r in refs))
    return float(np.median(vals))


def _median_spl(state, n=12):
    zs = sample_latent(12345, n, state.cfg.latent_dim, state.cfg.latent_std)
    vals = []
    state.generator.set_training(False)
    for z in zs:
        outs = state.generator.forward(Tensor(z))
        vals.append(spl(outs, state.cfg.spl_centroids,
                        state.cfg.spl_k).item())
    state.generator.set_training(True)
    return float(np.median(vals))


def _run_toy(cfg, tmp_path, tag):
    corpus = prepare_corpus(cfg)
    refs = [c[geometry.fps(c, max(cfg.stage_points), 0)]
            for c in corpus.clouds[:50]]
    state = TrainState.fresh(cfg)
    before = (_median_cd(state, refs), _median_spl(state))
    state = train(cfg, tmp_path / tag, corpus=corpus)
    after = (_median_cd(state, refs), _median_spl(state))
    return state, refs, before, after


def test_criterion_6_toy_training_efficacy(tmp_path):
    t0 = time.time()
    ratios, drops = [], []
    for seed in range(5):
        _, _, (cd0, spl0), (cd1, spl1) = _run_toy(_toy_cfg(seed), tmp_path,
                                                  f"seed{seed}")
        ratios.append(cd1 / cd0)
        drops.append(spl1 - spl0)
        print(f"  seed {seed}: cd {cd0:.3f}->{cd1:.3f} ratio {cd1/cd0:.3f}, "
              f"spl {spl0:.3f}->{spl1:.3f}")
    elapsed = time.time() - t0
    ok = (float(np.median(ratios)) < 0.5 and float(np.median(drops)) < 0.0
          and TOY_ITERATIONS <= 5000 and elapsed < 1800)
    _verdict(6, ok, f"median cd ratio {np.median(ratios):.3f}, median spl "
                    f"change {np.median(drops):+.3f}, {elapsed:.0f}s")


def test_criterion_7_ablation_parity(tmp_path):
    variants = ("shape-preserving", "plain-adversarial",
                "emd-coupled", "cd-coupled")
    reports = {}
    spl_by_variant = {"shape-preserving": [], "plain-adversarial": []}
    for variant in variants:
        seeds = range(5) if variant in spl_by_variant else range(1)
        for seed in seeds:
            cfg = _toy_cfg(seed, loss_variant=variant)
            state, refs, _, _ = _run_toy(cfg, tmp_path, f"{variant}-{seed}")
            if variant in spl_by_variant:
                spl_by_variant[variant].append(_median_spl(state))
            if seed == 0:
                gen = [state.generator.generate(z)[-1] for z in
                       sample_latent(7, 10, cfg.latent_dim, cfg.latent_std)]
                reports[variant] = evaluate_sets(
                    gen, refs[:10], which=("jsd", "mmd_cd", "cov_cd"))
    complete = all(np.isfinite(reports[v].jsd) and
                   np.isfinite(reports[v].mmd_cd) for v in variants)
    spl_med = float(np.median(spl_by_variant["shape-preserving"]))
    plain_med = float(np.median(spl_by_variant["plain-adversarial"]))
    ok = complete and spl_med <= plain_med
    _verdict(7, ok, f"all variants complete {complete}, d1+d2 shape "
                    f"{spl_med:.3f} vs plain {plain_med:.3f}")


# --------------------------------------------------------------- criterion 8
def test_criterion_8_determinism_and_persistence(tmp_path):
    from pointdeconv import cli
    from pointdeconv.checkpoint import load_checkpoint

    cfg = toy_config(iterations=6, checkpoint_every=0, data_count=8, seed=3)
    train(cfg, tmp_path / "a")
    train(cfg, tmp_path / "b")
    logs_ok = filecmp.cmp(tmp_path / "a" / "loss_log.txt",
                          tmp_path / "b" / "loss_log.txt", shallow=False)

    files_ok = True
    for run in ("a", "b"):
        rc = cli.main(["generate", "--checkpoint",
                       str(tmp_path / run / "final.ckpt"), "--count", "2",
                       "--out", str(tmp_path / f"gen_{run}")])
        files_ok &= rc == 0
    for f in sorted((tmp_path / "gen_a").iterdir()):
        files_ok &= filecmp.cmp(f, tmp_path / "gen_b" / f.name, shallow=False)

    # resume must reproduce the unbroken trajectory bitwise
    train(cfg.replace(iterations=3), tmp_path / "split")
    train(cfg, tmp_path / "split",
          resume_from=tmp_path / "split" / "final.ckpt")
    resume_ok = filecmp.cmp(tmp_path / "a" / "loss_log.txt",
                            tmp_path / "split" / "loss_log.txt", shallow=False)
    sa = load_checkpoint(tmp_path / "a" / "final.ckpt")
    sb = load_checkpoint(tmp_path / "split" / "final.ckpt")
    for pa, pb in zip(sa.generator.parameters(), sb.generator.parameters()):
        resume_ok &= bool(np.array_equal(pa.data, pb.data))
    ok = logs_ok and files_ok and resume_ok
    _verdict(8, ok, f"logs {logs_ok}, files {files_ok}, resume {resume_ok}")
