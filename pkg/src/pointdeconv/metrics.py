"""Set-level generative evaluation metrics: JSD, MMD, COV and 1-NNA."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import geometry


class MetricError(ValueError):
    pass


@dataclass
class MetricReport:
    jsd: float = float("nan")
    mmd_cd: float = float("nan")
    mmd_emd: float = float("nan")
    cov_cd: float = float("nan")
    cov_emd: float = float("nan")
    nna_cd: float = float("nan")
    nna_emd: float = float("nan")

    # display-scaled copies following the usual reporting convention:
    # JSD and MMD-EMD x100, MMD-CD x1000
    def display(self) -> dict:
        out = {}
        for f in fields(self):
            out[f.name] = getattr(self, f.name)
        out["jsd_x100"] = self.jsd * 1e2
        out["mmd_cd_x1000"] = self.mmd_cd * 1e3
        out["mmd_emd_x100"] = self.mmd_emd * 1e2
        return out


def _cloud_distance(a, b, kind: str) -> float:
    if kind == "cd":
        return geometry.chamfer_distance(a, b, squared=True)
    if kind == "emd":
        return geometry.emd(a, b)
    raise MetricError(f"unknown distance kind '{kind}'")


def cross_distance_matrix(gen, ref, kind: str) -> np.ndarray:
    if not gen or not ref:
        raise MetricError("empty cloud set")
    out = np.empty((len(gen), len(ref)))
    for i, g in enumerate(gen):
        for j, r in enumerate(ref):
            out[i, j] = _cloud_distance(g, r, kind)
    return out


# ---------------------------------------------------------------------- JSD
def voxel_histogram(clouds, grid: int) -> np.ndarray:
    """Pooled occupancy histogram of all points on a grid^3 lattice over [-1,1]^3."""
    counts = np.zeros(grid ** 3)
    edges = np.linspace(-1.0, 1.0, grid + 1)
    for cloud in clouds:
        cloud = np.asarray(cloud, dtype=np.float64)
        cell = np.clip(np.searchsorted(edges, cloud, side="right") - 1, 0, grid - 1)
        flat = cell[:, 0] * grid * grid + cell[:, 1] * grid + cell[:, 2]
        np.add.at(counts, flat, 1.0)
    return counts / counts.sum()


def jsd(gen, ref, grid: int = 28, smoothing: float = 1e-12) -> float:
    """Jensen-Shannon divergence (natural log) of pooled voxel occupancies."""
    if not gen or not ref:
        raise MetricError("empty cloud set")
    p = voxel_histogram(gen, grid)
    q = voxel_histogram(ref, grid)
    # smooth empty cells only; occupied masses stay untouched so identical
    # sets give exactly 0 and disjoint single voxels give ln 2
    p[p == 0.0] = smoothing
    q[q == 0.0] = smoothing
    m = 0.5 * (p + q)
    kl_pm = np.sum(p * np.log(p / m))
    kl_qm = np.sum(q * np.log(q / m))
    return float(0.5 * kl_pm + 0.5 * kl_qm)


# ------------------------------------------------------------ MMD, COV, 1-NNA
def mmd(gen, ref, kind: str = "cd", dmat: np.ndarray = None) -> float:
    """Mean over reference clouds of the minimum distance to any generated cloud."""
    if dmat is None:
        dmat = cross_distance_matrix(gen, ref, kind)
    return float(dmat.min(axis=0).mean())


def cov(gen, ref, kind: str = "cd", dmat: np.ndarray = None) -> float:
    """Fraction of reference clouds matched by at least one generated cloud."""
    if dmat is None:
        dmat = cross_distance_matrix(gen, ref, kind)
    matched = np.unique(np.argmin(dmat, axis=1))
    return float(matched.size / dmat.shape[1])


def one_nna(gen, ref, kind: str = "cd") -> float:
    """Leave-one-out 1-NN two-sample classification accuracy (ideal 0.5).

    Ties break toward the other set, so element-wise identical sets score 0.
    """
    if len(gen) + len(ref) < 2:
        raise MetricError("1-NNA needs at least two clouds in the union")
    clouds = list(gen) + list(ref)
    labels = np.array([0] * len(gen) + [1] * len(ref))
    n = len(clouds)
    dmat = np.full((n, n), np.inf)
    for i in range(n):
        for j in range(i + 1, n):
            d = _cloud_distance(clouds[i], clouds[j], kind)
            dmat[i, j] = d
            dmat[j, i] = d
    correct = 0
    for i in range(n):
        row = dmat[i]
        best = row.min()
        cand = np.flatnonzero(row == best)
        # prefer a nearest neighbor from the other set when tied
        other = cand[labels[cand] != labels[i]]
        nn = other[0] if other.size else cand[0]
        correct += int(labels[nn] == labels[i])
    return correct / n


def evaluate_sets(gen, ref, which=("jsd", "mmd_cd", "mmd_emd", "cov_cd",
                                   "cov_emd", "nna_cd", "nna_emd"),
                  grid: int = 28) -> MetricReport:
    """Compute the requested metrics, sharing distance matrices across them."""
    report = MetricReport()
    dmats = {}
    for kind in ("cd", "emd"):
        if any(w.endswith(kind) for w in which if w.startswith(("mmd", "cov"))):
            dmats[kind] = cross_distance_matrix(gen, ref, kind)
    if "jsd" in which:
        report.jsd = jsd(gen, ref, grid=grid)
    for kind in ("cd", "emd"):
        if f"mmd_{kind}" in which:
            setattr(report, f"mmd_{kind}", mmd(gen, ref, kind, dmat=dmats[kind]))
        if f"cov_{kind}" in which:
            setattr(report, f"cov_{kind}", cov(gen, ref, kind, dmat=dmats[kind]))
        if f"nna_{kind}" in which:
            setattr(report, f"nna_{kind}", one_nna(gen, ref, kind))
    return report
