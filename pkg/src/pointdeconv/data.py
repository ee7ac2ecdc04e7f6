"""Point cloud file formats, normalization and synthetic corpora.

Two on-disk formats:
  * ASCII XYZ: one whitespace-separated `x y z` triple per line
  * PCF1: little-endian binary, magic b"PCF1", uint64 point count,
    then 3N float32 coordinates
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    pass


@dataclass
class NormalizationRecord:
    centroid: np.ndarray
    scale: float


@dataclass
class Corpus:
    names: list = field(default_factory=list)
    clouds: list = field(default_factory=list)
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.clouds)


# ------------------------------------------------------------------ formats
def load_xyz(path) -> np.ndarray:
    rows = []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise DataError(f"{path}: line {lineno}: expected 3 values, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise DataError(f"{path}: line {lineno}: malformed number") from None
    if not rows:
        raise DataError(f"{path}: no points")
    return np.asarray(rows, dtype=np.float64)


def save_xyz(path, cloud: np.ndarray):
    cloud = np.asarray(cloud, dtype=np.float64)
    with open(path, "w") as fh:
        for x, y, z in cloud:
            # repr of a Python float round-trips bit-exactly
            fh.write(f"{float(x)!r} {float(y)!r} {float(z)!r}\n")


_PCF_MAGIC = b"PCF1"


def load_pcf1(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != _PCF_MAGIC:
        raise DataError(f"{path}: byte 0: bad magic {raw[:4]!r}")
    if len(raw) < 12:
        raise DataError(f"{path}: byte 4: truncated header")
    (n,) = struct.unpack("<Q", raw[4:12])
    need = 12 + 12 * n
    if len(raw) < need:
        raise DataError(f"{path}: byte {len(raw)}: truncated payload, need {need} bytes")
    pts = np.frombuffer(raw[12:need], dtype="<f4").reshape(n, 3)
    return pts.astype(np.float64)


def save_pcf1(path, cloud: np.ndarray):
    cloud = np.asarray(cloud, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(_PCF_MAGIC)
        fh.write(struct.pack("<Q", cloud.shape[0]))
        fh.write(cloud.astype("<f4").tobytes())


def load_cloud(path, fmt: str = None) -> np.ndarray:
    path = Path(path)
    if fmt is None:
        fmt = "pcf1" if path.suffix == ".pcf" else "xyz"
    if fmt == "xyz":
        return load_xyz(path)
    if fmt == "pcf1":
        return load_pcf1(path)
    raise DataError(f"unknown format '{fmt}'")


def load_directory(path) -> Corpus:
    """All .xyz/.pcf files in a directory, sorted by name."""
    path = Path(path)
    files = sorted(p for p in path.iterdir() if p.suffix in (".xyz", ".pcf"))
    if not files:
        raise DataError(f"{path}: no .xyz or .pcf files")
    corpus = Corpus()
    for f in files:
        corpus.names.append(f.name)
        corpus.clouds.append(load_cloud(f))
        corpus.records.append(None)
    return corpus


# -------------------------------------------------------------- normalization
def normalize(cloud: np.ndarray):
    """Center on the centroid and scale into the unit ball."""
    cloud = np.asarray(cloud, dtype=np.float64)
    if cloud.shape[0] < 1:
        raise DataError("cannot normalize an empty cloud")
    centroid = cloud.mean(axis=0)
    centered = cloud - centroid
    scale = float(np.linalg.norm(centered, axis=1).max())
    if scale == 0.0:
        scale = 1.0
    return centered / scale, NormalizationRecord(centroid=centroid, scale=scale)


def denormalize(cloud: np.ndarray, record: NormalizationRecord) -> np.ndarray:
    return np.asarray(cloud, dtype=np.float64) * record.scale + record.centroid


# ------------------------------------------------------------ synthetic data
def _sample_sphere(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _sample_plane(rng, n):
    pts = np.zeros((n, 3))
    pts[:, :2] = rng.uniform(-1.0, 1.0, size=(n, 2))
    return pts


def _sample_two_clusters(rng, n):
    half = n // 2
    a = rng.normal(scale=0.15, size=(half, 3)) + np.array([-0.6, 0.0, 0.0])
    b = rng.normal(scale=0.15, size=(n - half, 3)) + np.array([0.6, 0.0, 0.0])
    return np.clip(np.concatenate([a, b]), -1.0, 1.0)


_SYNTH = {"sphere": _sample_sphere, "plane": _sample_plane,
          "two-clusters": _sample_two_clusters}


def synth_corpus(kind: str, n_clouds: int, points: int, seed: int) -> Corpus:
    """Reproducible synthetic shape corpus for tests and toy training."""
    if kind not in _SYNTH:
        raise DataError(f"unknown synthetic kind '{kind}' (have {sorted(_SYNTH)})")
    rng = np.random.default_rng(seed)
    corpus = Corpus()
    sampler = _SYNTH[kind]
    for i in range(n_clouds):
        cloud = sampler(rng, points)
        corpus.names.append(f"{kind}_{i:05d}")
        corpus.clouds.append(cloud)
        corpus.records.append(NormalizationRecord(centroid=np.zeros(3), scale=1.0))
    return corpus
