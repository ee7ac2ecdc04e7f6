"""Flat key=value configuration with typed schema and validation."""

from __future__ import annotations


class ConfigError(ValueError):
    pass


def _parse_bool(s: str) -> bool:
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: '{s}'")


def _parse_intlist(s: str):
    s = s.strip()
    return tuple(int(t) for t in s.split(",")) if s else ()


def _parse_intgrid(s: str):
    return tuple(_parse_intlist(part) for part in s.split(";") if part.strip())


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ";".join(",".join(str(i) for i in row) for row in value)
        return ",".join(str(i) for i in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


_PARSERS = {"int": int, "float": float, "bool": _parse_bool, "str": str,
            "intlist": _parse_intlist, "intgrid": _parse_intgrid}

# name -> (type, default)
SCHEMA = {
    # generator
    "latent_dim": ("int", 128),
    "latent_std": ("float", 0.2),
    "seed_points": ("int", 128),
    "seed_width": ("int", 16),
    "stage_points": ("intlist", (256, 512, 1024, 2048)),
    "stage_widths": ("intlist", (32, 64, 128, 256)),
    "k": ("int", 20),
    "beta": ("float", 1.0),
    "head_widths": ("intlist", (512, 256, 64)),
    "head_gain": ("float", 1.0),
    "head_spread": ("float", 0.0),
    "region_hidden": ("intlist", ()),
    "separate_region_mlps": ("bool", False),
    "batchnorm": ("bool", True),
    # discriminator
    "disc_widths": ("intgrid", ((32, 64, 128), (64, 128, 256),
                                (64, 128, 512), (64, 128, 256, 512))),
    "scorer_hidden": ("int", 128),
    # training
    "lam": ("float", 0.1),
    "loss_variant": ("str", "shape-preserving"),
    "non_saturating": ("bool", False),
    "spl_centroids": ("int", 64),
    "spl_k": ("int", 20),
    "spl_stop_gradient_finer": ("bool", False),
    "batch_size": ("int", 32),
    "iterations": ("int", 1000),
    "lr": ("float", 1e-4),
    "lr_disc": ("float", 0.0),       # 0: same as lr
    "adam_beta1": ("float", 0.9),
    "adam_beta2": ("float", 0.999),
    "adam_eps": ("float", 1e-8),
    "seed": ("int", 0),
    "checkpoint_every": ("int", 500),
    # data
    "data_kind": ("str", "sphere"),
    "data_path": ("str", ""),
    "data_count": ("int", 200),
    "data_points": ("int", 0),       # 0: use the top stage resolution
    # metrics
    "jsd_grid": ("int", 28),
    "fps_seed": ("int", 0),
}

_VARIANTS = ("shape-preserving", "plain-adversarial", "emd-coupled", "cd-coupled")
_DATA_KINDS = ("sphere", "plane", "two-clusters", "dir")


class Config:
    def __init__(self, **overrides):
        self._values = {k: default for k, (_, default) in SCHEMA.items()}
        for k, v in overrides.items():
            if k not in SCHEMA:
                raise ConfigError(f"unknown config key '{k}'")
            self._values[k] = v
        validate(self)

    def __getattr__(self, name):
        values = object.__getattribute__(self, "_values")
        if name in values:
            return values[name]
        raise AttributeError(name)

    def replace(self, **overrides) -> "Config":
        merged = dict(self._values)
        merged.update(overrides)
        return Config(**merged)

    def as_dict(self) -> dict:
        return dict(self._values)

    def __eq__(self, other):
        return isinstance(other, Config) and self._values == other._values


def validate(cfg: Config):
    pts = cfg.stage_points
    if len(pts) < 2:
        raise ConfigError("need at least 2 resolution stages")
    if len(pts) != len(cfg.stage_widths):
        raise ConfigError("stage_points and stage_widths must align")
    for a, b in zip(pts[:-1], pts[1:]):
        if b != 2 * a:
            raise ConfigError(f"stage point counts must double: {a} -> {b}")
    if pts[0] != 2 * cfg.seed_points:
        raise ConfigError("first stage must double seed_points")
    if any(w % 2 for w in cfg.stage_widths):
        raise ConfigError("stage widths must be even (local/global split)")
    if cfg.k < 1 or cfg.k >= cfg.seed_points:
        raise ConfigError(f"k={cfg.k} must satisfy 1 <= k < seed_points")
    if cfg.beta <= 0:
        raise ConfigError("beta must be positive")
    if cfg.lam < 0:
        raise ConfigError("lam must be non-negative")
    if cfg.loss_variant not in _VARIANTS:
        raise ConfigError(f"loss_variant must be one of {_VARIANTS}")
    if cfg.data_kind not in _DATA_KINDS:
        raise ConfigError(f"data_kind must be one of {_DATA_KINDS}")
    if len(cfg.disc_widths) != len(pts):
        raise ConfigError("disc_widths needs one stack per resolution")
    if cfg.spl_k < 2:
        raise ConfigError("spl_k must be >= 2 (covariance denominator)")
    if cfg.spl_centroids < 1:
        raise ConfigError("spl_centroids must be >= 1")
    if cfg.batch_size < 1 or cfg.iterations < 0:
        raise ConfigError("batch_size >= 1 and iterations >= 0 required")
    if cfg.latent_std <= 0:
        raise ConfigError("latent_std must be positive")
    if cfg.head_gain <= 0:
        raise ConfigError("head_gain must be positive")


def parse(text: str) -> Config:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got '{line}'")
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown config key '{key}'")
        kind, _ = SCHEMA[key]
        try:
            values[key] = _PARSERS[kind](raw)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"line {lineno}: bad value for '{key}': {exc}") from None
    return Config(**values)


def serialize(cfg: Config) -> str:
    lines = [f"{k} = {_fmt(cfg.as_dict()[k])}" for k in SCHEMA]
    return "\n".join(lines) + "\n"


def load(path) -> Config:
    with open(path) as fh:
        return parse(fh.read())


def save(path, cfg: Config):
    with open(path, "w") as fh:
        fh.write(serialize(cfg))


def toy_config(**overrides) -> Config:
    """Small desk-scale defaults used by the toy experiments and tests."""
    base = dict(
        latent_dim=8, seed_points=16, seed_width=4,
        stage_points=(32, 64), stage_widths=(8, 16),
        k=4, head_widths=(32, 16),
        disc_widths=((16, 32), (16, 32)), scorer_hidden=16,
        spl_centroids=8, spl_k=4, batch_size=4,
        lr=1e-3, lr_disc=1e-4, non_saturating=True,
        head_gain=4.0, head_spread=1.25,
        data_count=200, iterations=400,
    )
    base.update(overrides)
    return Config(**base)
