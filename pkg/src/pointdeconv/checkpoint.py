"""Versioned checkpoint container: parameters, optimizer and RNG state.

Backed by numpy's .npz (zip of .npy arrays) so round-trips are bit-exact
at float64.
"""

from __future__ import annotations

import json

import numpy as np

from . import config as config_mod
from .training import TrainState

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _named_params(state: TrainState):
    params = {}
    for p in state.generator.parameters():
        params[f"param.{p.name}"] = p
    for d in state.discriminators:
        for p in d.parameters():
            params[f"param.{p.name}"] = p
    if len(params) != len(state.generator.parameters()) + sum(
            len(d.parameters()) for d in state.discriminators):
        raise CheckpointError("duplicate parameter names")
    return params


def save_checkpoint(path, state: TrainState):
    arrays = {
        "meta.version": np.array([FORMAT_VERSION], dtype=np.int64),
        "meta.iteration": np.array([state.iteration], dtype=np.int64),
        "meta.config": np.frombuffer(
            config_mod.serialize(state.cfg).encode(), dtype=np.uint8),
        "meta.rng": np.frombuffer(
            json.dumps(state.rng.bit_generator.state).encode(), dtype=np.uint8),
    }
    for name, p in _named_params(state).items():
        arrays[name] = p.data
    for name, arr in state.generator.state_arrays().items():
        arrays[f"state.{name}"] = arr
    for d in state.discriminators:
        for name, arr in d.state_arrays().items():
            arrays[f"state.{name}"] = arr
    arrays.update(state.adam_g.state_arrays("adam.g"))
    for l, opt in enumerate(state.adam_d):
        arrays.update(opt.state_arrays(f"adam.d{l}"))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> TrainState:
    with np.load(path) as blob:
        arrays = {k: blob[k] for k in blob.files}
    version = int(arrays["meta.version"][0])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    cfg = config_mod.parse(bytes(arrays["meta.config"]).decode())
    state = TrainState.fresh(cfg)
    state.iteration = int(arrays["meta.iteration"][0])
    state.rng.bit_generator.state = json.loads(bytes(arrays["meta.rng"]).decode())
    for name, p in _named_params(state).items():
        if name not in arrays:
            raise CheckpointError(f"checkpoint missing '{name}'")
        p.data = arrays[name].copy()
    bn = {k[len("state."):]: v for k, v in arrays.items() if k.startswith("state.")}
    state.generator.load_state(bn)
    for d in state.discriminators:
        d.load_state(bn)
    state.adam_g.load_state(arrays, "adam.g")
    for l, opt in enumerate(state.adam_d):
        opt.load_state(arrays, f"adam.d{l}")
    return state
