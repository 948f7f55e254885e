"""Versioned JSON checkpoints for a model and its encoder."""

from __future__ import annotations

import json

import numpy as np

from .encoder import ENCODER_PARAMS, Encoder
from .model import PARAM_NAMES, SnldsModel

FORMAT = "switchssm-snlds"
VERSION = 1


class CheckpointError(ValueError):
    """Malformed, foreign or incompatible checkpoint."""


def _pack(a):
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def _unpack(d, name):
    try:
        shape = tuple(int(s) for s in d["shape"])
        a = np.asarray(d["data"], dtype=float)
        return a.reshape(shape)
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"bad array {name!r}: {exc}") from exc


def to_dict(model: SnldsModel, encoder: Encoder | None = None):
    if not model.is_linear:
        raise CheckpointError("models with callable maps cannot be serialized")
    out = {"format": FORMAT, "version": VERSION,
           "model": {n: _pack(getattr(model, n)) for n in PARAM_NAMES}}
    if encoder is not None:
        enc = {n: _pack(getattr(encoder, n)) for n in ENCODER_PARAMS}
        enc["activation"] = encoder.activation
        enc["hz_activation"] = bool(encoder.hz_activation)
        out["encoder"] = enc
    return out


def from_dict(d):
    """Inverse of ``to_dict``; returns ``(model, encoder_or_None)``."""
    if not isinstance(d, dict) or d.get("format") != FORMAT:
        raise CheckpointError("not a switchssm-snlds checkpoint")
    if d.get("version") != VERSION:
        raise CheckpointError(f"checkpoint version {d.get('version')!r}, expected {VERSION}")
    try:
        m = d["model"]
        model = SnldsModel(**{n: _unpack(m[n], n) for n in PARAM_NAMES})
        enc = None
        if "encoder" in d:
            e = d["encoder"]
            enc = Encoder(**{n: _unpack(e[n], n) for n in ENCODER_PARAMS},
                          activation=e.get("activation", "tanh"),
                          hz_activation=bool(e.get("hz_activation", False)))
    except KeyError as exc:
        raise CheckpointError(f"missing field {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(str(exc)) from exc
    return model, enc


def dumps(model, encoder=None):
    return json.dumps(to_dict(model, encoder), sort_keys=True)


def loads(text):
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"invalid JSON: {exc}") from exc
    return from_dict(d)
