"""JSON checkpoints with bit-exact base64 array payloads."""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from .constant import CHECKPOINT_SCHEMA_VERSION, MODEL_STATEPRED, validate_model_kind
from .core import KoopmanEigen, ParseError
from .data import IndexMap, Scaler
from .nets import MlpSpec
from .StatePred import StatePred, StatePredConfig
from .TrajPred import TrajPred, TrajPredConfig

_DTYPES = {"float64": "<f8", "complex128": "<c16"}


def encode_array(array):
    """``{"shape", "dtype", "data"}`` with little-endian bytes (complex interleaved)."""
    array = np.asarray(array)
    dtype = "complex128" if np.iscomplexobj(array) else "float64"
    raw = np.ascontiguousarray(array, dtype=_DTYPES[dtype]).tobytes()
    return {"shape": list(array.shape), "dtype": dtype, "data": base64.b64encode(raw).decode("ascii")}


def decode_array(payload):
    try:
        name = payload["dtype"]
        dtype = _DTYPES[name]
        raw = base64.b64decode(payload["data"], validate=True)
        array = np.frombuffer(raw, dtype=dtype).reshape(payload["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed array payload: {exc}") from exc
    return array.astype(name)


def _spec_dict(spec):
    return {
        "input_size": spec.input_size,
        "hidden_layer_sizes": list(spec.hidden_layer_sizes),
        "output_size": spec.output_size,
        "activation": spec.activation,
        "use_bias": spec.use_bias,
    }


def checkpoint_dict(model):
    """Serializable state of a trained model."""
    state = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "model_kind": model.kind,
        "config": model.config.to_dict(),
        "encoder": _spec_dict(model.encoder_spec),
        "decoder": _spec_dict(model.decoder_spec),
        "params": {name: encode_array(value) for name, value in model.params.items()},
        "scaler": {"shift": encode_array(model.scaler.shift), "scale": encode_array(model.scaler.scale)},
    }
    if model.kind == MODEL_STATEPRED:
        eigen = model.eigen
        state["koopman"] = {
            "W": encode_array(eigen.W),
            "lam": encode_array(eigen.lam),
            "omega": encode_array(eigen.omega),
            "b": encode_array(eigen.b),
        }
        state["index_map"] = {"t0": model.index_map.t0, "dt": model.index_map.dt}
    else:
        state["num_steps"] = model.num_steps
    return state


def save_checkpoint(model, path):
    """Write ``model`` to ``path``; identical models give identical bytes."""
    text = json.dumps(checkpoint_dict(model), sort_keys=True, indent=1)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_checkpoint(path):
    """Rebuild a trained :class:`StatePred` or :class:`TrajPred` from ``path``."""
    try:
        state = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read checkpoint {path}: {exc}") from exc
    version = state.get("schema_version")
    if version != CHECKPOINT_SCHEMA_VERSION:
        raise ParseError(f"unsupported checkpoint schema version {version!r}; expected {CHECKPOINT_SCHEMA_VERSION}.")
    try:
        kind = validate_model_kind(state["model_kind"])
        encoder = MlpSpec(**state["encoder"])
        decoder = MlpSpec(**state["decoder"])
        params = {name: decode_array(payload) for name, payload in state["params"].items()}
        scaler = Scaler(decode_array(state["scaler"]["shift"]), decode_array(state["scaler"]["scale"]))
        if kind == MODEL_STATEPRED:
            koopman = state["koopman"]
            eigen = KoopmanEigen(
                W=decode_array(koopman["W"]),
                lam=decode_array(koopman["lam"]),
                omega=decode_array(koopman["omega"]),
                b=decode_array(koopman["b"]),
            )
            index_map = IndexMap(float(state["index_map"]["t0"]), float(state["index_map"]["dt"]))
            config = StatePredConfig.from_dict(state["config"])
            return StatePred.restore(config, encoder, decoder, params, eigen, scaler, index_map)
        config = TrajPredConfig.from_dict(state["config"])
        return TrajPred.restore(config, encoder, decoder, params, scaler, int(state["num_steps"]))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"checkpoint {path} is missing {exc}.") from exc


__all__ = ["encode_array", "decode_array", "checkpoint_dict", "save_checkpoint", "load_checkpoint"]
