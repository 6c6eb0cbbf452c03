"""Versioned JSON model documents.

A document bundles one forecaster (possibly wrapped in instance
normalization) and optional GCM snapshots. Arrays are stored as shape plus
a flat row-major list; Python's float repr round-trips f64 exactly.
"""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from .data import atomic_write_text
from .errors import SpecError
from .forecasters import DLinearForecaster, Forecaster, LinearForecaster, NormWrapper
from .gcm import Gcm

FORMAT = "tsf-tta-model"
VERSION = 1


def _enc(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": [float(x) for x in a.ravel(order="C")]}


def _dec(d: dict) -> np.ndarray:
    return np.array(d["data"], dtype=np.float64).reshape(d["shape"])


def forecaster_to_dict(model: Forecaster) -> dict:
    if isinstance(model, NormWrapper):
        return {"kind": "norm", "epsilon": model.epsilon, "inner": forecaster_to_dict(model.inner)}
    d = {"kind": model.kind, "L": model.L, "H": model.H}
    if isinstance(model, DLinearForecaster):
        d["kernel"] = model.kernel
    d["params"] = {k: _enc(v) for k, v in model.params().items()}
    return d


def forecaster_from_dict(d: dict) -> Forecaster:
    kind = d.get("kind")
    if kind == "norm":
        return NormWrapper(forecaster_from_dict(d["inner"]), float(d["epsilon"]))
    p = {k: _dec(v) for k, v in d["params"].items()}
    if kind == "linear":
        return LinearForecaster(p["weight"], p["bias"])
    if kind == "dlinear":
        return DLinearForecaster(p["weight_trend"], p["bias_trend"], p["weight_seasonal"], p["bias_seasonal"], int(d["kernel"]))
    raise SpecError(f"unknown forecaster kind {kind!r}")


def gcm_to_dict(g: Gcm) -> dict:
    return {"W": _enc(g.W), "b": _enc(g.b), "alpha": _enc(g.alpha)}


def gcm_from_dict(d: dict) -> Gcm:
    return Gcm(_dec(d["W"]), _dec(d["b"]), _dec(d["alpha"]))


def model_document(model: Forecaster, gcm_in: Gcm | None = None, gcm_out: Gcm | None = None, meta: dict | None = None) -> dict:
    doc = {"format": FORMAT, "version": VERSION, "forecaster": forecaster_to_dict(model)}
    if gcm_in is not None:
        doc["gcm_in"] = gcm_to_dict(gcm_in)
    if gcm_out is not None:
        doc["gcm_out"] = gcm_to_dict(gcm_out)
    if meta:
        doc["meta"] = meta
    return doc


def dumps(model: Forecaster, gcm_in: Gcm | None = None, gcm_out: Gcm | None = None, meta: dict | None = None) -> str:
    return json.dumps(model_document(model, gcm_in, gcm_out, meta)) + "\n"


def loads(text: str) -> tuple[Forecaster, Gcm | None, Gcm | None, dict]:
    doc = json.loads(text)
    if doc.get("format") != FORMAT:
        raise SpecError(f"not a model document (format={doc.get('format')!r})")
    if doc.get("version") != VERSION:
        raise SpecError(f"unsupported model document version {doc.get('version')!r}")
    gin = gcm_from_dict(doc["gcm_in"]) if "gcm_in" in doc else None
    gout = gcm_from_dict(doc["gcm_out"]) if "gcm_out" in doc else None
    return forecaster_from_dict(doc["forecaster"]), gin, gout, doc.get("meta", {})


def save(path: str | os.PathLike, model: Forecaster, gcm_in: Gcm | None = None, gcm_out: Gcm | None = None, meta: dict | None = None) -> None:
    atomic_write_text(path, dumps(model, gcm_in, gcm_out, meta))


def load(path: str | os.PathLike) -> tuple[Forecaster, Gcm | None, Gcm | None, dict]:
    with open(path) as fh:
        return loads(fh.read())


def param_digest(model: Forecaster) -> str:
    """SHA-256 of the serialized forecaster, for frozen-parameter checks."""
    return hashlib.sha256(json.dumps(forecaster_to_dict(model), sort_keys=True).encode()).hexdigest()
