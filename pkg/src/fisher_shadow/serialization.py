"""JSON forms of operators and POVMs, plus config hashing."""

from __future__ import annotations

import hashlib
import json
from typing import Any

import numpy as np

from .measurement import Povm


def op_to_json(op: np.ndarray) -> dict[str, Any]:
    a = np.asarray(op, dtype=complex)
    return {"dim": int(a.shape[0]), "re": a.real.tolist(), "im": a.imag.tolist()}


def op_from_json(obj: dict[str, Any]) -> np.ndarray:
    a = np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj.get("im", 0.0), dtype=float)
    if a.shape != (obj["dim"], obj["dim"]):
        raise ValueError(f"operator shape {a.shape} does not match dim {obj['dim']}")
    return a


def _label(x: Any) -> Any:
    return list(map(_label, x)) if isinstance(x, tuple) else x


def _unlabel(x: Any) -> Any:
    return tuple(map(_unlabel, x)) if isinstance(x, list) else x


def povm_to_json(povm: Povm) -> dict[str, Any]:
    return {
        "dim": povm.dim,
        "copies": povm.copies,
        "labels": [_label(lab) for lab in povm.labels],
        "name": povm.name,
        "elements": [
            {"re": e.real.tolist(), "im": e.imag.tolist()} for e in povm.elements
        ],
    }


def povm_from_json(obj: dict[str, Any]) -> Povm:
    els = np.array([np.asarray(e["re"]) + 1j * np.asarray(e["im"]) for e in obj["elements"]])
    return Povm(
        els,
        int(obj["dim"]),
        copies=int(obj.get("copies", 1)),
        labels=tuple(_unlabel(x) for x in obj.get("labels", [])),
        name=obj.get("name", ""),
    )


def config_hash(config: Any) -> str:
    """SHA-256 of the canonical JSON form of ``config``."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def to_jsonable(x: Any) -> Any:
    """Recursively convert numpy values and non-finite floats for ``json.dump``."""
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return to_jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        v = float(x)
        if v != v:
            return "nan"
        if v in (float("inf"), float("-inf")):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    return x
