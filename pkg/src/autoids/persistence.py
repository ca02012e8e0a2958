"""Binary model file for a stacked ensemble.

Layout (all integers little-endian)::

    b"AIDS" | u32 schema version | u64 header length | header JSON (UTF-8)
    | array payload | 32-byte SHA-256 of everything before it

The header describes every array by dtype, shape and payload offset, so the
file is self-describing. The version is checked before anything else is
parsed, then the digest, then the header.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from .autofe import FeatureSelection
from .ensemble import StackedEnsemble
from .errors import DigestError, PersistenceError, VersionError
from .trees import TrainedModel, Tree

MAGIC = b"AIDS"
SCHEMA_VERSION = 1
_PREFIX = struct.Struct("<4sIQ")
_DIGEST_LEN = 32
_TREE_FIELDS = ("feature", "threshold", "left", "right", "value")


class _ArrayWriter:
    def __init__(self):
        self.chunks: list[bytes] = []
        self.offset = 0

    def add(self, arr) -> dict:
        arr = np.asarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = np.ascontiguousarray(le).tobytes()
        desc = {"dtype": le.dtype.str, "shape": list(arr.shape), "offset": self.offset, "nbytes": len(raw)}
        self.chunks.append(raw)
        self.offset += len(raw)
        return desc


def _read_array(payload: memoryview, desc: dict) -> np.ndarray:
    start, nbytes = int(desc["offset"]), int(desc["nbytes"])
    if start < 0 or start + nbytes > len(payload):
        raise PersistenceError("array extends past the payload")
    dtype = np.dtype(desc["dtype"])
    arr = np.frombuffer(payload[start:start + nbytes], dtype=dtype).reshape(desc["shape"])
    return arr.astype(dtype.newbyteorder("="), copy=True)


def _model_header(m: TrainedModel, w: _ArrayWriter) -> dict:
    return {
        "family": m.family,
        "params": m.params,
        "n_features": m.n_features,
        "n_classes": m.n_classes,
        "learning_rate": m.learning_rate,
        "seed": m.seed,
        "importances": w.add(m.importances),
        "init_score": None if m.init_score is None else w.add(m.init_score),
        "trees": [{f: w.add(getattr(t, f)) for f in _TREE_FIELDS} for t in m.trees],
    }


def _model_from_header(h: dict, payload: memoryview) -> TrainedModel:
    trees = [Tree(*(_read_array(payload, t[f]) for f in _TREE_FIELDS)) for t in h["trees"]]
    init = None if h["init_score"] is None else _read_array(payload, h["init_score"])
    return TrainedModel(h["family"], dict(h["params"]), int(h["n_features"]), int(h["n_classes"]), trees,
                        _read_array(payload, h["importances"]), float(h["learning_rate"]), init, int(h["seed"]))


def dumps(e: StackedEnsemble, config: dict | None = None) -> bytes:
    """Serialize ``e`` (plus an optional config snapshot) to bytes."""
    w = _ArrayWriter()
    sel = e.selected_features
    header = {
        "class_names": e.class_names,
        "feature_names": e.feature_names,
        "meta_feature_mode": e.meta_feature_mode,
        "meta_family": e.meta_family,
        "selection": {"selected": sel.selected, "cumulative": sel.cumulative, "alpha": sel.alpha,
                      "fallback": sel.fallback, "importances": sel.importances},
        "base_models": [_model_header(m, w) for m in e.base_models],
        "meta_model": _model_header(e.meta_model, w),
        "config": config if config is not None else e.config,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")
    body = _PREFIX.pack(MAGIC, SCHEMA_VERSION, len(head)) + head + b"".join(w.chunks)
    return body + hashlib.sha256(body).digest()


def loads(blob: bytes) -> StackedEnsemble:
    blob = bytes(blob)
    if len(blob) < _PREFIX.size:
        raise PersistenceError(f"model file truncated: {len(blob)} bytes")
    magic, version, head_len = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise PersistenceError(f"not a model file (magic {magic!r})")
    if version != SCHEMA_VERSION:
        raise VersionError(f"model file schema version {version}, this build reads version {SCHEMA_VERSION}")
    if len(blob) < _PREFIX.size + head_len + _DIGEST_LEN:
        raise PersistenceError("model file truncated")
    body, digest = blob[:-_DIGEST_LEN], blob[-_DIGEST_LEN:]
    if hashlib.sha256(body).digest() != digest:
        raise DigestError("model file digest mismatch: file is corrupted")
    try:
        header = json.loads(body[_PREFIX.size:_PREFIX.size + head_len].decode("utf-8"))
        payload = memoryview(body)[_PREFIX.size + head_len:]
        s = header["selection"]
        selection = FeatureSelection([int(i) for i in s["selected"]], float(s["cumulative"]), float(s["alpha"]),
                                     bool(s["fallback"]), [float(v) for v in s["importances"]])
        return StackedEnsemble(
            [_model_from_header(h, payload) for h in header["base_models"]],
            _model_from_header(header["meta_model"], payload),
            header["meta_family"], selection, header["class_names"], header["feature_names"],
            header["meta_feature_mode"], header.get("config") or {},
        )
    except PersistenceError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise PersistenceError(f"malformed model header: {exc}") from exc


def file_digest(path) -> str:
    """Hex of the trailing content digest."""
    data = Path(path).read_bytes()
    if len(data) < _DIGEST_LEN:
        raise PersistenceError("model file truncated")
    return data[-_DIGEST_LEN:].hex()


def save_model(e: StackedEnsemble, path, config: dict | None = None) -> str:
    """Write atomically; returns the hex digest."""
    path = Path(path)
    blob = dumps(e, config)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_bytes(blob)
        os.replace(tmp, path)
    except OSError as exc:
        tmp.unlink(missing_ok=True)
        raise PersistenceError(f"cannot write model file {path}: {exc}") from exc
    return blob[-_DIGEST_LEN:].hex()


def load_model(path) -> StackedEnsemble:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise PersistenceError(f"cannot read model file {path}: {exc}") from exc
    return loads(data)
