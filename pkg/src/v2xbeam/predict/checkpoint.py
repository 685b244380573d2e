"""Model checkpoint files.

Layout: ``b"V2XBEAM-CK\\n"``, a little-endian uint64 header length, a JSON
header (model kind, architecture, dataset and W'_P hashes, seed, parameter
order and shapes), then every parameter as little-endian float64 in the
declared order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..dataset import write_atomic
from .bct import BctClassifier
from .vdban import VdbanModel, VdbanSpec, param_shapes, AZIMUTH_SCALE

MAGIC = b"V2XBEAM-CK\n"


def _pack(header: dict, params: list[tuple[str, np.ndarray]]) -> bytes:
    header = dict(header)
    header["params"] = [[name, list(np.shape(v))] for name, v in params]
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for _, v in params)
    return MAGIC + struct.pack("<Q", len(head)) + head + body


def _unpack(data: bytes) -> tuple[dict, dict]:
    if not data.startswith(MAGIC):
        raise ValueError("not a v2xbeam checkpoint")
    off = len(MAGIC)
    (n,) = struct.unpack_from("<Q", data, off)
    off += 8
    header = json.loads(data[off:off + n])
    off += n
    params = {}
    for name, shape in header["params"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape)
        params[name] = arr.astype(np.float64)
        off += 8 * count
    if off != len(data):
        raise ValueError("checkpoint body size does not match its header")
    return header, params


def save_vdban(path, model: VdbanModel, meta: dict) -> None:
    header = {"kind": "vdban", "spec": model.spec.to_dict(), "dtype": model.dtype.name,
              "loc_offset": model.loc_offset.tolist(), "loc_scale": model.loc_scale.tolist(),
              "azimuth_scale": AZIMUTH_SCALE, **meta}
    write_atomic(path, _pack(header, [(n, model.params[n]) for n, _ in param_shapes(model.spec)]))


def save_bct(path, model: BctClassifier, meta: dict) -> None:
    header = {"kind": "bct", "n_in": model.n_in, "hidden": model.hidden, **meta}
    write_atomic(path, _pack(header, [(n, model.params[n]) for n in ("W1", "b1", "W2", "b2")]))


def load(path):
    """Returns ``(header, model)`` for either checkpoint kind."""
    header, params = _unpack(Path(path).read_bytes())
    if header["kind"] == "vdban":
        s = header["spec"]
        spec = VdbanSpec(G=s["G"], n_out=s["n_out"], dims=tuple(s["dims"]),
                         key_dims=tuple(s["key_dims"]), heads=s["heads"], ff_dim=s["ff_dim"],
                         head=tuple(s["head"]))
        model = VdbanModel(spec, params, header["loc_offset"], header["loc_scale"],
                           np.dtype(header["dtype"]))
    elif header["kind"] == "bct":
        model = BctClassifier(header["n_in"], header["hidden"], params)
    else:
        raise ValueError(f"unknown checkpoint kind {header['kind']!r}")
    return header, model
