"""Checkpoint file format.

Layout: the header line ``dagcn-ckpt v1``, one line of JSON metadata
(config, vocabulary sizes, seed, manifest), then the parameter arrays in the
fixed order given by ``model.PARAM_ORDER``. Each array is preceded by its
dims: uint32 LE rank, then rank x uint64 LE dimensions, followed by the
float64 LE row-major payload.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import DataError
from .model import PARAM_ORDER, ModelParams

MAGIC = b"dagcn-ckpt v1\n"


def save_checkpoint(path, meta: dict, params: ModelParams) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(meta, sort_keys=True).encode("utf-8") + b"\n")
        for name in PARAM_ORDER:
            arr = np.ascontiguousarray(getattr(params, name), dtype="<f8")
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes(order="C"))


def load_checkpoint(path) -> tuple[dict, ModelParams]:
    with open(path, "rb") as fh:
        magic = fh.readline()
        if magic != MAGIC:
            raise DataError(f"{path}: not a dagcn-ckpt v1 file")
        meta = json.loads(fh.readline().decode("utf-8"))
        arrays = {}
        for name in PARAM_ORDER:
            raw = fh.read(4)
            if len(raw) != 4:
                raise DataError(f"{path}: truncated before array {name}")
            ndim = struct.unpack("<I", raw)[0]
            dims = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
            count = int(np.prod(dims)) if dims else 1
            payload = fh.read(8 * count)
            if len(payload) != 8 * count:
                raise DataError(f"{path}: truncated payload for array {name}")
            arrays[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
    return meta, ModelParams(**arrays)
