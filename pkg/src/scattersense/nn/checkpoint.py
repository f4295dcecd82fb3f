"""Binary parameter checkpoints.

Layout (little-endian): magic ``CSIY``, u32 version, u32 config length +
UTF-8 JSON config echo, u32 array count, then per array: u32 name length,
UTF-8 name, u32 rank, u32 dims, float32 data in row-major order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from scattersense.nn.detector import DetectorConfig, Params

MAGIC = b"CSIY"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: Params, config: DetectorConfig, extra: dict | None = None) -> None:
    echo = {"detector": config.to_dict()}
    if extra:
        echo.update(extra)
    blob = json.dumps(echo, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC + struct.pack("<II", VERSION, len(blob)) + blob)
        f.write(struct.pack("<I", len(params)))
        for name, arr in params.items():
            nb = name.encode()
            f.write(struct.pack("<I", len(nb)) + nb)
            f.write(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[Params, DetectorConfig, dict]:
    """Return (params, detector config, full config echo)."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, n = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    pos = 12
    echo = json.loads(data[pos : pos + n])
    pos += n
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    params: Params = {}
    for _ in range(count):
        (ln,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos : pos + ln].decode()
        pos += ln
        (rank,) = struct.unpack_from("<I", data, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}I", data, pos)
        pos += 4 * rank
        size = int(np.prod(dims)) if rank else 1
        params[name] = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(dims).astype(np.float32)
        pos += 4 * size
    if pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - pos} trailing bytes")
    return params, DetectorConfig.from_dict(echo["detector"]), echo
