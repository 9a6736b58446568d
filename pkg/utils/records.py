"""
On-disk formats: binary radar cube files and JSON-lines logs.

Cube file: a sequence of frame records, each a 64-byte little-endian header
followed by complex64 samples in (sample, chirp, channel) order, channel
fastest.
"""
import json
import logging
import struct
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

from models.radar import RadarParams
from utils.datacube import RadarCube
from utils.errors import DataError

logger = logging.getLogger(__name__)

CUBE_MAGIC = b"GTRK"
CUBE_VERSION = 1
CUBE_HEADER = struct.Struct("<4s5I5d")  # 64 bytes


def encode_cube(cube: RadarCube) -> bytes:
    p = cube.params
    header = CUBE_HEADER.pack(
        CUBE_MAGIC, CUBE_VERSION,
        p.samples_per_chirp, p.chirps_per_frame, p.n_virtual_channels, cube.frame_index,
        p.carrier_frequency, p.sweep_bandwidth, p.chirp_repetition_interval,
        p.frame_rate, p.element_spacing,
    )
    return header + np.ascontiguousarray(cube.data, dtype=np.complex64).tobytes(order="C")


def write_cubes(path: str | Path, cubes: Iterable[RadarCube]) -> int:
    n = 0
    with open(path, "wb") as fh:
        for cube in cubes:
            fh.write(encode_cube(cube))
            n += 1
    return n


def iter_cubes(path: str | Path, base: Optional[RadarParams] = None) -> Iterator[RadarCube]:
    """Yield the frames of a cube file in order; parameters not in the header come from `base`."""
    base = base or RadarParams()
    with open(path, "rb") as fh:
        while True:
            head = fh.read(CUBE_HEADER.size)
            if not head:
                return
            if len(head) < CUBE_HEADER.size:
                raise DataError(f"{path}: truncated cube header")
            (magic, version, samples, chirps, channels, frame_index,
             carrier, bandwidth, cri, frame_rate, spacing) = CUBE_HEADER.unpack(head)
            if magic != CUBE_MAGIC:
                raise DataError(f"{path}: bad magic {magic!r}")
            if version != CUBE_VERSION:
                raise DataError(f"{path}: unsupported cube version {version}")
            params = base.model_copy(update={
                "samples_per_chirp": samples, "chirps_per_frame": chirps,
                "n_virtual_channels": channels, "carrier_frequency": carrier,
                "sweep_bandwidth": bandwidth, "chirp_repetition_interval": cri,
                "frame_rate": frame_rate, "element_spacing": spacing,
            })
            n_bytes = samples * chirps * channels * np.dtype(np.complex64).itemsize
            payload = fh.read(n_bytes)
            if len(payload) < n_bytes:
                raise DataError(f"{path}: truncated payload in frame {frame_index}")
            data = np.frombuffer(payload, dtype=np.complex64).reshape(samples, chirps, channels)
            yield RadarCube(data=data.astype(np.complex128), frame_index=frame_index, params=params)


def write_jsonl(path: str | Path, records: Iterable[dict]) -> int:
    n = 0
    with open(path, "w") as fh:
        for record in records:
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")
            n += 1
    return n


def read_jsonl(path: str | Path) -> Iterator[dict]:
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{line_no}: invalid JSON ({e.msg})") from e
