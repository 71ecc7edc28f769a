"""Flat binary tensor container with a plain-text index header.

Layout:

    polarfuse-tensors v1 <n_records>\n
    <name> <dim0,dim1,...|-> <element_offset> <element_count>\n   (n times)
    ---\n
    <raw little-endian float64 blob>

Names must not contain whitespace. `-` marks a zero-dimensional record.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

MAGIC = "polarfuse-tensors"
VERSION = "v1"
_SEP = b"---\n"


def _shape_str(shape: tuple[int, ...]) -> str:
    return ",".join(str(d) for d in shape) if shape else "-"


def _parse_shape(text: str) -> tuple[int, ...]:
    return () if text == "-" else tuple(int(d) for d in text.split(","))


def save_tensors(arrays: dict[str, np.ndarray], path: str | Path):
    path = Path(path)
    header = [f"{MAGIC} {VERSION} {len(arrays)}"]
    blobs = []
    offset = 0
    for name, arr in arrays.items():
        if any(ch.isspace() for ch in name):
            raise ValueError(f"tensor name may not contain whitespace: {name!r}")
        arr = np.asarray(arr, dtype=np.float64)
        header.append(f"{name} {_shape_str(arr.shape)} {offset} {arr.size}")
        blobs.append(arr.astype("<f8").tobytes())
        offset += arr.size
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(_SEP)
        for blob in blobs:
            f.write(blob)


def load_tensors(path: str | Path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    sep = raw.find(_SEP)
    if sep < 0:
        raise ValueError(f"{path}: missing header separator")
    lines = raw[:sep].decode("ascii").splitlines()
    magic = lines[0].split()
    if len(magic) != 3 or magic[0] != MAGIC or magic[1] != VERSION:
        raise ValueError(f"{path}: bad container header {lines[0]!r}")
    count = int(magic[2])
    if len(lines) - 1 != count:
        raise ValueError(f"{path}: header promises {count} records, has {len(lines) - 1}")
    blob = np.frombuffer(raw[sep + len(_SEP):], dtype="<f8")
    out: dict[str, np.ndarray] = {}
    for line in lines[1:]:
        name, shape_s, off_s, cnt_s = line.split()
        offset, cnt = int(off_s), int(cnt_s)
        shape = _parse_shape(shape_s)
        out[name] = np.array(blob[offset:offset + cnt], dtype=np.float64).reshape(shape)
    return out
