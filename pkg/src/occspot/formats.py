"""Bit-exact binary file formats and atomic writes.

All formats are little-endian with a 4-byte ASCII magic and a u32 version:

* ``SPTC`` frame:      magic, version=1, u32 N, u32 d, then N records of
  (f32 x, f32 y, f32 z, d x f32 features).
* ``SPTL`` labels:     magic, version=1, u32 N, N x u8 labels.
* ``SPOG`` grid:       magic, version=1, f32 origin_x, f32 origin_y,
  f32 cell_size, u32 H, u32 W, u8 n_cls, then H*W u8 labels row-major
  (y-major).
* ``SPCK`` checkpoint: magic, version=1, u32 header_len, JSON header
  (shapes, hyperparameters, seed), then a contiguous f32 parameter blob.

Boxes travel as JSON-lines text: one object per line with keys
cx, cy, cz, l, w, h, yaw, vx, vy, class_id, is_dynamic.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

from .cloud import BoxLabel, PointCloud

__all__ = [
    "write_frame", "read_frame",
    "write_labels", "read_labels",
    "write_boxes", "read_boxes",
    "write_grid", "read_grid",
    "write_checkpoint", "read_checkpoint",
    "atomic_write_bytes", "atomic_write_text",
    "FormatError",
]

FRAME_MAGIC = b"SPTC"
LABEL_MAGIC = b"SPTL"
GRID_MAGIC = b"SPOG"
CKPT_MAGIC = b"SPCK"
VERSION = 1

BOX_KEYS = ("cx", "cy", "cz", "l", "w", "h", "yaw", "vx", "vy", "class_id", "is_dynamic")


class FormatError(ValueError):
    """Raised when a file does not match its declared format."""


def atomic_write_bytes(path, data: bytes) -> None:
    """Write `data` to `path` via a temp file + rename; never leaves partials."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _expect(cond: bool, msg: str) -> None:
    if not cond:
        raise FormatError(msg)


# -- frames -----------------------------------------------------------------

def frame_bytes(cloud: PointCloud) -> bytes:
    records = np.concatenate(
        [cloud.xyz.astype("<f4"), cloud.feat.astype("<f4")], axis=1)
    head = FRAME_MAGIC + struct.pack("<III", VERSION, cloud.n, cloud.d)
    return head + records.tobytes()


def write_frame(path, cloud: PointCloud) -> None:
    atomic_write_bytes(path, frame_bytes(cloud))


def read_frame(path) -> PointCloud:
    data = Path(path).read_bytes()
    _expect(data[:4] == FRAME_MAGIC, f"{path}: bad frame magic")
    version, n, d = struct.unpack_from("<III", data, 4)
    _expect(version == VERSION, f"{path}: unsupported frame version {version}")
    _expect(len(data) == 16 + n * (3 + d) * 4, f"{path}: truncated frame body")
    records = np.frombuffer(data, dtype="<f4", offset=16).reshape(n, 3 + d)
    return PointCloud(records[:, :3], records[:, 3:])


# -- labels -----------------------------------------------------------------

def label_bytes(labels: np.ndarray) -> bytes:
    arr = np.asarray(labels)
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise ValueError("labels must fit in u8")
    head = LABEL_MAGIC + struct.pack("<II", VERSION, arr.shape[0])
    return head + arr.astype("<u1").tobytes()


def write_labels(path, labels: np.ndarray) -> None:
    atomic_write_bytes(path, label_bytes(labels))


def read_labels(path) -> np.ndarray:
    data = Path(path).read_bytes()
    _expect(data[:4] == LABEL_MAGIC, f"{path}: bad label magic")
    version, n = struct.unpack_from("<II", data, 4)
    _expect(version == VERSION, f"{path}: unsupported label version {version}")
    body = np.frombuffer(data, dtype=np.uint8, offset=12)
    _expect(body.size == n, f"{path}: truncated label body")
    return body.astype(np.int64)


# -- boxes ------------------------------------------------------------------

def boxes_text(boxes: Sequence[BoxLabel]) -> str:
    lines = []
    for b in boxes:
        obj = {k: getattr(b, k) for k in BOX_KEYS}
        obj["is_dynamic"] = bool(obj["is_dynamic"])
        lines.append(json.dumps(obj, sort_keys=False))
    return "".join(line + "\n" for line in lines)


def write_boxes(path, boxes: Sequence[BoxLabel]) -> None:
    atomic_write_text(path, boxes_text(boxes))


def read_boxes(path) -> list[BoxLabel]:
    out = []
    for i, line in enumerate(Path(path).read_text().splitlines()):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            out.append(BoxLabel(**{k: obj[k] for k in BOX_KEYS}))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}:{i + 1}: bad box record: {exc}") from exc
    return out


# -- occupancy grids ---------------------------------------------------------

def grid_bytes(grid) -> bytes:
    spec = grid.spec
    labels = np.asarray(grid.labels)
    head = GRID_MAGIC + struct.pack(
        "<IfffIIB", VERSION, spec.origin_x, spec.origin_y, spec.cell_size,
        spec.h, spec.w, spec.n_cls)
    return head + labels.astype("<u1").tobytes()


def write_grid(path, grid) -> None:
    atomic_write_bytes(path, grid_bytes(grid))


def read_grid(path):
    from .occupancy import GridSpec, OccupancyGrid  # local import: cycle guard

    data = Path(path).read_bytes()
    _expect(data[:4] == GRID_MAGIC, f"{path}: bad grid magic")
    version, ox, oy, cell, h, w, n_cls = struct.unpack_from("<IfffIIB", data, 4)
    _expect(version == VERSION, f"{path}: unsupported grid version {version}")
    body = np.frombuffer(data, dtype=np.uint8, offset=4 + struct.calcsize("<IfffIIB"))
    _expect(body.size == h * w, f"{path}: truncated grid body")
    # z bounds and densification settings are not part of the wire format;
    # readers get neutral z bounds spanning the default synthetic column.
    spec = GridSpec(origin_x=ox, origin_y=oy, cell_size=cell, h=h, w=w,
                    z_min=-2.0, z_max=4.0, n_cls=n_cls)
    return OccupancyGrid(spec, body.reshape(h, w).astype(np.int64))


# -- checkpoints -------------------------------------------------------------

def checkpoint_bytes(header: dict, blob: np.ndarray) -> bytes:
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    head = CKPT_MAGIC + struct.pack("<II", VERSION, len(payload))
    return head + payload + np.asarray(blob).astype("<f4").tobytes()


def write_checkpoint(path, header: dict, blob: np.ndarray) -> None:
    atomic_write_bytes(path, checkpoint_bytes(header, blob))


def read_checkpoint(path) -> tuple[dict, np.ndarray]:
    data = Path(path).read_bytes()
    _expect(data[:4] == CKPT_MAGIC, f"{path}: bad checkpoint magic")
    version, hlen = struct.unpack_from("<II", data, 4)
    _expect(version == VERSION, f"{path}: unsupported checkpoint version {version}")
    _expect((len(data) - 12 - hlen) % 4 == 0, f"{path}: truncated checkpoint body")
    header = json.loads(data[12:12 + hlen].decode("utf-8"))
    blob = np.frombuffer(data, dtype="<f4", offset=12 + hlen)
    return header, blob.astype(np.float64)
