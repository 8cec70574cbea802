"""Binary and text file formats: NDCK checkpoints, NDEV videos, PGM frames, CSV."""
from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .errors import CorruptFileError

NDCK_MAGIC = b"NDCK"
NDEV_MAGIC = b"NDEV"
VERSION = 1


def write_ndck(path, blocks):
    """blocks: ordered mapping name -> array; values stored flat as f64 LE."""
    out = bytearray(NDCK_MAGIC + bytes([VERSION]))
    for name, arr in blocks.items():
        raw = name.encode("utf-8")
        flat = np.ascontiguousarray(np.asarray(arr, dtype="<f8").reshape(-1))
        out += struct.pack("<H", len(raw)) + raw + struct.pack("<I", flat.size) + flat.tobytes()
    Path(path).write_bytes(bytes(out))


def read_ndck(path):
    buf = Path(path).read_bytes()
    if buf[:4] != NDCK_MAGIC:
        raise CorruptFileError(f"{path}: bad checkpoint magic {buf[:4]!r}")
    if len(buf) < 5 or buf[4] != VERSION:
        raise CorruptFileError(f"{path}: unsupported checkpoint version")
    blocks, pos = {}, 5
    try:
        while pos < len(buf):
            (nlen,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos : pos + nlen].decode("utf-8")
            pos += nlen
            (count,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            end = pos + 8 * count
            if end > len(buf):
                raise CorruptFileError(f"{path}: truncated block {name!r}")
            blocks[name] = np.frombuffer(buf[pos:end], dtype="<f8").astype(np.float64)
            pos = end
    except (struct.error, UnicodeDecodeError) as exc:
        raise CorruptFileError(f"{path}: malformed checkpoint ({exc})") from exc
    return blocks


def write_ndev(path, video):
    """video: (T, C, H, W) with pixels in [0, 1], stored as f32 LE."""
    video = np.asarray(video)
    if video.ndim != 4:
        raise ValueError(f"NDEV video must be (T, C, H, W), got {video.shape}")
    header = NDEV_MAGIC + bytes([VERSION]) + struct.pack("<4I", *video.shape)
    Path(path).write_bytes(header + np.ascontiguousarray(video, dtype="<f4").tobytes())


def read_ndev(path):
    buf = Path(path).read_bytes()
    if buf[:4] != NDEV_MAGIC or len(buf) < 21:
        raise CorruptFileError(f"{path}: bad NDEV header")
    if buf[4] != VERSION:
        raise CorruptFileError(f"{path}: unsupported NDEV version {buf[4]}")
    shape = struct.unpack_from("<4I", buf, 5)
    n = int(np.prod(shape))
    if len(buf) != 21 + 4 * n:
        raise CorruptFileError(f"{path}: payload size does not match header {shape}")
    return np.frombuffer(buf[21:], dtype="<f4").reshape(shape).copy()


def quantize(pixels):
    return np.clip(np.round(np.asarray(pixels, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path, image):
    """Binary P5 greymap, maxval 255, value round(pixel * 255)."""
    img = quantize(image)
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes())


def read_pgm(path):
    buf = Path(path).read_bytes()
    parts = buf.split(b"\n", 3)
    if parts[0] != b"P5":
        raise CorruptFileError(f"{path}: not a P5 PGM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
