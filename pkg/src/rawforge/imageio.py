"""PNG/PGM reading and writing plus atomic file output."""

from __future__ import annotations

import contextlib
import io
import os
import tempfile
from pathlib import Path

import numpy as np
import png

from .errors import RawForgeError


@contextlib.contextmanager
def atomic_write(path, mode: str = "wb"):
    """Write to a temp file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if "b" in mode else {"encoding": "utf-8", "newline": "\n"})) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def quantize(values: np.ndarray, bit_depth: int) -> np.ndarray:
    """Clip to [0, 1] and round to unsigned integers of ``bit_depth`` bits."""
    if bit_depth not in (8, 16):
        raise RawForgeError(f"unsupported bit depth {bit_depth}")
    maxval = (1 << bit_depth) - 1
    q = np.rint(np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0) * maxval)
    return q.astype(np.uint8 if bit_depth == 8 else np.uint16)


def encode_png(samples: np.ndarray) -> bytes:
    """Encode a uint8/uint16 array of shape (H, W) or (H, W, C), C in {1, 3}."""
    samples = np.asarray(samples)
    if samples.dtype not in (np.uint8, np.uint16):
        raise RawForgeError(f"PNG samples must be uint8 or uint16, got {samples.dtype}")
    if samples.ndim == 3 and samples.shape[2] == 1:
        samples = samples[:, :, 0]
    if samples.ndim == 2:
        h, w = samples.shape
        greyscale = True
    elif samples.ndim == 3 and samples.shape[2] == 3:
        h, w = samples.shape[:2]
        greyscale = False
    else:
        raise RawForgeError(f"cannot encode array of shape {samples.shape} as PNG")
    bitdepth = 8 if samples.dtype == np.uint8 else 16
    writer = png.Writer(width=w, height=h, greyscale=greyscale, bitdepth=bitdepth)
    buf = io.BytesIO()
    writer.write(buf, samples.reshape(h, -1).tolist())
    return buf.getvalue()


def write_png(path, samples: np.ndarray) -> None:
    data = encode_png(samples)
    with atomic_write(path) as fh:
        fh.write(data)


def decode_png(data: bytes) -> np.ndarray:
    """Decode PNG bytes to uint8/uint16 (H, W) or (H, W, 3); alpha is dropped."""
    try:
        w, h, rows, info = png.Reader(bytes=data).asDirect()
        arr = np.array([np.asarray(r) for r in rows])
    except png.Error as exc:
        raise RawForgeError(f"cannot decode PNG: {exc}") from None
    planes = info["planes"]
    arr = arr.reshape(h, w, planes)
    if info["greyscale"]:
        arr = arr[:, :, 0]
    else:
        arr = arr[:, :, :3]
    return arr.astype(np.uint16 if info["bitdepth"] > 8 else np.uint8)


def read_png(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_png(fh.read())


def decode_pgm(data: bytes) -> np.ndarray:
    """Binary PGM (P5). 16-bit samples are big-endian per the netpbm format."""
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise RawForgeError("truncated PGM header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    if fields[0] != b"P5":
        raise RawForgeError("not a binary PGM (P5) file")
    try:
        w, h, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise RawForgeError("malformed PGM header") from None
    if not (0 < maxval < 65536):
        raise RawForgeError(f"invalid PGM maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    nbytes = w * h * dtype.itemsize
    if len(data) - pos < nbytes:
        raise RawForgeError("truncated PGM data")
    arr = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return arr.astype(np.uint16 if maxval > 255 else np.uint8)


def encode_pgm(samples: np.ndarray) -> bytes:
    samples = np.asarray(samples)
    if samples.ndim != 2 or samples.dtype not in (np.uint8, np.uint16):
        raise RawForgeError("PGM needs a 2-D uint8 or uint16 array")
    maxval = 255 if samples.dtype == np.uint8 else 65535
    h, w = samples.shape
    body = samples.astype(">u2").tobytes() if maxval > 255 else samples.tobytes()
    return f"P5\n{w} {h}\n{maxval}\n".encode("ascii") + body


def read_raw(path) -> np.ndarray:
    """Read a single-channel raw mosaic from 16-bit PNG or PGM as uint16."""
    path = Path(path)
    data = path.read_bytes()
    arr = decode_pgm(data) if data[:2] == b"P5" else decode_png(data)
    if arr.ndim != 2:
        raise RawForgeError(f"{path}: raw input must be single-channel")
    return arr.astype(np.uint16)


def read_normalized(path) -> np.ndarray:
    """Read an 8/16-bit PNG as float64 in [0, 1]."""
    arr = read_png(path)
    maxval = 255.0 if arr.dtype == np.uint8 else 65535.0
    return arr.astype(np.float64) / maxval
