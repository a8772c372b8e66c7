"""Frame buffers and image file output (PPM always, PNG via stdlib zlib).

Pixel layout matches the camera: row 0 is the top image row.  Channels
are float64 in [0, 1] once a render completes; 8-bit quantization
rounds half away from zero via round-half-even of value*255 (numpy
rounding), which keeps file output bit-stable.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np


@dataclass
class FrameBuffer:
    """An (h, w, 4) float64 rgba image plus an optional depth plane."""

    width: int
    height: int
    rgba: np.ndarray = field(default=None)
    depth: np.ndarray | None = None

    def __post_init__(self):
        if self.rgba is None:
            self.rgba = np.zeros((self.height, self.width, 4), dtype=np.float64)
        if self.rgba.shape != (self.height, self.width, 4):
            raise ValueError(f"rgba shape {self.rgba.shape} != {(self.height, self.width, 4)}")

    @classmethod
    def from_gray(cls, img: np.ndarray, alpha: float = 1.0) -> "FrameBuffer":
        h, w = img.shape
        rgba = np.empty((h, w, 4), dtype=np.float64)
        rgba[..., 0] = rgba[..., 1] = rgba[..., 2] = img
        rgba[..., 3] = alpha
        return cls(w, h, rgba)

    def clamped(self) -> np.ndarray:
        return np.clip(self.rgba, 0.0, 1.0)

    def to_u8_rgb(self) -> np.ndarray:
        rgb = self.clamped()[..., :3]
        return np.rint(rgb * 255.0).astype(np.uint8)


def write_ppm(path, fb: FrameBuffer) -> None:
    """Binary P6, 8 bits per channel; byte-exact for identical buffers."""
    rgb = fb.to_u8_rgb()
    with open(path, "wb") as f:
        f.write(f"P6\n{fb.width} {fb.height}\n255\n".encode("ascii"))
        f.write(rgb.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 file back to a (h, w, 3) uint8 array."""
    with open(path, "rb") as f:
        raw = f.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    if fields[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 supported")
    data = np.frombuffer(raw[pos : pos + w * h * 3], dtype=np.uint8)
    if data.size != w * h * 3:
        raise ValueError(f"{path}: truncated pixel data")
    return data.reshape(h, w, 3).copy()


def png_bytes(fb: FrameBuffer) -> bytes:
    """Encode 8-bit RGB PNG deterministically (fixed zlib level, filter 0)."""
    rgb = fb.to_u8_rgb()
    h, w = rgb.shape[:2]
    raw = b"".join(b"\x00" + rgb[y].tobytes() for y in range(h))
    compressed = zlib.compress(raw, 6)

    def chunk(tag: bytes, payload: bytes) -> bytes:
        out = struct.pack(">I", len(payload)) + tag + payload
        return out + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", ihdr)
        + chunk(b"IDAT", compressed)
        + chunk(b"IEND", b"")
    )


def write_png(path, fb: FrameBuffer) -> None:
    with open(path, "wb") as f:
        f.write(png_bytes(fb))


def ncc(a: np.ndarray, b: np.ndarray) -> float:
    """Normalized cross correlation of two equally shaped images."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    if denom == 0:
        return 1.0 if np.allclose(a, b) else 0.0
    return float((a * b).sum() / denom)


def rms(a: np.ndarray, b: np.ndarray) -> float:
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.sqrt(np.mean(d * d)))
