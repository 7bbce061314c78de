"""Linear-space RGB image buffers and binary PPM (P6) serialization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ImageBuffer:
    """Row-major RGB image with linear-space real values.

    ``data`` has shape ``(height, width, 3)``; all values must be finite.
    """

    width: int
    height: int
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != (self.height, self.width, 3):
            raise ValueError(
                f"data shape {self.data.shape} does not match "
                f"(height={self.height}, width={self.width}, 3)"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("image data must be finite")

    @classmethod
    def from_array(cls, data: np.ndarray) -> "ImageBuffer":
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValueError(f"expected an (H, W, 3) array, got shape {data.shape}")
        return cls(width=data.shape[1], height=data.shape[0], data=data)


def as_image_array(image) -> np.ndarray:
    """Accept an ImageBuffer or a raw (H, W, 3) array and return the array."""
    if isinstance(image, ImageBuffer):
        return image.data
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) array, got shape {arr.shape}")
    return arr


def quantize_unit(values: np.ndarray) -> np.ndarray:
    """Map [0, 1] linear values to 8-bit with round-half-up."""
    clipped = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.floor(clipped * 255.0 + 0.5).astype(np.uint8)


def write_ppm(image, path) -> None:
    """Write a binary PPM (P6, 8-bit); values are linearly mapped from [0, 1]."""
    data = as_image_array(image)
    height, width = data.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        fh.write(quantize_unit(data).tobytes())


def read_ppm(path) -> ImageBuffer:
    """Read a binary PPM (P6, 8-bit) back into linear [0, 1] values."""
    with open(path, "rb") as fh:
        raw = fh.read()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":  # comment line
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    if fields[0] != b"P6":
        raise ValueError(f"not a binary PPM: magic {fields[0]!r}")
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"only 8-bit PPM supported, got maxval {maxval}")
    pixels = np.frombuffer(raw[pos : pos + width * height * 3], dtype=np.uint8)
    data = pixels.reshape(height, width, 3).astype(np.float64) / 255.0
    return ImageBuffer(width=width, height=height, data=data)


# Piecewise-linear false-color map used for scalar fields (e.g. uncertainty
# landscapes). Breakpoints at t = 0, 0.25, 0.5, 0.75, 1 map to dark blue,
# cyan, green, yellow, red.
FALSE_COLOR_BREAKPOINTS = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
FALSE_COLOR_COLORS = np.array(
    [
        [0.0, 0.0, 0.4],
        [0.0, 0.6, 1.0],
        [0.0, 0.9, 0.3],
        [1.0, 0.9, 0.0],
        [0.9, 0.1, 0.0],
    ]
)


def false_color(values: np.ndarray) -> np.ndarray:
    """Map a 2D scalar field to RGB via the documented breakpoints.

    Values are min-max normalized first; a constant field maps to the t = 0
    color.
    """
    v = np.asarray(values, dtype=np.float64)
    lo, hi = float(v.min()), float(v.max())
    t = np.zeros_like(v) if hi <= lo else (v - lo) / (hi - lo)
    rgb = np.empty(v.shape + (3,), dtype=np.float64)
    for ch in range(3):
        rgb[..., ch] = np.interp(t, FALSE_COLOR_BREAKPOINTS, FALSE_COLOR_COLORS[:, ch])
    return rgb
