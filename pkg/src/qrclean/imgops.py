"""Core raster operations shared by the restoration pipeline.

Images are plain 2D float64 arrays (rows = y, columns = x), nominally in
[0, 1] although intermediate stages may leave that range. All functions
are pure: inputs are never mutated.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image


class DimensionError(ValueError):
    """Raised when image/kernel/region extents are incompatible."""


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangle inside an image: offsets (x0, y0), extents (w, h)."""

    x0: int
    y0: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise DimensionError(f"region extents must be >= 1, got {self.w}x{self.h}")
        if self.x0 < 0 or self.y0 < 0:
            raise DimensionError(f"region offsets must be >= 0, got ({self.x0}, {self.y0})")

    @property
    def slices(self) -> tuple[slice, slice]:
        return slice(self.y0, self.y0 + self.h), slice(self.x0, self.x0 + self.w)

    def check_inside(self, img: np.ndarray) -> None:
        hh, ww = img.shape
        if self.y0 + self.h > hh or self.x0 + self.w > ww:
            raise DimensionError(
                f"region {self} does not fit inside {ww}x{hh} image"
            )


MASS_TOL = 1e-12


@dataclass(frozen=True)
class Kernel:
    """Square convolution kernel: odd size, non-negative weights, unit mass."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DimensionError(f"kernel must be square, got shape {w.shape}")
        if w.shape[0] % 2 == 0:
            raise DimensionError(f"kernel size must be odd, got {w.shape[0]}")
        if np.any(w < 0):
            raise ValueError("kernel weights must be non-negative")
        if abs(float(w.sum()) - 1.0) > MASS_TOL:
            raise ValueError(f"kernel mass must be 1 within {MASS_TOL}, got {w.sum()!r}")
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.weights.shape[0]


def as_image(values, copy: bool = False) -> np.ndarray:
    """Validate and coerce to a 2D float64 image array."""
    img = np.array(values, dtype=np.float64, copy=copy) if copy else np.asarray(values, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise DimensionError(f"image must be 2D and non-empty, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains NaN or Inf")
    return img


def embed_kernel(kernel: Kernel, shape: tuple[int, int]) -> np.ndarray:
    """Zero-pad a kernel to `shape` with its center moved to index (0, 0).

    This is the layout under which FFT multiplication realizes circular
    convolution with the kernel centered on each output pixel, so a delta
    kernel acts as the identity.
    """
    n = kernel.size
    h, w = shape
    if n > h or n > w:
        raise DimensionError(f"kernel size {n} exceeds image extent {w}x{h}")
    padded = np.zeros(shape, dtype=np.float64)
    padded[:n, :n] = kernel.weights
    return np.roll(padded, (-(n // 2), -(n // 2)), axis=(0, 1))


def convolve_periodic(img: np.ndarray, kernel: Kernel) -> np.ndarray:
    """Circular (periodic) convolution via the DFT, kernel centered."""
    img = as_image(img)
    k = embed_kernel(kernel, img.shape)
    out = np.fft.irfft2(np.fft.rfft2(img) * np.fft.rfft2(k), s=img.shape)
    if not np.all(np.isfinite(out)):
        raise ValueError("convolution produced non-finite values")
    return out


def mirror_extend(img: np.ndarray) -> np.ndarray:
    """Even reflection in both axes: output is 2h x 2w, original in the top-left quadrant."""
    img = as_image(img)
    h, w = img.shape
    return np.pad(img, ((0, h), (0, w)), mode="symmetric")


def center_crop(img: np.ndarray, region: Region) -> np.ndarray:
    """Exact sub-raster copy of `region` from `img`."""
    img = as_image(img)
    region.check_inside(img)
    ys, xs = region.slices
    return img[ys, xs].copy()


def grad_neumann(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences in x and y with replicate padding (zero across the boundary)."""
    img = as_image(img)
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, :-1] = img[:, 1:] - img[:, :-1]
    gy[:-1, :] = img[1:, :] - img[:-1, :]
    return gx, gy


def div_neumann(px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Discrete divergence, the negative adjoint of `grad_neumann`.

    The last column of px / last row of py is structurally ignored, matching
    the zero terminal difference of the gradient.
    """
    if px.shape != py.shape:
        raise DimensionError(f"component shapes differ: {px.shape} vs {py.shape}")
    out = np.zeros_like(px)
    out[:, :-1] += px[:, :-1]
    out[:, 1:] -= px[:, :-1]
    out[:-1, :] += py[:-1, :]
    out[1:, :] -= py[:-1, :]
    return out


def l2_dist_on(img_a: np.ndarray, img_b: np.ndarray, region: Region) -> float:
    """sqrt of the pixel-sum of squared differences over `region`."""
    a = as_image(img_a)
    b = as_image(img_b)
    if a.shape != b.shape:
        raise DimensionError(f"image shapes differ: {a.shape} vs {b.shape}")
    region.check_inside(a)
    ys, xs = region.slices
    d = a[ys, xs] - b[ys, xs]
    return float(np.sqrt(np.sum(d * d)))


def normalize_unit_range(img: np.ndarray) -> np.ndarray:
    """Affine map of [min, max] onto [0, 1]; a constant image maps to all zeros."""
    img = as_image(img)
    vmin = float(img.min())
    vmax = float(img.max())
    if vmax == vmin:
        return np.zeros_like(img)
    return (img - vmin) / (vmax - vmin)


# ---------------------------------------------------------------------------
# Image file I/O: 8-bit grayscale PNG and binary PGM (P5, maxval 255 or 65535).
# ---------------------------------------------------------------------------

def _quantize(img: np.ndarray, maxval: int) -> np.ndarray:
    clipped = np.clip(img, 0.0, 1.0)
    return np.floor(clipped * maxval + 0.5).astype(np.uint16 if maxval > 255 else np.uint8)


def write_image(path, img: np.ndarray) -> None:
    """Write a [0,1] image as 8-bit grayscale PNG or binary PGM, rounding half up."""
    img = as_image(img)
    path = str(path)
    data = _quantize(img, 255)
    if path.lower().endswith(".pgm"):
        _write_pgm(path, data, 255)
    else:
        Image.fromarray(data, mode="L").save(path, format="PNG")


def read_image(path) -> np.ndarray:
    """Read a grayscale PNG or binary PGM and map sample values onto [0, 1]."""
    path = str(path)
    if path.lower().endswith(".pgm"):
        data, maxval = _read_pgm(path)
        return data.astype(np.float64) / maxval
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    return arr / 255.0


def _write_pgm(path: str, data: np.ndarray, maxval: int) -> None:
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        if maxval > 255:
            fh.write(struct.pack(f">{h * w}H", *data.astype(np.uint16).ravel()))
        else:
            fh.write(data.astype(np.uint8).tobytes())


def _read_pgm(path: str) -> tuple[np.ndarray, int]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    # header: magic, width, height, maxval; '#' comments allowed between tokens
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(t) for t in tokens)
    count = w * h
    if maxval > 255:
        data = np.frombuffer(raw, dtype=">u2", count=count, offset=pos).astype(np.uint16)
    else:
        data = np.frombuffer(raw, dtype=np.uint8, count=count, offset=pos)
    return data.reshape(h, w), maxval


def write_kernel(path, kernel: Kernel) -> None:
    """Write kernel weights as a 16-bit PGM scaled so the peak weight is maxval."""
    w = kernel.weights
    peak = float(w.max())
    if peak <= 0:
        raise ValueError("kernel has no positive weights")
    data = np.floor(w / peak * 65535 + 0.5).astype(np.uint16)
    _write_pgm(str(path), data, 65535)


def read_kernel(path) -> Kernel:
    """Read a kernel written by `write_kernel`, renormalizing to unit mass."""
    data, maxval = _read_pgm(str(path))
    w = data.astype(np.float64) / maxval
    total = float(w.sum())
    if total <= 0:
        raise ValueError(f"{path}: kernel file sums to zero")
    return Kernel(w / total)
