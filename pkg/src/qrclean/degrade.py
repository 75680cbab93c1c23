"""Synthetic degradation of clean code images.

Composition order is fixed: blur, then noise, then an affine rescale of the
result back onto [0, 1]. Noise is deterministic given the spec's seed, so a
degraded image is a pure function of (clean image, spec).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import convolve2d

from .imgops import DimensionError, Kernel, as_image, normalize_unit_range

BLUR_FAMILIES = ("none", "gaussian", "motion")
NOISE_FAMILIES = ("none", "gaussian", "uniform", "salt_pepper", "speckle")


def gaussian_kernel(size: int, sigma: float) -> Kernel:
    """Rotationally symmetric Gaussian sampled at integer offsets, unit mass."""
    if size < 1 or size % 2 == 0:
        raise DimensionError(f"gaussian kernel size must be odd >= 1, got {size}")
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    half = size // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    xx, yy = np.meshgrid(x, x)
    w = np.exp(-(xx * xx + yy * yy) / (2.0 * sigma * sigma))
    return Kernel(w / w.sum())


def motion_kernel(length: int, angle: float = 30.0) -> Kernel:
    """Anti-aliased line segment of `length` pixels through the kernel center.

    The segment is tilted `angle` degrees counterclockwise from horizontal
    (with y up); a cell's weight is max(0, 1 - distance from its center to
    the segment), renormalized to unit mass. The kernel is embedded in the
    smallest odd square containing the segment.
    """
    if length < 1:
        raise ValueError(f"motion length must be >= 1, got {length}")
    half = (length - 1) / 2.0
    theta = math.radians(angle)
    dx, dy = math.cos(theta), math.sin(theta)
    reach = int(math.ceil(max(abs(half * dx), abs(half * dy)) - 1e-9))
    size = 2 * reach + 1
    # cell (r, c) sits at x = c - reach (rightward), y = reach - r (upward)
    xx, yy = np.meshgrid(
        np.arange(size, dtype=np.float64) - reach,
        reach - np.arange(size, dtype=np.float64),
    )
    t = np.clip(xx * dx + yy * dy, -half, half)
    dist = np.hypot(xx - t * dx, yy - t * dy)
    w = np.maximum(0.0, 1.0 - dist)
    return Kernel(w / w.sum())


@dataclass(frozen=True)
class BlurSpec:
    """Blur family and parameters; `size`/`sigma` for gaussian, `length`/`angle` for motion."""

    family: str
    size: int = 0
    sigma: float = 0.0
    length: int = 0
    angle: float = 30.0

    def __post_init__(self):
        if self.family not in BLUR_FAMILIES:
            raise ValueError(f"unknown blur family {self.family!r}")
        if self.family == "gaussian":
            if self.size < 1 or self.size % 2 == 0:
                raise DimensionError(f"gaussian size must be odd >= 1, got {self.size}")
            if self.sigma <= 0:
                raise ValueError(f"gaussian sigma must be > 0, got {self.sigma}")
        elif self.family == "motion":
            if self.length < 1:
                raise ValueError(f"motion length must be >= 1, got {self.length}")

    @classmethod
    def none(cls) -> "BlurSpec":
        return cls("none")

    @classmethod
    def gaussian(cls, size: int, sigma: float) -> "BlurSpec":
        return cls("gaussian", size=size, sigma=sigma)

    @classmethod
    def motion(cls, length: int, angle: float = 30.0) -> "BlurSpec":
        return cls("motion", length=length, angle=angle)

    def kernel(self) -> Kernel | None:
        if self.family == "none":
            return None
        if self.family == "gaussian":
            return gaussian_kernel(self.size, self.sigma)
        return motion_kernel(self.length, self.angle)

    @classmethod
    def from_string(cls, text: str) -> "BlurSpec":
        """Parse 'none', 'gaussian:SIZE,SIGMA', or 'motion:LENGTH[,ANGLE]'."""
        name, _, args = text.strip().partition(":")
        try:
            if name == "none" and not args:
                return cls.none()
            parts = [p for p in args.split(",") if p]
            if name == "gaussian" and len(parts) == 2:
                return cls.gaussian(int(parts[0]), float(parts[1]))
            if name == "motion" and len(parts) in (1, 2):
                angle = float(parts[1]) if len(parts) == 2 else 30.0
                return cls.motion(int(parts[0]), angle)
        except (ValueError, DimensionError) as exc:
            raise ValueError(f"bad blur spec {text!r}: {exc}") from None
        raise ValueError(f"bad blur spec {text!r}")

    def label(self) -> str:
        if self.family == "none":
            return "none"
        if self.family == "gaussian":
            return f"gaussian:{self.size},{self.sigma:g}"
        return f"motion:{self.length},{self.angle:g}"


@dataclass(frozen=True)
class NoiseSpec:
    """Noise family, single scalar parameter, and RNG seed.

    The parameter means: gaussian -> standard deviation; uniform -> interval
    width a of U[0, a]; salt_pepper -> corruption density; speckle -> variance
    of the zero-mean uniform multiplier.
    """

    family: str
    param: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.family not in NOISE_FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}")
        if self.family == "salt_pepper" and not 0.0 <= self.param <= 1.0:
            raise ValueError(f"salt_pepper density must be in [0, 1], got {self.param}")
        if self.family in ("gaussian", "uniform", "speckle") and self.param < 0:
            raise ValueError(f"{self.family} parameter must be >= 0, got {self.param}")

    def with_seed(self, seed: int) -> "NoiseSpec":
        return replace(self, seed=seed)

    @classmethod
    def from_string(cls, text: str, seed: int = 0) -> "NoiseSpec":
        """Parse 'none', 'gauss:S', 'uni:A', 'sp:D', or 'speckle:V'."""
        name, _, args = text.strip().partition(":")
        aliases = {
            "gauss": "gaussian",
            "gaussian": "gaussian",
            "uni": "uniform",
            "uniform": "uniform",
            "sp": "salt_pepper",
            "salt_pepper": "salt_pepper",
            "speckle": "speckle",
        }
        if name == "none" and not args:
            return cls("none", seed=seed)
        if name in aliases and args:
            try:
                return cls(aliases[name], float(args), seed=seed)
            except ValueError as exc:
                raise ValueError(f"bad noise spec {text!r}: {exc}") from None
        raise ValueError(f"bad noise spec {text!r}")

    def label(self) -> str:
        if self.family == "none":
            return "none"
        short = {"gaussian": "gauss", "uniform": "uni", "salt_pepper": "sp", "speckle": "speckle"}
        return f"{short[self.family]}:{self.param:g}"


@dataclass(frozen=True)
class CorruptionSpec:
    blur: BlurSpec
    noise: NoiseSpec


def apply_blur(z: np.ndarray, blur: BlurSpec) -> np.ndarray:
    """Spatial convolution with a zero-padded boundary; 'none' is the identity."""
    z = as_image(z)
    kernel = blur.kernel()
    if kernel is None:
        return z.copy()
    if kernel.size > min(z.shape):
        raise DimensionError(f"blur kernel size {kernel.size} exceeds image extent {z.shape}")
    return convolve2d(z, kernel.weights, mode="same", boundary="fill", fillvalue=0.0)


def apply_noise(img: np.ndarray, noise: NoiseSpec) -> np.ndarray:
    """Apply the noise operator; deterministic given noise.seed."""
    img = as_image(img)
    if noise.family == "none":
        return img.copy()
    rng = np.random.default_rng(noise.seed)
    if noise.family == "gaussian":
        return img + noise.param * rng.standard_normal(img.shape)
    if noise.family == "uniform":
        return img + noise.param * rng.random(img.shape)
    if noise.family == "salt_pepper":
        # both rasters drawn unconditionally so the stream layout is density-independent
        hits = rng.random(img.shape) < noise.param
        salt = rng.random(img.shape) < 0.5
        return np.where(hits, np.where(salt, 1.0, 0.0), img)
    # speckle: multiplicative zero-mean uniform of prescribed variance
    spread = math.sqrt(3.0 * noise.param)
    eta = spread * (2.0 * rng.random(img.shape) - 1.0)
    return img + img * eta


def corrupt(z: np.ndarray, spec: CorruptionSpec) -> np.ndarray:
    """Blur, add noise, and rescale onto [0, 1]."""
    z = as_image(z)
    if z.min() < 0.0 or z.max() > 1.0:
        raise ValueError("clean input must have values in [0, 1]")
    return normalize_unit_range(apply_noise(apply_blur(z, spec.blur), spec.noise))
