"""Blur-kernel estimation from the known upper-left corner.

The full-size estimate minimizes a Tikhonov-type objective,
(1/2) * |grad phi|^2 + (lambda1/2) * ||phi * z - u1||^2, over the
mirror-extended corner with periodic boundary, solved exactly in the
Fourier domain. The corner-sized result is then truncated to each odd
candidate size and the size whose kernel best re-blurs the clean code over
the corner is kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imgops import (
    DimensionError,
    Kernel,
    Region,
    as_image,
    convolve_periodic,
    l2_dist_on,
    mirror_extend,
)


@dataclass(frozen=True)
class PsfEstimateConfig:
    """candidate_sizes=None means every odd size up to the corner extent."""

    lambda1: float = 10000.0
    candidate_sizes: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.lambda1 < 0:
            raise ValueError(f"lambda1 must be >= 0, got {self.lambda1}")
        if self.candidate_sizes is not None:
            if not self.candidate_sizes:
                raise ValueError("candidate size list must be non-empty")
            if any(s < 1 or s % 2 == 0 for s in self.candidate_sizes):
                raise ValueError(f"candidate sizes must be odd >= 1: {self.candidate_sizes}")


def laplacian_symbol(shape: tuple[int, int]) -> np.ndarray:
    """Symbol of the negated 5-point periodic Laplacian: 4 - 2cos - 2cos, >= 0."""
    h, w = shape
    wk = 2.0 * np.pi * np.fft.fftfreq(w)
    wl = 2.0 * np.pi * np.fft.fftfreq(h)
    return (4.0 - 2.0 * np.cos(wl)[:, None] - 2.0 * np.cos(wk)[None, :])


def solve_periodic(u1_ext: np.ndarray, z_ext: np.ndarray, lambda1: float) -> np.ndarray:
    """Exact periodic-domain minimizer, origin-aligned (no recentering)."""
    u1_ext = as_image(u1_ext)
    z_ext = as_image(z_ext)
    if u1_ext.shape != z_ext.shape:
        raise DimensionError(f"shapes differ: {u1_ext.shape} vs {z_ext.shape}")
    if lambda1 < 0:
        raise ValueError(f"lambda1 must be >= 0, got {lambda1}")
    z_hat = np.fft.fft2(z_ext)
    u_hat = np.fft.fft2(u1_ext)
    denom = laplacian_symbol(u1_ext.shape) + lambda1 * np.abs(z_hat) ** 2
    phi_hat = lambda1 * u_hat * np.conj(z_hat) / denom
    return np.real(np.fft.ifft2(phi_hat))


def estimate_psf_full(u1_corner: np.ndarray, z_corner: np.ndarray,
                      lambda1: float) -> np.ndarray:
    """Corner-sized kernel estimate, centered, possibly with negative lobes.

    Both corners are normalized to unit mass, mirror-extended, solved
    periodically, and the result is recentered and cropped back to corner
    size. lambda1 = 0 degenerates to the flat kernel (the roughness term
    alone does not determine a shape).
    """
    u1_corner = as_image(u1_corner)
    z_corner = as_image(z_corner)
    if u1_corner.shape != z_corner.shape:
        raise DimensionError(
            f"corner shapes differ: {u1_corner.shape} vs {z_corner.shape}"
        )
    if lambda1 < 0:
        raise ValueError(f"lambda1 must be >= 0, got {lambda1}")
    h, w = u1_corner.shape
    if lambda1 == 0:
        return np.full((h, w), 1.0 / (h * w))
    mass_u = float(u1_corner.sum())
    mass_z = float(z_corner.sum())
    if mass_u <= 0 or mass_z <= 0:
        raise ValueError("corners must have positive mass")
    phi_ext = solve_periodic(
        mirror_extend(u1_corner / mass_u),
        mirror_extend(z_corner / mass_z),
        lambda1,
    )
    # the solution is origin-aligned with wraparound; move the origin to the
    # crop's center so truncation windows are symmetric around the peak
    return np.roll(phi_ext, (h // 2, w // 2), axis=(0, 1))[:h, :w]


def truncate_and_normalize(phi_full: np.ndarray, size: int) -> Kernel:
    """Keep the center size x size block, clamp negatives, renormalize."""
    phi_full = as_image(phi_full)
    h, w = phi_full.shape
    if size < 1 or size % 2 == 0:
        raise DimensionError(f"truncation size must be odd >= 1, got {size}")
    half = size // 2
    cy, cx = h // 2, w // 2
    if cy - half < 0 or cx - half < 0 or cy + half >= h or cx + half >= w:
        raise DimensionError(f"size {size} does not fit centered in {w}x{h}")
    block = np.maximum(phi_full[cy - half:cy + half + 1, cx - half:cx + half + 1], 0.0)
    total = float(block.sum())
    if total <= 0:
        raise ValueError(f"degenerate kernel: no positive mass in the center {size}x{size}")
    return Kernel(block / total)


def default_sizes(corner_extent: int) -> tuple[int, ...]:
    """All odd sizes from 1 up to the largest that fits centered in the corner."""
    top = corner_extent if corner_extent % 2 == 1 else corner_extent - 1
    return tuple(range(1, top + 1, 2))


def residual_score(phi: Kernel, z: np.ndarray, u1: np.ndarray, c1: Region) -> float:
    """Squared corner L2 distance between the re-blurred clean code and u1."""
    return l2_dist_on(convolve_periodic(z, phi), u1, c1) ** 2


def _select_best(candidates: list[tuple[int, Kernel]], z: np.ndarray,
                 u1: np.ndarray, c1: Region) -> tuple[Kernel, list[tuple[int, float]]]:
    scores: list[tuple[int, float]] = []
    best: Kernel | None = None
    best_score = np.inf
    for size, kern in candidates:
        s = residual_score(kern, z, u1, c1)
        scores.append((size, s))
        if s < best_score:
            best, best_score = kern, s
    if best is None:
        raise ValueError("no usable candidate kernel")
    return best, scores


def select_kernel(phi_full: np.ndarray, z: np.ndarray, u1: np.ndarray, c1: Region,
                  cfg: PsfEstimateConfig = PsfEstimateConfig()) -> Kernel:
    """Best truncation of the full estimate, scored on the corner; ties go small."""
    kern, _ = select_kernel_scored(phi_full, z, u1, c1, cfg)
    return kern


def select_kernel_scored(phi_full: np.ndarray, z: np.ndarray, u1: np.ndarray,
                         c1: Region, cfg: PsfEstimateConfig = PsfEstimateConfig(),
                         ) -> tuple[Kernel, list[tuple[int, float]]]:
    """As select_kernel, also returning (size, squared residual) per candidate."""
    phi_full = as_image(phi_full)
    sizes = cfg.candidate_sizes or default_sizes(min(phi_full.shape))
    candidates = []
    for size in sorted(sizes):
        try:
            candidates.append((size, truncate_and_normalize(phi_full, size)))
        except ValueError:
            continue  # all-nonpositive center block at this size
    if not candidates:
        raise ValueError("every candidate size gives a degenerate kernel")
    return _select_best(candidates, z, u1, c1)


def uniform_psf(z: np.ndarray, u1: np.ndarray, c1: Region,
                sizes: tuple[int, ...] | None = None) -> Kernel:
    """Best flat (constant) kernel over the candidate sizes, same scoring.

    Implemented as size selection over the flat corner-sized field, the
    lambda1 = 0 degenerate output of estimate_psf_full, so the two agree
    exactly.
    """
    if sizes is not None and not sizes:
        raise ValueError("candidate size list must be non-empty")
    flat = np.full((c1.h, c1.w), 1.0 / (c1.h * c1.w))
    cfg = PsfEstimateConfig(lambda1=0.0, candidate_sizes=tuple(sizes) if sizes else None)
    return select_kernel(flat, z, u1, c1, cfg)
