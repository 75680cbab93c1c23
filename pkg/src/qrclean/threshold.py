"""Corner-calibrated binarization.

The threshold is picked from 100 equally spaced candidates spanning the
gray range of the image's known corner, keeping the candidate whose
binarization is closest (corner L2) to the clean corner. Ties go to the
smallest candidate. A per-block variant averages over module-sized cells
before comparing; per-pixel is the default used by the pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imgops import DimensionError, Region, as_image
from .qrgeom import QrGeometry

N_CANDIDATES = 100


@dataclass(frozen=True)
class ThresholdReport:
    candidates: np.ndarray
    scores: np.ndarray
    chosen: float


def _corner_distance(binary_corner: np.ndarray, z_corner: np.ndarray) -> float:
    d = binary_corner - z_corner
    return float(np.sqrt(np.sum(d * d)))


def _calibrate(u2: np.ndarray, z: np.ndarray, c1: Region,
               binarize_corner) -> tuple[float, ThresholdReport]:
    """Scan the candidate grid; binarize_corner(tau) -> corner-restricted binary."""
    ys, xs = c1.slices
    band = u2[ys, xs]
    z_corner = z[ys, xs]
    candidates = np.linspace(float(band.min()), float(band.max()), N_CANDIDATES)
    scores = np.empty(N_CANDIDATES)
    best_i = 0
    for i, tau in enumerate(candidates):
        scores[i] = _corner_distance(binarize_corner(float(tau)), z_corner)
        if scores[i] < scores[best_i]:
            best_i = i
    chosen = float(candidates[best_i])
    return chosen, ThresholdReport(candidates=candidates, scores=scores, chosen=chosen)


def threshold_per_pixel(u2: np.ndarray, z: np.ndarray,
                        c1: Region) -> tuple[np.ndarray, ThresholdReport]:
    """Binarize u2 at the corner-calibrated threshold: white iff value >= tau."""
    u2 = as_image(u2)
    z = as_image(z)
    if u2.shape != z.shape:
        raise DimensionError(f"image shapes differ: {u2.shape} vs {z.shape}")
    c1.check_inside(u2)
    ys, xs = c1.slices
    band = u2[ys, xs]
    chosen, report = _calibrate(u2, z, c1, lambda tau: (band >= tau).astype(np.float64))
    return (u2 >= chosen).astype(np.float64), report


def _block_edges(extent: int, g: QrGeometry) -> np.ndarray:
    """Cut positions of the module-aligned block grid, quiet margin as edge blocks."""
    cuts = [0]
    for k in range(g.modules + 1):
        pos = g.quiet_px + k * g.module_px
        if cuts[-1] < pos < extent:
            cuts.append(pos)
    cuts.append(extent)
    return np.asarray(sorted(set(cuts)), dtype=np.intp)


def threshold_per_block(u2: np.ndarray, z: np.ndarray, c1: Region,
                        g: QrGeometry) -> tuple[np.ndarray, ThresholdReport]:
    """Binarize by block means over module-sized cells, same calibration."""
    u2 = as_image(u2)
    z = as_image(z)
    if u2.shape != z.shape:
        raise DimensionError(f"image shapes differ: {u2.shape} vs {z.shape}")
    if u2.shape != (g.extent, g.extent):
        raise DimensionError(
            f"image extent {u2.shape} does not match geometry extent {g.extent}"
        )
    c1.check_inside(u2)
    rows = _block_edges(u2.shape[0], g)[:-1]
    cols = _block_edges(u2.shape[1], g)[:-1]
    sums = np.add.reduceat(np.add.reduceat(u2, rows, axis=0), cols, axis=1)
    h_sizes = np.diff(np.append(rows, u2.shape[0]))
    w_sizes = np.diff(np.append(cols, u2.shape[1]))
    means = sums / np.outer(h_sizes, w_sizes)

    def painted(tau: float) -> np.ndarray:
        cells = (means >= tau).astype(np.float64)
        return np.repeat(np.repeat(cells, h_sizes, axis=0), w_sizes, axis=1)

    ys, xs = c1.slices
    chosen, report = _calibrate(u2, z, c1, lambda tau: painted(tau)[ys, xs])
    return painted(chosen), report
