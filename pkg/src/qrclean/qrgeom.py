"""QR symbol geometry.

Provides the a-priori-known structure of a QR code: the upper-left corner
region used for calibration, and the mask of required patterns (finders,
separators, timing lines, the single alignment pattern of versions 2-6, and
the quiet zone) whose pixel values are fixed by the standard regardless of
payload. Module coordinates are (row, col) from the symbol's top-left;
images carry an extra quiet-zone margin in pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imgops import DimensionError, Region, as_image


@dataclass(frozen=True)
class QrGeometry:
    """Pixel layout of a rendered code: module size, module count, quiet margin."""

    module_px: int
    modules: int
    quiet_px: int

    def __post_init__(self):
        if self.module_px < 1:
            raise DimensionError(f"module_px must be >= 1, got {self.module_px}")
        if self.modules < 21 or self.modules % 4 != 1:
            raise DimensionError(
                f"modules per side must be 21, 25, 29, ... got {self.modules}"
            )
        if self.quiet_px < 0:
            raise DimensionError(f"quiet_px must be >= 0, got {self.quiet_px}")

    @property
    def version(self) -> int:
        return (self.modules - 17) // 4

    @property
    def symbol_px(self) -> int:
        return self.modules * self.module_px

    @property
    def extent(self) -> int:
        return self.symbol_px + 2 * self.quiet_px

    @classmethod
    def for_version(cls, version: int, module_px: int = 8, quiet_modules: int = 4) -> "QrGeometry":
        if version < 1:
            raise DimensionError(f"version must be >= 1, got {version}")
        return cls(module_px=module_px, modules=17 + 4 * version,
                   quiet_px=quiet_modules * module_px)


@dataclass(frozen=True)
class PatternMask:
    """known: True where the clean pixel value is fixed a priori; values: those pixels."""

    known: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.known.shape != self.values.shape:
            raise DimensionError(
                f"mask shapes differ: {self.known.shape} vs {self.values.shape}"
            )


def finder_modules() -> np.ndarray:
    """7x7 boolean finder pattern, True = dark."""
    f = np.zeros((7, 7), dtype=bool)
    f[0, :] = f[6, :] = f[:, 0] = f[:, 6] = True
    f[2:5, 2:5] = True
    return f


def alignment_modules() -> np.ndarray:
    """5x5 boolean alignment pattern, True = dark."""
    a = np.zeros((5, 5), dtype=bool)
    a[0, :] = a[4, :] = a[:, 0] = a[:, 4] = True
    a[2, 2] = True
    return a


def module_level_mask(g: QrGeometry) -> tuple[np.ndarray, np.ndarray]:
    """(known, dark) boolean rasters at module resolution, quiet zone excluded."""
    if g.version > 6:
        raise DimensionError(
            f"version {g.version} has multiple alignment patterns; versions 1-6 supported"
        )
    n = g.modules
    known = np.zeros((n, n), dtype=bool)
    dark = np.zeros((n, n), dtype=bool)
    fin = finder_modules()
    # finders with their 1-module separators: known 8x8 corner blocks
    known[:8, :8] = True
    dark[:7, :7] = fin
    known[:8, n - 8:] = True
    dark[:7, n - 7:] = fin
    known[n - 8:, :8] = True
    dark[n - 7:, :7] = fin
    # timing lines between the finders, dark at even module indices
    span = np.arange(8, n - 8)
    known[6, span] = True
    dark[6, span] = span % 2 == 0
    known[span, 6] = True
    dark[span, 6] = span % 2 == 0
    if g.version >= 2:
        c = n - 7  # single alignment pattern of versions 2-6
        known[c - 2:c + 3, c - 2:c + 3] = True
        dark[c - 2:c + 3, c - 2:c + 3] = alignment_modules()
    return known, dark


def render_modules(dark: np.ndarray, module_px: int, quiet_px: int) -> np.ndarray:
    """Rasterize a boolean module grid (True = dark) with a white quiet margin."""
    dark = np.asarray(dark, dtype=bool)
    if dark.ndim != 2:
        raise DimensionError(f"module grid must be 2D, got shape {dark.shape}")
    cells = np.where(dark, 0.0, 1.0)
    body = np.kron(cells, np.ones((module_px, module_px)))
    return np.pad(body, quiet_px, mode="constant", constant_values=1.0)


def required_pattern_mask(g: QrGeometry) -> PatternMask:
    """Pixel-resolution mask of all a-priori-known pixels and their values."""
    known_mod, dark_mod = module_level_mask(g)
    scale = np.ones((g.module_px, g.module_px), dtype=bool)
    known = np.pad(np.kron(known_mod, scale), g.quiet_px,
                   mode="constant", constant_values=True)
    values = render_modules(dark_mod, g.module_px, g.quiet_px)
    return PatternMask(known=known, values=values)


def c1_region(g: QrGeometry, include_quiet: bool = True) -> Region:
    """The known upper-left corner: finder + separator, squared off by the quiet zone.

    With include_quiet the region is anchored at the image origin and spans
    quiet margin plus 8 modules; without it, just the 8-module block at the
    symbol's corner.
    """
    side = 8 * g.module_px
    if include_quiet:
        return Region(0, 0, side + g.quiet_px, side + g.quiet_px)
    return Region(g.quiet_px, g.quiet_px, side, side)


def reinsert_patterns(u3: np.ndarray, mask: PatternMask) -> np.ndarray:
    """Overwrite all known pixels with their fixed values; leave the rest untouched."""
    u3 = as_image(u3)
    if u3.shape != mask.known.shape:
        raise DimensionError(f"image {u3.shape} does not match mask {mask.known.shape}")
    return np.where(mask.known, mask.values, u3)


def _run_lengths(row: np.ndarray) -> list[int]:
    idx = np.flatnonzero(np.diff(row))
    edges = np.concatenate(([0], idx + 1, [row.size]))
    return np.diff(edges).tolist()


def infer_module_width(z: np.ndarray) -> int:
    """Module width in pixels, read off a row crossing the upper-left finder.

    Rows through the finder's middle show dark/light runs in ratio
    1:1:3:1:1; the first row exhibiting that signature gives the width.
    """
    z = as_image(z)
    dark = z < 0.5
    for r in range(z.shape[0]):
        row = dark[r]
        if not row.any():
            continue
        start = int(np.argmax(row))
        runs = _run_lengths(row[start:])
        if len(runs) >= 5:
            m = runs[0]
            if runs[1] == m and runs[2] == 3 * m and runs[3] == m and runs[4] == m:
                return m
    raise ValueError("not a clean QR image: finder signature 1:1:3:1:1 not found")


def infer_geometry(z: np.ndarray) -> QrGeometry:
    """Full geometry of a clean rendered code: module width, count, quiet margin."""
    z = as_image(z)
    if z.shape[0] != z.shape[1]:
        raise DimensionError(f"QR images must be square, got {z.shape}")
    m = infer_module_width(z)
    dark_rows = np.flatnonzero((z < 0.5).any(axis=1))
    quiet = int(dark_rows[0])
    symbol_px = z.shape[0] - 2 * quiet
    if symbol_px % m != 0:
        raise ValueError(f"symbol extent {symbol_px} not a multiple of module width {m}")
    return QrGeometry(module_px=m, modules=symbol_px // m, quiet_px=quiet)
