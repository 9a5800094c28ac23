"""LiDAR-derived layers: nDSM, slope, aspect, roughness and curvature.

All kernels work on a 3x3 (or ``window``-sized) neighbourhood.  Border
pixels and any pixel whose neighbourhood touches nodata are returned as NaN.
Rows run north to south, columns west to east.

Conventions
-----------
slope
    Horn (1981) weighted finite differences, degrees in [0, 90].
aspect
    Compass bearing of the downslope direction, degrees clockwise from
    north in [0, 360).  Cells with exactly zero gradient get
    :data:`FLAT_ASPECT` (-1).
curvature
    Zevenbergen & Thorne (1987) general curvature,
    ``-2 * (D + E)`` with ``D = ((z_w + z_e) / 2 - z_c) / L**2`` and
    ``E = ((z_n + z_s) / 2 - z_c) / L**2``, in 1/m.  Positive values are
    convex (a peak), negative values concave (a pit).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ValidationError
from .raster import CONTINUOUS, Band, GeoGrid

FLAT_ASPECT = -1.0
NDSM_NEGATIVE_TOLERANCE = -0.5


def _elevation(grid: GeoGrid, min_size: int = 3) -> np.ndarray:
    band = grid.bands[0]
    if band.kind != CONTINUOUS:
        raise ValidationError("terrain derivatives need a continuous elevation band")
    if grid.height < min_size or grid.width < min_size:
        raise ValidationError(f"grid smaller than {min_size}x{min_size}")
    z = band.values.astype(np.float64)
    return np.where(band.valid_mask(), z, np.nan)


def _continuous(grid: GeoGrid, values: np.ndarray, tag: str) -> GeoGrid:
    return grid.with_bands([Band(values, CONTINUOUS, tag, float("nan"))])


def _neighbours(z: np.ndarray):
    """The nine 3x3 neighbours of each interior cell, as (h-2, w-2) views.

    Ordered a b c / d e f / g h i, with ``a`` the north-west neighbour.
    """
    h, w = z.shape
    s = [[z[r:h - 2 + r, c:w - 2 + c] for c in range(3)] for r in range(3)]
    return s[0][0], s[0][1], s[0][2], s[1][0], s[1][1], s[1][2], s[2][0], s[2][1], s[2][2]


def _pad_border(interior: np.ndarray, shape) -> np.ndarray:
    out = np.full(shape, np.nan)
    out[1:-1, 1:-1] = interior
    return out


def ndsm(dsm: GeoGrid, dtm: GeoGrid) -> GeoGrid:
    """Height above ground, DSM minus DTM.

    Differences below -0.5 m are treated as misregistration and set to 0;
    small negatives above that tolerance are kept as measured.
    """
    dsm.require_aligned(dtm)
    a, b = dsm.bands[0], dtm.bands[0]
    diff = a.values.astype(np.float64) - b.values.astype(np.float64)
    diff[diff < NDSM_NEGATIVE_TOLERANCE] = 0.0
    diff[~(a.valid_mask() & b.valid_mask())] = np.nan
    return _continuous(dsm, diff, "NDSM")


def gradient(dtm: GeoGrid) -> tuple[np.ndarray, np.ndarray]:
    """Horn gradient (dz/dx east, dz/dy north) for interior cells."""
    z = _elevation(dtm)
    a, b, c, d, _, f, g, h, i = _neighbours(z)
    L = dtm.pixel_size
    dzdx = ((c + 2 * f + i) - (a + 2 * d + g)) / (8 * L)
    dzdy = ((a + 2 * b + c) - (g + 2 * h + i)) / (8 * L)
    return dzdx, dzdy


def slope_aspect(dtm: GeoGrid) -> tuple[GeoGrid, GeoGrid]:
    dzdx, dzdy = gradient(dtm)
    slope = np.degrees(np.arctan(np.hypot(dzdx, dzdy)))
    aspect = np.degrees(np.arctan2(-dzdx, -dzdy)) % 360.0
    flat = (dzdx == 0) & (dzdy == 0)
    aspect = np.where(flat, FLAT_ASPECT, aspect)
    shape = dtm.shape
    return (
        _continuous(dtm, _pad_border(slope, shape), "SLOPE"),
        _continuous(dtm, _pad_border(aspect, shape), "ASPECT"),
    )


def roughness(dtm: GeoGrid, window: int = 3) -> GeoGrid:
    """Population standard deviation of elevations in a square window."""
    if window < 3 or window % 2 == 0:
        raise ValidationError("roughness window must be odd and >= 3")
    if window > min(dtm.shape):
        raise ValidationError("roughness window larger than grid")
    z = _elevation(dtm, window)
    windows = sliding_window_view(z, (window, window))
    std = windows.std(axis=(-2, -1))
    r = window // 2
    out = np.full(dtm.shape, np.nan)
    out[r:-r, r:-r] = std
    return _continuous(dtm, out, "ROUGHNESS")


def curvature(dtm: GeoGrid) -> GeoGrid:
    z = _elevation(dtm)
    _, n, _, w, c, e, _, s, _ = _neighbours(z)
    L2 = dtm.pixel_size ** 2
    D = ((w + e) / 2 - c) / L2
    E = ((n + s) / 2 - c) / L2
    return _continuous(dtm, _pad_border(-2 * (D + E), dtm.shape), "CURVATURE")


def derive_all(dtm: GeoGrid, dsm: GeoGrid | None = None, window: int = 3) -> dict[str, GeoGrid]:
    """Every derivative keyed by lower-case name, ready for writing to disk."""
    slope, aspect = slope_aspect(dtm)
    out = {
        "slope": slope,
        "aspect": aspect,
        "roughness": roughness(dtm, window),
        "curvature": curvature(dtm),
    }
    if dsm is not None:
        out["ndsm"] = ndsm(dsm, dtm)
    return out
