"""Georeferenced grids, raster file I/O, resampling and band stacking.

A :class:`GeoGrid` is a north-up, square-pixel raster made of one or more
:class:`Band` objects that share a shape.  Bands carry an explicit kind
(``categorical`` or ``continuous``) and a semantic tag such as ``R``,
``NDSM`` or ``SCORE:3``.  Grids are treated as immutable: band arrays are
copied on construction and marked read-only.

Two file formats are supported:

* GeoTIFF via rasterio (``.tif`` / ``.tiff``), single- or multi-band,
  written as uint8, uint16, int32 or float32.
* A plain-text grid (``.txt``) for small fixtures::

      width 3
      height 2
      pixel_size 1.0
      origin 0.0 2.0
      epsg 32633
      nodata none
      1 2 3
      4 5 6

  Optional ``kind`` and ``tag`` header lines may follow ``nodata``.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

CATEGORICAL = "categorical"
CONTINUOUS = "continuous"
KINDS = (CATEGORICAL, CONTINUOUS)

BASE_TAGS = (
    "R", "G", "B", "NIR", "DTM", "DSM", "NDSM",
    "SLOPE", "ASPECT", "ROUGHNESS", "CURVATURE", "LABEL",
)
_SCORE_RE = re.compile(r"^SCORE:(\d+)$")

DEFAULT_PIXEL_SIZE = 0.2
DEFAULT_CRS = 32633

# Relative tolerance used when comparing georeferencing of two grids.
_GEO_TOL = 1e-9

_FILE_DTYPES = {
    np.dtype("uint8"): "uint8",
    np.dtype("uint16"): "uint16",
    np.dtype("int32"): "int32",
    np.dtype("float32"): "float32",
}


def is_valid_tag(tag: str) -> bool:
    return tag in BASE_TAGS or bool(_SCORE_RE.match(tag))


def default_nodata(dtype) -> float | int:
    """Sentinel used when an operation must introduce nodata into a band
    that has none declared."""
    dtype = np.dtype(dtype)
    if dtype.kind == "f":
        return float("nan")
    if dtype.kind == "u":
        return int(np.iinfo(dtype).max)
    return -1


@dataclass(frozen=True, eq=False)
class Band:
    """A single 2-D layer with an explicit kind and semantic tag."""

    values: np.ndarray
    kind: str
    tag: str
    nodata: float | int | None = None

    def __post_init__(self):
        values = np.array(self.values, copy=True)
        if values.ndim != 2:
            raise ValidationError(f"band values must be 2-D, got shape {values.shape}")
        if self.kind not in KINDS:
            raise ValidationError(f"unknown band kind {self.kind!r}")
        if not is_valid_tag(self.tag):
            raise ValidationError(f"unknown band tag {self.tag!r}")
        nodata = self.nodata
        if nodata is not None:
            nodata = float(nodata) if values.dtype.kind == "f" else int(nodata)
        if self.kind == CATEGORICAL:
            if values.dtype.kind not in "iub":
                raise ValidationError("categorical band requires an integer dtype")
            labels = values if nodata is None else values[values != nodata]
            if labels.size and labels.min() < 0:
                raise ValidationError("categorical band contains negative labels")
        elif values.dtype.kind == "f":
            bad = ~np.isfinite(values)
            if bad.any():
                nan_nodata = nodata is not None and math.isnan(nodata)
                if not nan_nodata or np.isinf(values).any():
                    raise ValidationError(
                        "continuous band has non-finite values that are not nodata"
                    )
        elif values.dtype.kind not in "iu":
            raise ValidationError(f"unsupported band dtype {values.dtype}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "nodata", nodata)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def valid_mask(self) -> np.ndarray:
        """Boolean array, True where the pixel holds data."""
        v = self.values
        mask = np.ones(v.shape, dtype=bool)
        if v.dtype.kind == "f":
            mask &= ~np.isnan(v)
        if self.nodata is not None and not (
            isinstance(self.nodata, float) and math.isnan(self.nodata)
        ):
            mask &= v != self.nodata
        return mask

    def nodata_or_default(self):
        return default_nodata(self.values.dtype) if self.nodata is None else self.nodata

    def replace(self, values=None, **changes) -> "Band":
        return Band(
            values=self.values if values is None else values,
            kind=changes.get("kind", self.kind),
            tag=changes.get("tag", self.tag),
            nodata=changes.get("nodata", self.nodata),
        )


@dataclass(frozen=True, eq=False)
class GeoGrid:
    """North-up raster with square pixels.

    ``origin`` is the (easting, northing) of the upper-left corner in
    meters; ``crs`` an EPSG code.
    """

    bands: tuple[Band, ...]
    pixel_size: float = DEFAULT_PIXEL_SIZE
    origin: tuple[float, float] = (0.0, 0.0)
    crs: int = DEFAULT_CRS

    def __post_init__(self):
        bands = tuple(self.bands)
        if not bands:
            raise ValidationError("a grid needs at least one band")
        shape = bands[0].shape
        if any(b.shape != shape for b in bands):
            raise ValidationError("all bands must share width and height")
        if shape[0] <= 0 or shape[1] <= 0:
            raise ValidationError("grid width and height must be positive")
        if not (self.pixel_size > 0 and math.isfinite(self.pixel_size)):
            raise ValidationError("pixel_size must be positive")
        object.__setattr__(self, "bands", bands)
        object.__setattr__(self, "pixel_size", float(self.pixel_size))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "crs", int(self.crs))

    @classmethod
    def from_array(
        cls,
        values,
        *,
        kind: str = CATEGORICAL,
        tag: str | None = None,
        nodata=None,
        pixel_size: float = DEFAULT_PIXEL_SIZE,
        origin: tuple[float, float] = (0.0, 0.0),
        crs: int = DEFAULT_CRS,
    ) -> "GeoGrid":
        """Wrap a 2-D array (or a (bands, rows, cols) stack) as a grid."""
        values = np.asarray(values)
        if tag is None:
            tag = "LABEL" if kind == CATEGORICAL else "DTM"
        if values.ndim == 2:
            bands = (Band(values, kind, tag, nodata),)
        elif values.ndim == 3:
            tags = [tag] if isinstance(tag, str) else list(tag)
            if len(tags) != values.shape[0]:
                raise ValidationError("need one tag per band")
            bands = tuple(Band(v, kind, t, nodata) for v, t in zip(values, tags))
        else:
            raise ValidationError("expected a 2-D or 3-D array")
        return cls(bands, pixel_size, origin, crs)

    @property
    def height(self) -> int:
        return self.bands[0].shape[0]

    @property
    def width(self) -> int:
        return self.bands[0].shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bands[0].shape

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) in CRS units."""
        x0, y0 = self.origin
        return (x0, y0 - self.height * self.pixel_size, x0 + self.width * self.pixel_size, y0)

    @property
    def tags(self) -> list[str]:
        return [b.tag for b in self.bands]

    @property
    def values(self) -> np.ndarray:
        """Values of the first band (convenience for single-band grids)."""
        return self.bands[0].values

    @property
    def band0(self) -> Band:
        return self.bands[0]

    def band(self, tag: str) -> Band:
        for b in self.bands:
            if b.tag == tag:
                return b
        raise ValidationError(f"band {tag!r} not present (have {self.tags})")

    def with_bands(self, bands: Iterable[Band]) -> "GeoGrid":
        return GeoGrid(tuple(bands), self.pixel_size, self.origin, self.crs)

    def with_values(self, values, **band_changes) -> "GeoGrid":
        """Same georeferencing, single band derived from the first band."""
        return self.with_bands([self.bands[0].replace(values, **band_changes)])

    def is_aligned_with(self, other: "GeoGrid") -> bool:
        tol = _GEO_TOL * max(1.0, abs(self.origin[0]), abs(self.origin[1]))
        return (
            self.shape == other.shape
            and self.crs == other.crs
            and math.isclose(self.pixel_size, other.pixel_size, rel_tol=_GEO_TOL)
            and abs(self.origin[0] - other.origin[0]) <= tol
            and abs(self.origin[1] - other.origin[1]) <= tol
        )

    def require_aligned(self, other: "GeoGrid") -> None:
        if not self.is_aligned_with(other):
            raise ValidationError(
                "grids not co-registered: "
                f"{self.shape}@{self.origin}/{self.pixel_size}m/EPSG:{self.crs} vs "
                f"{other.shape}@{other.origin}/{other.pixel_size}m/EPSG:{other.crs}"
            )


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def _file_dtype(values: np.ndarray) -> np.dtype:
    dt = values.dtype
    if dt in _FILE_DTYPES:
        return dt
    if dt.kind == "b":
        return np.dtype("uint8")
    if dt.kind == "f":
        return np.dtype("float32")
    if dt.kind in "iu":
        lo, hi = (int(values.min()), int(values.max())) if values.size else (0, 0)
        for cand in ("uint8", "uint16", "int32"):
            info = np.iinfo(cand)
            if info.min <= lo and hi <= info.max and (dt.kind == "u" or cand == "int32"):
                return np.dtype(cand)
        raise ValidationError(f"integer values {lo}..{hi} do not fit a supported dtype")
    raise ValidationError(f"unsupported dtype {dt}")


def write_raster(grid: GeoGrid, path) -> None:
    """Write ``grid`` to ``path``; the format follows the file suffix."""
    path = Path(path)
    if path.suffix.lower() == ".txt":
        _write_text_grid(grid, path)
        return
    if path.suffix.lower() not in (".tif", ".tiff"):
        raise ValidationError(f"unsupported raster format {path.suffix!r}")

    import rasterio
    from rasterio.transform import from_origin

    dtypes = [_file_dtype(b.values) for b in grid.bands]
    file_dtype = np.result_type(*dtypes)
    if file_dtype not in _FILE_DTYPES:
        file_dtype = np.dtype("float32") if file_dtype.kind == "f" else np.dtype("int32")
    nodata = grid.bands[0].nodata
    profile = dict(
        driver="GTiff",
        width=grid.width,
        height=grid.height,
        count=len(grid.bands),
        dtype=_FILE_DTYPES.get(np.dtype(file_dtype), str(file_dtype)),
        crs=f"EPSG:{grid.crs}",
        transform=from_origin(grid.origin[0], grid.origin[1], grid.pixel_size, grid.pixel_size),
    )
    if nodata is not None:
        profile["nodata"] = nodata
    try:
        with warnings.catch_warnings():
            # A unit pixel at (0, 0) is a flipped identity transform; GTiff
            # still stores it, so the georeferencing warning is noise here.
            warnings.simplefilter("ignore", rasterio.errors.NotGeoreferencedWarning)
            dst = rasterio.open(path, "w", **profile)
        with dst:
            for i, band in enumerate(grid.bands, start=1):
                dst.write(band.values.astype(file_dtype, copy=False), i)
                dst.set_band_description(i, band.tag)
                tags = {"KIND": band.kind, "TAG": band.tag, "DTYPE": band.values.dtype.str}
                tags["NODATA"] = "none" if band.nodata is None else repr(band.nodata)
                dst.update_tags(i, **tags)
    except rasterio.errors.RasterioIOError as exc:
        raise ValidationError(f"cannot write {path}: {exc}") from exc


def _default_tags(count: int, integer: bool) -> tuple[str, list[str]]:
    if integer and count == 1:
        return CATEGORICAL, ["LABEL"]
    if count == 3:
        return CONTINUOUS, ["R", "G", "B"]
    if count == 4:
        return CONTINUOUS, ["R", "G", "B", "NIR"]
    if count == 1:
        return CONTINUOUS, ["DTM"]
    return CONTINUOUS, [f"SCORE:{i}" for i in range(count)]


def _parse_nodata(text: str):
    if text.lower() == "none":
        return None
    value = float(text)
    return int(value) if value.is_integer() and "." not in text and "e" not in text.lower() else value


def read_raster(path) -> GeoGrid:
    """Read a GeoTIFF or plain-text grid.

    Band kinds and tags come from the metadata written by
    :func:`write_raster`.  Untagged files are interpreted by convention:
    one integer band is a categorical ``LABEL``; three or four bands are
    continuous ``R,G,B[,NIR]``; one float band is ``DTM``; any other band
    count becomes ``SCORE:0..n-1``.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"raster not found: {path}")
    suffix = path.suffix.lower()
    if suffix == ".txt":
        return _read_text_grid(path)
    if suffix not in (".tif", ".tiff"):
        raise ValidationError(f"unsupported raster format {path.suffix!r}")

    import rasterio

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", rasterio.errors.NotGeoreferencedWarning)
        try:
            src = rasterio.open(path)
        except rasterio.errors.RasterioIOError as exc:
            raise ValidationError(f"unsupported raster format: {exc}") from exc
        with src:
            t = src.transform
            if t.is_identity or src.crs is None:
                raise ValidationError(f"{path}: missing geotransform or CRS")
            if t.b != 0 or t.d != 0:
                raise ValidationError(f"{path}: rotated rasters unsupported")
            if not math.isclose(abs(t.a), abs(t.e), rel_tol=_GEO_TOL) or t.e >= 0:
                raise ValidationError("anisotropic pixels unsupported")
            epsg = src.crs.to_epsg()
            if epsg is None:
                raise ValidationError(f"{path}: CRS has no EPSG code")
            data = src.read()
            file_nodata = src.nodata
            band_tags = [src.tags(i) for i in range(1, src.count + 1)]
            integer = np.dtype(src.dtypes[0]).kind in "iu"

    kind_default, tag_default = _default_tags(len(data), integer)
    bands = []
    for i, values in enumerate(data):
        meta = band_tags[i]
        kind = meta.get("KIND", kind_default)
        tag = meta.get("TAG", tag_default[i])
        if "DTYPE" in meta:
            values = values.astype(np.dtype(meta["DTYPE"]), copy=False)
        nodata = _parse_nodata(meta["NODATA"]) if "NODATA" in meta else file_nodata
        if nodata is not None and values.dtype.kind in "iu":
            nodata = int(nodata)
        bands.append(Band(values, kind, tag, nodata))
    return GeoGrid(tuple(bands), abs(t.a), (t.c, t.f), epsg)


def _write_text_grid(grid: GeoGrid, path: Path) -> None:
    if len(grid.bands) != 1:
        raise ValidationError("text grids hold a single band")
    band = grid.bands[0]
    lines = [
        f"width {grid.width}",
        f"height {grid.height}",
        f"pixel_size {grid.pixel_size!r}",
        f"origin {grid.origin[0]!r} {grid.origin[1]!r}",
        f"epsg {grid.crs}",
        f"nodata {'none' if band.nodata is None else repr(band.nodata)}",
        f"kind {band.kind}",
        f"tag {band.tag}",
    ]
    fmt = repr if band.values.dtype.kind == "f" else str
    for row in band.values.tolist():
        lines.append(" ".join(fmt(v) for v in row))
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot write {path}: {exc}") from exc


_TEXT_KEYS = {"width", "height", "pixel_size", "origin", "epsg", "nodata", "kind", "tag"}


def _read_text_grid(path: Path) -> GeoGrid:
    header: dict[str, list[str]] = {}
    rows: list[list[str]] = []
    for line in path.read_text(encoding="utf-8").splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0].lower() in _TEXT_KEYS:
            header[parts[0].lower()] = parts[1:]
        else:
            rows.append(parts)
    try:
        width = int(header["width"][0])
        height = int(header["height"][0])
        pixel_size = float(header["pixel_size"][0])
        origin = (float(header["origin"][0]), float(header["origin"][1]))
        epsg = int(header["epsg"][0])
        nodata = _parse_nodata(header["nodata"][0]) if "nodata" in header else None
    except (KeyError, IndexError, ValueError) as exc:
        raise ValidationError(f"{path}: malformed text grid header ({exc})") from exc
    if len(rows) != height or any(len(r) != width for r in rows):
        raise ValidationError(f"{path}: expected {height} rows of {width} values")
    tokens = [t for r in rows for t in r]
    integer = all(re.fullmatch(r"-?\d+", t) for t in tokens)
    kind = header.get("kind", [CATEGORICAL if integer else CONTINUOUS])[0]
    tag = header.get("tag", ["LABEL" if kind == CATEGORICAL else "DTM"])[0]
    dtype = np.int32 if integer and kind == CATEGORICAL else np.float64
    values = np.array(tokens, dtype=np.float64).astype(dtype).reshape(height, width)
    return GeoGrid((Band(values, kind, tag, nodata),), pixel_size, origin, epsg)


# ---------------------------------------------------------------------------
# Resampling and stacking
# ---------------------------------------------------------------------------

def _bilinear_axis(coord: np.ndarray, n: int):
    """Lower index, upper index and upper weight along one axis.

    ``coord`` is in source pixel units measured from the grid edge.
    Positions within half a pixel of the edge are clamped to the outermost
    pixel centre.
    """
    f = np.clip(coord - 0.5, 0.0, n - 1)
    i0 = np.minimum(np.floor(f).astype(np.int64), max(n - 2, 0))
    t = f - i0
    i1 = np.minimum(i0 + 1, n - 1)
    return i0, i1, t


def resample_to(
    grid: GeoGrid,
    target_pixel_size: float = DEFAULT_PIXEL_SIZE,
    target_extent: Sequence[float] | None = None,
) -> GeoGrid:
    """Resample every band onto a new pixel size and extent.

    Categorical bands use nearest neighbour, continuous bands bilinear
    interpolation.  ``target_extent`` is ``(xmin, ymin, xmax, ymax)`` and
    defaults to the grid's own extent.  Output pixels outside the source
    footprint, and bilinear outputs that touch any nodata input, are set to
    nodata.
    """
    if target_pixel_size <= 0:
        raise ValidationError("target pixel size must be positive")
    xmin, ymin, xmax, ymax = grid.extent if target_extent is None else target_extent
    nx_f = (xmax - xmin) / target_pixel_size
    ny_f = (ymax - ymin) / target_pixel_size
    nx, ny = int(round(nx_f)), int(round(ny_f))
    if nx <= 0 or ny <= 0 or abs(nx - nx_f) > 1e-6 or abs(ny - ny_f) > 1e-6:
        raise ValidationError("target extent must span a whole number of target pixels")
    gx0, gy0, gx1, gy1 = grid.extent
    if min(xmax, gx1) <= max(xmin, gx0) or min(ymax, gy1) <= max(ymin, gy0):
        raise ValidationError("target extent does not intersect the grid")

    ps = grid.pixel_size
    xc = xmin + (np.arange(nx) + 0.5) * target_pixel_size
    yc = ymax - (np.arange(ny) + 0.5) * target_pixel_size
    u = (xc - grid.origin[0]) / ps  # columns, source pixel units
    v = (grid.origin[1] - yc) / ps  # rows
    inside = (v >= 0)[:, None] & (v <= grid.height)[:, None] & (u >= 0)[None, :] & (
        u <= grid.width
    )[None, :]

    out_bands = []
    for band in grid.bands:
        src = band.values
        valid = band.valid_mask()
        if band.kind == CATEGORICAL:
            cols = np.clip(np.floor(u).astype(np.int64), 0, grid.width - 1)
            rows = np.clip(np.floor(v).astype(np.int64), 0, grid.height - 1)
            out = src[rows[:, None], cols[None, :]]
            ok = inside & valid[rows[:, None], cols[None, :]]
            nodata = band.nodata
            if not ok.all():
                nodata = band.nodata_or_default()
                out = np.where(ok, out, np.asarray(nodata, dtype=out.dtype))
            out_bands.append(Band(out, band.kind, band.tag, nodata))
            continue

        c0, c1, tc = _bilinear_axis(u, grid.width)
        r0, r1, tr = _bilinear_axis(v, grid.height)
        out_dtype = np.float64 if src.dtype == np.float64 else np.float32
        a = src.astype(np.float64, copy=False)
        R0, R1, C0, C1 = r0[:, None], r1[:, None], c0[None, :], c1[None, :]
        TR, TC = tr[:, None], tc[None, :]
        w00 = (1 - TR) * (1 - TC)
        w01 = (1 - TR) * TC
        w10 = TR * (1 - TC)
        w11 = TR * TC
        out = (
            w00 * a[R0, C0] + w01 * a[R0, C1] + w10 * a[R1, C0] + w11 * a[R1, C1]
        )
        ok = inside.copy()
        for w, rr, cc in ((w00, R0, C0), (w01, R0, C1), (w10, R1, C0), (w11, R1, C1)):
            ok &= (w == 0) | valid[rr, cc]
        nodata = band.nodata
        if nodata is None or src.dtype.kind != "f":
            nodata = float("nan") if not ok.all() or nodata is not None else None
        out = np.where(ok, out, np.nan if nodata is None else nodata).astype(out_dtype)
        out_bands.append(Band(out, band.kind, band.tag, nodata))

    return GeoGrid(tuple(out_bands), target_pixel_size, (xmin, ymax), grid.crs)


def stack(grids: Sequence[GeoGrid], order: Sequence[str]) -> GeoGrid:
    """Concatenate bands from co-registered grids in the requested tag order."""
    if not grids:
        raise ValidationError("stack needs at least one grid")
    ref = grids[0]
    for g in grids[1:]:
        ref.require_aligned(g)
    by_tag: dict[str, Band] = {}
    for g in grids:
        for b in g.bands:
            if b.tag in by_tag:
                raise ValidationError(f"band tag {b.tag!r} supplied more than once")
            by_tag[b.tag] = b
    missing = [t for t in order if t not in by_tag]
    if missing:
        raise ValidationError(f"missing requested band(s): {', '.join(missing)}")
    return ref.with_bands(by_tag[t] for t in order)
