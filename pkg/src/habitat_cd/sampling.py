"""Spatial block splits, overlapped patch tiling and mosaicking.

Blocks tile the raster without overlap (edge blocks may be smaller) and are
assigned wholesale to train, val or test so the evaluation pixels are
geographically separate from the training pixels.

Patches are laid out at multiples of ``stride = patch_size - overlap``.
When the last stride position would run past the raster, one extra patch is
clamped flush with the far edge, so no padding ever enters inference.  The
default 256 px patch with 64 px overlap gives a 192 px stride, i.e. 25 %
overlap per side rather than the "50 %" sometimes quoted alongside it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rng
from .errors import ValidationError
from .raster import CATEGORICAL, DEFAULT_CRS, DEFAULT_PIXEL_SIZE, Band, GeoGrid

ROLES = ("train", "val", "test")
DEFAULT_BLOCK_SIZE = 512
DEFAULT_FRACTIONS = (0.70, 0.15, 0.15)
DEFAULT_PATCH_SIZE = 256
DEFAULT_OVERLAP = 64


# ---------------------------------------------------------------------------
# Block split
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Block:
    index: tuple[int, int]
    extent: tuple[int, int, int, int]  # row0, col0, row1, col1 (exclusive)


@dataclass(frozen=True)
class BlockPartition:
    height: int
    width: int
    block_size: int
    blocks: tuple[Block, ...]

    def __len__(self):
        return len(self.blocks)


def partition_blocks(extent: Sequence[int], block_size: int = DEFAULT_BLOCK_SIZE) -> BlockPartition:
    """Cut a ``(height, width)`` pixel extent into square blocks, row-major."""
    height, width = int(extent[0]), int(extent[1])
    if block_size <= 0:
        raise ValidationError("block_size must be positive")
    if height <= 0 or width <= 0:
        raise ValidationError("extent must be positive")
    blocks = []
    for br in range(math.ceil(height / block_size)):
        for bc in range(math.ceil(width / block_size)):
            r0, c0 = br * block_size, bc * block_size
            blocks.append(Block((br, bc), (r0, c0, min(r0 + block_size, height),
                                           min(c0 + block_size, width))))
    return BlockPartition(height, width, block_size, tuple(blocks))


def split_counts(n: int, fractions: Sequence[float]) -> tuple[int, int, int]:
    """Round half up for train and val; test gets the remainder."""
    n_train = min(n, math.floor(n * fractions[0] + 0.5))
    n_val = min(n - n_train, math.floor(n * fractions[1] + 0.5))
    return n_train, n_val, n - n_train - n_val


@dataclass(frozen=True)
class SplitAssignment:
    partition: BlockPartition
    roles: dict[tuple[int, int], str]
    seed: int
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS

    def counts(self) -> dict[str, int]:
        out = {r: 0 for r in ROLES}
        for role in self.roles.values():
            out[role] += 1
        return out

    def role_mask(self, role: str) -> np.ndarray:
        """Boolean (height, width) mask of the pixels in blocks of ``role``."""
        if role not in ROLES:
            raise ValidationError(f"unknown role {role!r}")
        mask = np.zeros((self.partition.height, self.partition.width), dtype=bool)
        for block in self.partition.blocks:
            if self.roles[block.index] == role:
                r0, c0, r1, c1 = block.extent
                mask[r0:r1, c0:c1] = True
        return mask


def assign_split(partition: BlockPartition, seed: int,
                 fractions: Sequence[float] = DEFAULT_FRACTIONS) -> SplitAssignment:
    """Shuffle the blocks with the seeded stream and deal out roles.

    The first ``round(N * f_train)`` shuffled blocks become train, the next
    ``round(N * f_val)`` val and the rest test.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ValidationError("fractions must be three positive numbers")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError("fractions must sum to 1")
    n = len(partition.blocks)
    if n == 0:
        raise ValidationError("cannot split an empty partition")
    n_train, n_val, _ = split_counts(n, fractions)
    order = rng.permutation(n, seed, rng.STREAM_SPLIT)
    roles = {}
    for rank, i in enumerate(order):
        role = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
        roles[partition.blocks[i].index] = role
    return SplitAssignment(partition, roles, int(seed), fractions)


def mask_by_split(grid: GeoGrid, assignment: SplitAssignment, role: str) -> GeoGrid:
    """Set every pixel outside blocks of ``role`` to nodata."""
    p = assignment.partition
    if (p.height, p.width) != grid.shape:
        raise ValidationError(
            f"split covers {p.height}x{p.width} but grid is {grid.height}x{grid.width}"
        )
    keep = assignment.role_mask(role)
    bands = []
    for b in grid.bands:
        nodata = b.nodata_or_default()
        values = np.where(keep, b.values, np.asarray(nodata, dtype=b.values.dtype))
        bands.append(Band(values, b.kind, b.tag, nodata))
    return grid.with_bands(bands)


def save_split_csv(assignment: SplitAssignment, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["block_row", "block_col", "role"])
        for block in assignment.partition.blocks:
            writer.writerow([*block.index, assignment.roles[block.index]])


def load_split_csv(path, partition: BlockPartition, seed: int = -1) -> SplitAssignment:
    roles = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            role = row["role"].strip()
            if role not in ROLES:
                raise ValidationError(f"unknown role {role!r} in {path}")
            roles[(int(row["block_row"]), int(row["block_col"]))] = role
    expected = {b.index for b in partition.blocks}
    if set(roles) != expected:
        raise ValidationError(f"{path} does not match a {partition.block_size}px block partition")
    return SplitAssignment(partition, roles, seed)


# ---------------------------------------------------------------------------
# Patch tiling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PatchIndex:
    patch_size: int
    overlap: int
    height: int
    width: int
    origins: tuple[tuple[int, int], ...]
    pixel_size: float = DEFAULT_PIXEL_SIZE
    origin: tuple[float, float] = (0.0, 0.0)
    crs: int = DEFAULT_CRS
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def stride(self) -> int:
        return self.patch_size - self.overlap

    def template(self, values: np.ndarray, nodata=None) -> GeoGrid:
        return GeoGrid((Band(values, CATEGORICAL, "LABEL", nodata),),
                       self.pixel_size, self.origin, self.crs)


def axis_origins(length: int, patch_size: int, stride: int) -> list[int]:
    if length < patch_size:
        raise ValidationError(f"grid dimension {length} smaller than patch {patch_size}")
    starts = list(range(0, length - patch_size + 1, stride))
    if starts[-1] + patch_size < length:
        starts.append(length - patch_size)
    return starts


def patch_index(shape: Sequence[int], patch_size: int = DEFAULT_PATCH_SIZE,
                overlap: int = DEFAULT_OVERLAP, **georef) -> PatchIndex:
    if patch_size <= 0 or not 0 <= overlap < patch_size:
        raise ValidationError("need patch_size > 0 and 0 <= overlap < patch_size")
    height, width = int(shape[0]), int(shape[1])
    stride = patch_size - overlap
    rows = axis_origins(height, patch_size, stride)
    cols = axis_origins(width, patch_size, stride)
    origins = tuple((r, c) for r in rows for c in cols)
    return PatchIndex(patch_size, overlap, height, width, origins, **georef)


def extract_patches(grid: GeoGrid, patch_size: int = DEFAULT_PATCH_SIZE,
                    overlap: int = DEFAULT_OVERLAP) -> tuple[PatchIndex, np.ndarray]:
    """Cut ``grid`` into patches; returns the index and a
    ``(n_patches, n_bands, patch_size, patch_size)`` array."""
    index = patch_index(grid.shape, patch_size, overlap, pixel_size=grid.pixel_size,
                        origin=grid.origin, crs=grid.crs)
    data = np.stack([b.values for b in grid.bands])
    ps = patch_size
    patches = np.stack([data[:, r:r + ps, c:c + ps] for r, c in index.origins])
    return index, patches


def _patch_order(index: PatchIndex, n: int, out_shape) -> np.ndarray:
    if n != len(index.origins):
        raise ValidationError(f"{n} patches but {len(index.origins)} origins")
    origins = np.asarray(index.origins, dtype=np.int64).reshape(-1, 2)
    ps = index.patch_size
    if n and ((origins < 0).any() or (origins[:, 0] + ps > out_shape[0]).any()
              or (origins[:, 1] + ps > out_shape[1]).any()):
        raise ValidationError("patch extends outside the output extent")
    order = np.lexsort((origins[:, 1], origins[:, 0]))
    sorted_o = origins[order]
    if n > 1 and (np.diff(sorted_o, axis=0) == 0).all(axis=1).any():
        raise ValidationError("duplicate patch origins")
    return order


def _coverage_check(count: np.ndarray) -> None:
    if (count == 0).any():
        r, c = np.argwhere(count == 0)[0]
        raise ValidationError(f"coverage gap: pixel (row={r}, col={c}) has no patch")


def mosaic_scores(patches: np.ndarray, index: PatchIndex,
                  out_extent: Sequence[int] | None = None) -> GeoGrid:
    """Average per-class scores over overlapping patches, then argmax.

    ``patches`` is ``(n, K, p, p)``.  Ties go to the lowest class id.
    Patches are accumulated in origin order, so the result does not depend
    on the order in which patches (and their origins) are supplied.
    """
    patches = np.asarray(patches)
    if patches.ndim != 4 or patches.shape[2:] != (index.patch_size,) * 2:
        raise ValidationError("score patches must be (n, K, patch, patch)")
    out_shape = (index.height, index.width) if out_extent is None else tuple(out_extent)
    order = _patch_order(index, len(patches), out_shape)
    k = patches.shape[1]
    ps = index.patch_size
    sums = np.zeros((k, *out_shape), dtype=np.float64)
    count = np.zeros(out_shape, dtype=np.int64)
    for i in order:
        r, c = index.origins[i]
        sums[:, r:r + ps, c:c + ps] += patches[i]
        count[r:r + ps, c:c + ps] += 1
    _coverage_check(count)
    labels = np.argmax(sums / count, axis=0)
    dtype = np.uint8 if k < 255 else np.uint16
    return index.template(labels.astype(dtype))


def mosaic_labels(patches: np.ndarray, index: PatchIndex,
                  out_extent: Sequence[int] | None = None, nodata=None) -> GeoGrid:
    """Per-pixel majority vote over overlapping label patches.

    ``patches`` is ``(n, p, p)`` or ``(n, 1, p, p)``.  Ties go to the lowest
    label value.
    """
    patches = np.asarray(patches)
    if patches.ndim == 4 and patches.shape[1] == 1:
        patches = patches[:, 0]
    if patches.ndim != 3 or patches.shape[1:] != (index.patch_size,) * 2:
        raise ValidationError("label patches must be (n, patch, patch)")
    out_shape = (index.height, index.width) if out_extent is None else tuple(out_extent)
    order = _patch_order(index, len(patches), out_shape)
    values, inverse = np.unique(patches, return_inverse=True)
    inverse = inverse.reshape(patches.shape)
    votes = np.zeros((len(values), *out_shape), dtype=np.uint16)
    ps = index.patch_size
    rr, cc = np.mgrid[0:ps, 0:ps]
    for i in order:
        r, c = index.origins[i]
        votes[inverse[i], rr + r, cc + c] += 1
    _coverage_check(votes.sum(axis=0))
    labels = values[np.argmax(votes, axis=0)]
    return index.template(labels, nodata)


def save_patch_index(index: PatchIndex, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row", "col"])
        writer.writerows(index.origins)


def load_patch_index(path, patch_size: int, overlap: int, height: int, width: int,
                     **georef) -> PatchIndex:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        origins = tuple((int(r["row"]), int(r["col"])) for r in csv.DictReader(fh))
    return PatchIndex(patch_size, overlap, height, width, origins, **georef)
