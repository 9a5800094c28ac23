"""Class schemes, label remapping and the temporal comparison module.

The temporal comparison looks at every pixel pair (label at t1, label at
t2) and assigns one of nine transition categories using a rule table.
Identity pairs are always "No change"; non-identity pairs without an
explicit rule fall back to "Other Transition".

The bundled rule table (``data/transition_rules.csv``) is a reconstruction
from the forest stage and canopy-cover attributes of the 23-class scheme,
not an authoritative mapping.  See ``scripts/build_default_rules.py``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ValidationError
from .raster import CATEGORICAL, Band, GeoGrid

LABEL_NODATA = 255
NO_CHANGE_NAME = "No change"
FALLBACK_NAME = "Other Transition"


def data_path(name: str) -> Path:
    """Path of a bundled CSV/JSON asset."""
    return Path(str(resources.files("habitat_cd") / "data" / name))


def _read_csv(path, required: tuple[str, ...]) -> list[dict[str, str]]:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = [c for c in required if c not in (reader.fieldnames or [])]
            if missing:
                raise ValidationError(f"{path}: missing column(s) {', '.join(missing)}")
            return list(reader)
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Class schemes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassInfo:
    id: int
    name: str
    area_ha: float | None = None


@dataclass(frozen=True)
class ClassScheme:
    classes: tuple[ClassInfo, ...]
    nodata: int = LABEL_NODATA

    def __post_init__(self):
        ids = [c.id for c in self.classes]
        if ids != list(range(len(ids))):
            raise ValidationError("class ids must be unique and contiguous from 0")
        if self.nodata in ids:
            raise ValidationError("nodata id collides with a class id")
        counts: dict[str, int] = {}
        for c in self.classes:
            counts[c.name] = counts.get(c.name, 0) + 1
        if any(n > 1 for n in counts.values()):
            fixed = tuple(
                ClassInfo(c.id, f"{c.name} [{c.id}]", c.area_ha) if counts[c.name] > 1 else c
                for c in self.classes
            )
            object.__setattr__(self, "classes", fixed)

    def __len__(self) -> int:
        return len(self.classes)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.classes]

    @classmethod
    def from_names(cls, names, nodata: int = LABEL_NODATA) -> "ClassScheme":
        return cls(tuple(ClassInfo(i, n) for i, n in enumerate(names)), nodata)


def load_class_scheme(path=None, nodata: int = LABEL_NODATA) -> ClassScheme:
    """Load ``id,name,area_ha`` rows; defaults to the bundled 23-class scheme."""
    rows = _read_csv(path or data_path("classes.csv"), ("id", "name"))
    try:
        classes = sorted(
            (
                ClassInfo(int(r["id"]), r["name"].strip(),
                          float(r["area_ha"]) if r.get("area_ha") else None)
                for r in rows
            ),
            key=lambda c: c.id,
        )
    except ValueError as exc:
        raise ValidationError(f"bad class scheme row: {exc}") from exc
    return ClassScheme(tuple(classes), nodata)


# ---------------------------------------------------------------------------
# Remapping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RemapTable:
    """``entries`` maps source id to target id.

    ``default`` applies to values missing from ``entries``: ``"error"``
    rejects them, ``"pass"`` keeps them unchanged and an integer sends them
    to that fixed target.
    """

    entries: Mapping[int, int]
    default: str | int = "error"

    def __post_init__(self):
        if not (self.default in ("error", "pass") or isinstance(self.default, int)):
            raise ValidationError(f"invalid remap default {self.default!r}")


def load_remap_table(path=None, default: str | int = "error") -> RemapTable:
    rows = _read_csv(path or data_path("remap_identity.csv"), ("source_id", "target_id"))
    entries: dict[int, int] = {}
    for r in rows:
        src, dst = int(r["source_id"]), int(r["target_id"])
        if src in entries and entries[src] != dst:
            raise ValidationError(f"source id {src} mapped twice")
        entries[src] = dst
    return RemapTable(entries, default)


def remap_labels(grid: GeoGrid, table: RemapTable) -> GeoGrid:
    band = grid.bands[0]
    if band.kind != CATEGORICAL:
        raise ValidationError("remap needs a categorical grid")
    values = band.values
    valid = band.valid_mask()
    present = np.unique(values[valid])
    lut_size = int(max(present.max(initial=0), max(table.entries, default=0))) + 1
    lut = np.arange(lut_size, dtype=np.int64)
    known = np.zeros(lut_size, dtype=bool)
    for src, dst in table.entries.items():
        lut[src] = dst
        known[src] = True
    unknown = present[~known[present]]
    if unknown.size:
        if table.default == "error":
            value = int(unknown[0])
            r, c = np.argwhere((values == value) & valid)[0]
            raise ValidationError(
                f"unmapped label {value} at pixel (row={r}, col={c})"
            )
        if table.default != "pass":
            lut[unknown] = int(table.default)
    out = lut[np.where(valid, values, 0)]
    nodata = band.nodata
    hi = int(out.max(initial=0))
    dtype = values.dtype if hi <= np.iinfo(values.dtype).max else np.int32
    out = out.astype(dtype)
    if not valid.all():
        out[~valid] = values[~valid]
    return grid.with_bands([Band(out, CATEGORICAL, band.tag, nodata)])


# ---------------------------------------------------------------------------
# Transition rules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TransitionRuleSet:
    """(from, to) -> category lookup over ``n_classes`` labels."""

    n_classes: int
    categories: tuple[str, ...]
    rules: Mapping[tuple[int, int], int] = field(default_factory=dict)

    def __post_init__(self):
        names = [n.casefold() for n in self.categories]
        for required in (NO_CHANGE_NAME, FALLBACK_NAME):
            if required.casefold() not in names:
                raise ValidationError(f"category list lacks {required!r}")
        object.__setattr__(self, "categories", tuple(self.categories))
        no_change = self.no_change_id
        for (a, b), cat in self.rules.items():
            for cid in (a, b):
                if not 0 <= cid < self.n_classes:
                    raise ValidationError(f"rule references invalid class id {cid}")
            if not 0 <= cat < len(self.categories):
                raise ValidationError(f"rule references invalid category id {cat}")
            if a == b and cat != no_change:
                raise ValidationError(f"identity pair ({a},{a}) must map to 'No change'")
        lut = np.full((self.n_classes, self.n_classes), self.fallback_id, dtype=np.uint8)
        np.fill_diagonal(lut, no_change)
        for (a, b), cat in self.rules.items():
            lut[a, b] = cat
        lut.flags.writeable = False
        object.__setattr__(self, "_lut", lut)

    def _find(self, name: str) -> int:
        return [n.casefold() for n in self.categories].index(name.casefold())

    @property
    def no_change_id(self) -> int:
        return self._find(NO_CHANGE_NAME)

    @property
    def fallback_id(self) -> int:
        return self._find(FALLBACK_NAME)

    @property
    def lut(self) -> np.ndarray:
        """Dense ``n_classes x n_classes`` category lookup table."""
        return self._lut

    @property
    def scheme(self) -> ClassScheme:
        """The categories viewed as a class scheme (for metrics and areas)."""
        return ClassScheme.from_names(self.categories)

    def category_id(self, name: str) -> int:
        try:
            return self._find(name)
        except ValueError:
            raise ValidationError(f"unknown transition category {name!r}") from None


def load_transition_rules(rules_path=None, categories_path=None, n_classes: int | None = None
                          ) -> TransitionRuleSet:
    """Load the category list and rule table (bundled defaults if omitted)."""
    cats = _read_csv(categories_path or data_path("transition_categories.csv"),
                     ("category_id", "name"))
    cats = sorted(cats, key=lambda r: int(r["category_id"]))
    if [int(r["category_id"]) for r in cats] != list(range(len(cats))):
        raise ValidationError("category ids must be contiguous from 0")
    rows = _read_csv(rules_path or data_path("transition_rules.csv"),
                     ("from_id", "to_id", "category_id"))
    rules = {(int(r["from_id"]), int(r["to_id"])): int(r["category_id"]) for r in rows}
    if n_classes is None:
        n_classes = len(load_class_scheme()) if rules_path is None else 1 + max(
            (max(k) for k in rules), default=0)
    return TransitionRuleSet(n_classes, tuple(r["name"] for r in cats), rules)


def map_transition_pair(from_id: int, to_id: int, rules: TransitionRuleSet) -> int:
    for cid in (from_id, to_id):
        if not 0 <= cid < rules.n_classes:
            raise ValidationError(f"invalid class id {cid}")
    if from_id == to_id:
        return rules.no_change_id
    return rules.rules.get((from_id, to_id), rules.fallback_id)


def _check_labels(band: Band, n_classes: int, which: str) -> np.ndarray:
    if band.kind != CATEGORICAL:
        raise ValidationError(f"{which} must be categorical")
    valid = band.valid_mask()
    v = band.values[valid]
    if v.size and int(v.max()) >= n_classes:
        raise ValidationError(
            f"scheme mismatch: {which} contains label {int(v.max())} "
            f"but the rules cover {n_classes} classes"
        )
    return valid


def build_transition_map(labels_t1: GeoGrid, labels_t2: GeoGrid,
                         rules: TransitionRuleSet) -> GeoGrid:
    """Per-pixel transition category; nodata where either date is nodata."""
    labels_t1.require_aligned(labels_t2)
    b1, b2 = labels_t1.bands[0], labels_t2.bands[0]
    valid = _check_labels(b1, rules.n_classes, "labels_t1") & _check_labels(
        b2, rules.n_classes, "labels_t2")
    a = np.where(valid, b1.values, 0).astype(np.intp)
    b = np.where(valid, b2.values, 0).astype(np.intp)
    out = rules.lut[a, b]
    out[~valid] = LABEL_NODATA
    return labels_t1.with_bands([Band(out, CATEGORICAL, "LABEL", LABEL_NODATA)])


def binarize_change(transitions: GeoGrid, rules: TransitionRuleSet | None = None) -> GeoGrid:
    """0 where "No change", 1 for any other category; nodata preserved."""
    band = transitions.bands[0]
    if band.kind != CATEGORICAL:
        raise ValidationError("transition grid must be categorical")
    no_change = 0 if rules is None else rules.no_change_id
    valid = band.valid_mask()
    out = (band.values != no_change).astype(np.uint8)
    nodata = band.nodata
    if not valid.all():
        nodata = LABEL_NODATA
        out[~valid] = LABEL_NODATA
    return transitions.with_bands([Band(out, CATEGORICAL, "LABEL", nodata)])


BINARY_SCHEME = ClassScheme.from_names(["No change", "Change"])


# ---------------------------------------------------------------------------
# Area statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AreaRow:
    class_id: int
    name: str
    pixels: int
    area_ha: float
    share_percent: float


def area_stats(grid: GeoGrid, scheme: ClassScheme) -> list[AreaRow]:
    """Area in hectares and share of all non-nodata pixels, per class."""
    band = grid.bands[0]
    valid = _check_labels(band, len(scheme), "grid")
    counts = np.bincount(band.values[valid].astype(np.intp), minlength=len(scheme))
    total = int(counts.sum())
    pixel_ha = grid.pixel_size ** 2 / 1e4
    return [
        AreaRow(
            c.id, c.name, int(counts[c.id]), float(counts[c.id] * pixel_ha),
            100.0 * counts[c.id] / total if total else 0.0,
        )
        for c in scheme.classes
    ]
