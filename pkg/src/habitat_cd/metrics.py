"""Confusion matrices and the imbalance-aware metrics derived from them.

Orientation is fixed: rows are the reference class, columns the predicted
class.  Per-class metrics that would divide by zero are *undefined* and
represented as NaN; macro averages either skip them (``"exclude"``, the
default) or count them as 0 (``"zero"``).

Per-class "OA" columns in result tables are reported as recall,
TP / (TP + FN), since overall accuracy has no per-class form.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .raster import GeoGrid
from .taxonomy import ClassScheme

UNDEFINED_POLICIES = ("exclude", "zero")


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    counts: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValidationError("confusion matrix must be square")
        if (counts < 0).any():
            raise ValidationError("confusion counts must be non-negative")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @classmethod
    def zeros(cls, k: int) -> "ConfusionMatrix":
        return cls(np.zeros((k, k), dtype=np.int64))

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def tp(self) -> np.ndarray:
        return np.diag(self.counts)

    @property
    def fp(self) -> np.ndarray:
        return self.counts.sum(axis=0) - self.tp

    @property
    def fn(self) -> np.ndarray:
        return self.counts.sum(axis=1) - self.tp

    @property
    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def __eq__(self, other) -> bool:
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return merge(self, other)

    def transpose(self) -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts.T)


def _labels(grid):
    if isinstance(grid, GeoGrid):
        band = grid.bands[0]
        return band.values, band.valid_mask()
    values = np.asarray(grid)
    return values, np.ones(values.shape, dtype=bool)


def accumulate(pred, ref, mask=None, *, n_classes: int) -> ConfusionMatrix:
    """Count (reference, prediction) pairs over valid, unmasked pixels.

    ``pred`` and ``ref`` are categorical grids (or plain integer arrays);
    nodata on either side is skipped.  ``mask`` is a boolean array or grid,
    True where pixels count.
    """
    if isinstance(pred, GeoGrid) and isinstance(ref, GeoGrid):
        pred.require_aligned(ref)
    p, pv = _labels(pred)
    r, rv = _labels(ref)
    if p.shape != r.shape:
        raise ValidationError(f"shape mismatch {p.shape} vs {r.shape}")
    keep = pv & rv
    if mask is not None:
        if isinstance(mask, GeoGrid):
            band = mask.bands[0]
            m = band.valid_mask() & (band.values != 0)
        else:
            m = np.asarray(mask, dtype=bool)
        if m.shape != keep.shape:
            raise ValidationError("mask shape does not match the grids")
        keep &= m
    p = p[keep].astype(np.int64)
    r = r[keep].astype(np.int64)
    for arr, which in ((r, "reference"), (p, "prediction")):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValidationError(
                f"scheme mismatch: {which} label {int(arr.max())} outside 0..{n_classes - 1}"
            )
    counts = np.bincount(r * n_classes + p, minlength=n_classes * n_classes)
    return ConfusionMatrix(counts.reshape(n_classes, n_classes))


def merge(a: ConfusionMatrix, b: ConfusionMatrix) -> ConfusionMatrix:
    if a.k != b.k:
        raise ValidationError(f"cannot merge K={a.k} with K={b.k}")
    return ConfusionMatrix(a.counts + b.counts)


def merge_all(matrices: Iterable[ConfusionMatrix], k: int) -> ConfusionMatrix:
    out = ConfusionMatrix.zeros(k)
    for m in matrices:
        out = merge(out, m)
    return out


def accumulate_sharded(pred, ref, mask=None, *, n_classes: int, n_shards: int = 4,
                       workers: int | None = None) -> ConfusionMatrix:
    """Accumulate row bands in parallel and merge; identical to
    :func:`accumulate` for any shard count."""
    p, pv = _labels(pred)
    r, rv = _labels(ref)
    keep = pv & rv
    if mask is not None:
        keep &= np.asarray(mask, dtype=bool)
    bounds = np.linspace(0, p.shape[0], n_shards + 1).astype(int)

    def shard(i):
        sl = slice(bounds[i], bounds[i + 1])
        return accumulate(p[sl], r[sl], keep[sl], n_classes=n_classes)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(shard, range(n_shards)))
    return merge_all(parts, n_classes)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    num = num.astype(np.float64)
    den = den.astype(np.float64)
    out = np.full(num.shape, np.nan)
    np.divide(num, den, out=out, where=den > 0)
    return out


def per_class_iou(c: ConfusionMatrix) -> np.ndarray:
    return _ratio(c.tp, c.tp + c.fp + c.fn)


def per_class_f1(c: ConfusionMatrix) -> np.ndarray:
    # 2TP / (2TP + FP + FN), the harmonic mean of precision and recall
    # written so that it is defined whenever the class occurs on either side.
    return _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn)


def per_class_precision(c: ConfusionMatrix) -> np.ndarray:
    return _ratio(c.tp, c.tp + c.fp)


def per_class_recall(c: ConfusionMatrix) -> np.ndarray:
    return _ratio(c.tp, c.tp + c.fn)


def overall_accuracy(c: ConfusionMatrix) -> float:
    if c.total == 0:
        raise ValidationError("empty confusion matrix")
    return float(np.trace(c.counts) / c.total)


def macro_average(values: Sequence[float], undefined: str = "exclude") -> float:
    """Unweighted mean of per-class values."""
    if undefined not in UNDEFINED_POLICIES:
        raise ValidationError(f"undefined policy must be one of {UNDEFINED_POLICIES}")
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0 or np.isnan(v).all():
        raise ValidationError("macro average of all-undefined values")
    if undefined == "zero":
        return float(np.nan_to_num(v, nan=0.0).mean())
    return float(v[~np.isnan(v)].mean())


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _clean(x: float) -> float | None:
    return None if x is None or math.isnan(x) else float(x)


@dataclass(frozen=True)
class ClassMetrics:
    class_id: int
    name: str
    iou: float | None
    f1: float | None
    precision: float | None
    recall: float | None
    support: int
    class_frequency_percent: float


@dataclass(frozen=True)
class MetricReport:
    overall_accuracy: float
    macro_iou: float
    macro_f1: float
    macro_recall: float
    per_class: tuple[ClassMetrics, ...]
    n_pixels: int
    undefined_policy: str = "exclude"

    def to_dict(self) -> dict:
        return {
            "overall_accuracy": self.overall_accuracy,
            "macro_iou": self.macro_iou,
            "macro_f1": self.macro_f1,
            "macro_recall": self.macro_recall,
            "n_pixels": self.n_pixels,
            "undefined_policy": self.undefined_policy,
            "per_class": [asdict(m) for m in self.per_class],
        }


def _macro_or_nan(values, undefined) -> float:
    try:
        return macro_average(values, undefined)
    except ValidationError:
        return float("nan")


def report(c: ConfusionMatrix, scheme: ClassScheme, undefined: str = "exclude") -> MetricReport:
    if len(scheme) != c.k:
        raise ValidationError(f"scheme has {len(scheme)} classes, matrix K={c.k}")
    iou, f1 = per_class_iou(c), per_class_f1(c)
    prec, rec = per_class_precision(c), per_class_recall(c)
    support = c.support
    total = c.total
    rows = tuple(
        ClassMetrics(
            cls.id, cls.name, _clean(iou[i]), _clean(f1[i]), _clean(prec[i]), _clean(rec[i]),
            int(support[i]), round(100.0 * support[i] / total, 2) if total else 0.0,
        )
        for i, cls in enumerate(scheme.classes)
    )
    return MetricReport(
        overall_accuracy=overall_accuracy(c),
        macro_iou=_macro_or_nan(iou, undefined),
        macro_f1=_macro_or_nan(f1, undefined),
        macro_recall=_macro_or_nan(rec, undefined),
        per_class=rows,
        n_pixels=total,
        undefined_policy=undefined,
    )


REPORT_COLUMNS = ["row", "class_id", "class", "overall_accuracy", "recall", "iou", "f1",
                  "precision", "support", "class_frequency_percent"]


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "undefined"
    return f"{x:.6f}"


def report_rows(rep: MetricReport) -> list[list[str]]:
    """CSV rows: one per class, then a macro-average row carrying OA."""
    rows = [
        ["class", str(m.class_id), m.name, "", _fmt(m.recall), _fmt(m.iou), _fmt(m.f1),
         _fmt(m.precision), str(m.support), f"{m.class_frequency_percent:.2f}"]
        for m in rep.per_class
    ]
    rows.append(["macro_average", "", "Macro Average", _fmt(rep.overall_accuracy),
                 _fmt(rep.macro_recall), _fmt(rep.macro_iou), _fmt(rep.macro_f1), "",
                 str(rep.n_pixels), "100.00"])
    return rows


def confusion_rows(c: ConfusionMatrix) -> list[list[str]]:
    header = ["reference\\predicted"] + [str(i) for i in range(c.k)]
    return [header] + [[str(i)] + [str(int(v)) for v in row] for i, row in enumerate(c.counts)]


def _write_csv(path: Path, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def dumps(obj) -> str:
    """Deterministic JSON with NaN written as null."""
    def fix(o):
        if isinstance(o, float) and math.isnan(o):
            return None
        if isinstance(o, dict):
            return {k: fix(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [fix(v) for v in o]
        return o
    return json.dumps(fix(obj), indent=2, allow_nan=False) + "\n"


def write_report(rep: MetricReport, c: ConfusionMatrix, out_dir) -> dict[str, Path]:
    """Write ``report.json``, ``report.csv`` and ``confusion.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "report.json": out / "report.json",
        "report.csv": out / "report.csv",
        "confusion.csv": out / "confusion.csv",
    }
    try:
        paths["report.json"].write_text(dumps(rep.to_dict()), encoding="utf-8")
        _write_csv(paths["report.csv"], [REPORT_COLUMNS] + report_rows(rep))
        _write_csv(paths["confusion.csv"], confusion_rows(c))
    except OSError as exc:
        raise ValidationError(f"cannot write report to {out}: {exc}") from exc
    return paths
