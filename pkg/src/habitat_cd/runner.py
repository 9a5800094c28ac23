"""Experiment configs and the end-to-end evaluation runs.

A run reads label rasters (model outputs are produced elsewhere and enter
as files), restricts evaluation to one split role, builds transition maps
with the temporal comparison rules and writes reports.  Four modes:

* ``post_classification``: predicted t2 labels are compared with the t1
  reference labels; the resulting transitions are scored against the
  reference transitions.  Also scores the t2 segmentation itself.
* ``direct_change``: an externally produced change map (categorical over
  the transition categories, or binary) is scored against the truth.
* ablation: one prediction per modality level, summarised in one table.
* synthetic: generates a scene, runs both paradigms with perfect and
  perturbed predictions and cross-checks the generator truth.

Output directory layout::

    report.json  report.csv  summary.csv  confusion.csv
    change_map.tif  run_manifest.json  run.log
    evaluations/<name>/<task>/{report.json,report.csv,confusion.csv}
    figures/*.png
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import platform
from dataclasses import dataclass, field, fields, is_dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .errors import OracleViolation, ValidationError
from .metrics import (
    REPORT_COLUMNS,
    ConfusionMatrix,
    MetricReport,
    accumulate,
    dumps,
    report,
    report_rows,
    write_report,
)
from .raster import CATEGORICAL, CONTINUOUS, Band, GeoGrid, is_valid_tag, read_raster, write_raster
from .sampling import (
    DEFAULT_BLOCK_SIZE,
    DEFAULT_FRACTIONS,
    DEFAULT_OVERLAP,
    DEFAULT_PATCH_SIZE,
    ROLES,
    assign_split,
    extract_patches,
    mosaic_labels,
    partition_blocks,
)
from .synth import SceneSpec, default_scene_spec, generate_scene, perturb_predictions
from .taxonomy import (
    BINARY_SCHEME,
    ClassScheme,
    TransitionRuleSet,
    binarize_change,
    build_transition_map,
    data_path,
    load_class_scheme,
    load_remap_table,
    load_transition_rules,
    remap_labels,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
PARADIGMS = ("post_classification", "direct_change")
INPUT_KEYS = ("reference_t1", "reference_t2", "predictions_t2", "change_map", "truth_map")


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------

def _strict(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ValidationError(f"{where} must be an object")
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValidationError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")
    return cls(**data)


@dataclass
class SplitConfig:
    block_size: int = DEFAULT_BLOCK_SIZE
    seed: int = 0
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS
    evaluate_role: str = "test"

    def __post_init__(self):
        self.fractions = tuple(self.fractions)
        if self.evaluate_role not in ROLES + ("all",):
            raise ValidationError(f"evaluate_role must be one of {ROLES + ('all',)}")


@dataclass
class TilingConfig:
    patch_size: int = DEFAULT_PATCH_SIZE
    overlap: int = DEFAULT_OVERLAP


@dataclass
class LadderLevel:
    name: str
    tags: list[str] = field(default_factory=list)
    predictions_t2: str | None = None
    change_map: str | None = None

    def __post_init__(self):
        bad = [t for t in self.tags if not is_valid_tag(t)]
        if bad:
            raise ValidationError(f"unknown modality tag(s) {bad} in level {self.name!r}")


@dataclass
class SyntheticConfig:
    scene: dict | None = None
    noise_rate: float = 0.2
    noise_seed: int = 1

    def scene_spec(self) -> SceneSpec:
        scene = dict(self.scene or {})
        if scene.get("class_frequencies", "default") == "default":
            base = default_scene_spec(
                scene.pop("width", 1000), scene.pop("height", 1000),
                scene.pop("superpixel_size", 25), scene.pop("seed", 0))
            scene.pop("class_frequencies", None)
            events = scene.pop("transition_events", "default")
            merged = base.to_dict()
            if events != "default":
                merged["transition_events"] = events
            merged.update(scene)
            return SceneSpec.from_dict(merged)
        return SceneSpec.from_dict(scene)


@dataclass
class ExperimentConfig:
    paradigm: str = "post_classification"
    inputs: dict[str, str] = field(default_factory=dict)
    scheme: str | None = None
    transition_rules: str | None = None
    transition_categories: str | None = None
    remap: str | None = None
    remap_default: str | int = "error"
    change_map_kind: str = "multiclass"
    split: SplitConfig = field(default_factory=SplitConfig)
    tiling: TilingConfig = field(default_factory=TilingConfig)
    modality_ladder: list[LadderLevel] | None = None
    synthetic: SyntheticConfig | None = None
    undefined: str = "exclude"
    figures: bool = True
    output_dir: str = "run_output"
    schema_version: int = SCHEMA_VERSION
    base_dir: Path = field(default=Path("."), repr=False)

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ValidationError(f"unsupported schema_version {self.schema_version}")
        if self.paradigm not in PARADIGMS:
            raise ValidationError(f"paradigm must be one of {PARADIGMS}")
        if self.change_map_kind not in ("multiclass", "binary"):
            raise ValidationError("change_map_kind must be 'multiclass' or 'binary'")
        if self.undefined not in ("exclude", "zero"):
            raise ValidationError("undefined must be 'exclude' or 'zero'")
        unknown = set(self.inputs) - set(INPUT_KEYS)
        if unknown:
            raise ValidationError(f"unknown input key(s): {', '.join(sorted(unknown))}")

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "ExperimentConfig":
        data = dict(data)
        if "base_dir" in data:
            raise ValidationError("unknown key(s) in config: base_dir")
        if "split" in data:
            data["split"] = _strict(SplitConfig, data["split"], "split")
        if "tiling" in data:
            data["tiling"] = _strict(TilingConfig, data["tiling"], "tiling")
        if data.get("modality_ladder") is not None:
            data["modality_ladder"] = [
                _strict(LadderLevel, lv, "modality_ladder level") for lv in data["modality_ladder"]
            ]
        if data.get("synthetic") is not None:
            data["synthetic"] = _strict(SyntheticConfig, data["synthetic"], "synthetic")
        try:
            cfg = _strict(cls, data, "config")
        except TypeError as exc:
            raise ValidationError(f"invalid config: {exc}") from exc
        cfg.base_dir = Path(base_dir)
        return cfg

    def to_dict(self) -> dict:
        def conv(o):
            if is_dataclass(o):
                return {f.name: conv(getattr(o, f.name)) for f in fields(o) if f.name != "base_dir"}
            if isinstance(o, (list, tuple)):
                return [conv(v) for v in o]
            if isinstance(o, dict):
                return {k: conv(v) for k, v in o.items()}
            if isinstance(o, Path):
                return str(o)
            return o
        return conv(self)

    def resolve(self, path: str | None) -> Path | None:
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def input_path(self, key: str) -> Path:
        if key not in self.inputs:
            raise ValidationError(f"missing input {key!r}")
        p = self.resolve(self.inputs[key])
        if not p.exists():
            raise ValidationError(f"input {key!r} not found: {p}")
        return p

    @property
    def out_dir(self) -> Path:
        # Inputs resolve against the config file; outputs against the CWD.
        return Path(self.output_dir)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    return ExperimentConfig.from_dict(data, base_dir=path.parent)


def bundled_config_path(name: str = "synthetic") -> Path:
    return data_path(f"{name}_config.json")


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class TaskResult:
    report: MetricReport
    confusion: ConfusionMatrix
    scheme: ClassScheme


@dataclass
class Evaluation:
    name: str
    tasks: dict[str, TaskResult]
    change_map: GeoGrid | None = None


@dataclass
class RunContext:
    cfg: ExperimentConfig
    scheme: ClassScheme
    rules: TransitionRuleSet
    inputs: dict[str, Path] = field(default_factory=dict)
    seeds: dict[str, int] = field(default_factory=dict)
    checks: dict[str, Any] = field(default_factory=dict)


def _context(cfg: ExperimentConfig) -> RunContext:
    scheme = load_class_scheme(cfg.resolve(cfg.scheme))
    rules = load_transition_rules(cfg.resolve(cfg.transition_rules),
                                  cfg.resolve(cfg.transition_categories),
                                  n_classes=len(scheme))
    ctx = RunContext(cfg, scheme, rules)
    ctx.seeds["split"] = cfg.split.seed
    return ctx


def _task(pred, ref, mask, scheme: ClassScheme, undefined: str) -> TaskResult:
    cm = accumulate(pred, ref, mask, n_classes=len(scheme))
    return TaskResult(report(cm, scheme, undefined), cm, scheme)


def evaluate_change(name: str, predicted: GeoGrid, truth: GeoGrid, mask, rules: TransitionRuleSet,
                    undefined: str = "exclude", multiclass: bool = True) -> Evaluation:
    """Score a change map against the truth transitions.

    ``predicted`` is categorical over the transition categories, or a 0/1
    map when ``multiclass`` is False.  The binary task always derives from
    the multi-class truth through :func:`binarize_change`.
    """
    truth_binary = binarize_change(truth, rules)
    tasks = {}
    if multiclass:
        tasks["multiclass"] = _task(predicted, truth, mask, rules.scheme, undefined)
        pred_binary = binarize_change(predicted, rules)
    else:
        pred_binary = predicted
    tasks["binary"] = _task(pred_binary, truth_binary, mask, BINARY_SCHEME, undefined)
    return Evaluation(name, tasks, predicted)


def _labels_input(ctx: RunContext, key: str, path: Path | None = None) -> GeoGrid:
    path = path or ctx.cfg.input_path(key)
    ctx.inputs[key] = path
    grid = read_raster(path)
    if grid.bands[0].kind == CONTINUOUS:
        score_bands = [b for b in grid.bands if b.tag.startswith("SCORE:")]
        if not score_bands:
            raise ValidationError(f"{key}: expected labels or SCORE bands")
        scores = np.stack([b.values for b in score_bands])
        labels = np.argmax(scores, axis=0).astype(np.uint8)
        grid = grid.with_bands([Band(labels, CATEGORICAL, "LABEL", None)])
    if ctx.cfg.remap is not None:
        table = load_remap_table(ctx.cfg.resolve(ctx.cfg.remap), ctx.cfg.remap_default)
        grid = remap_labels(grid, table)
    return grid


def _eval_mask(ctx: RunContext, shape) -> np.ndarray | None:
    split = ctx.cfg.split
    if split.evaluate_role == "all":
        return None
    assignment = assign_split(partition_blocks(shape, split.block_size), split.seed,
                              split.fractions)
    mask = assignment.role_mask(split.evaluate_role)
    others = [assignment.role_mask(r) for r in ROLES if r != split.evaluate_role]
    leaked = int(sum((mask & o).sum() for o in others))
    if leaked:
        raise OracleViolation(f"{leaked} evaluation pixels belong to other split roles")
    ctx.checks["split_blocks"] = assignment.counts()
    ctx.checks["evaluated_pixels"] = int(mask.sum())
    ctx.checks["mask_overlap_pixels"] = leaked
    return mask


def _post_classification(ctx: RunContext, ref_t1: GeoGrid, ref_t2: GeoGrid, pred_t2: GeoGrid,
                         mask, name: str = "post_classification") -> Evaluation:
    truth = build_transition_map(ref_t1, ref_t2, ctx.rules)
    predicted = build_transition_map(ref_t1, pred_t2, ctx.rules)
    ev = evaluate_change(name, predicted, truth, mask, ctx.rules, ctx.cfg.undefined)
    ev.tasks["segmentation"] = _task(pred_t2, ref_t2, mask, ctx.scheme, ctx.cfg.undefined)
    return ev


def _truth_for_direct(ctx: RunContext) -> GeoGrid:
    if "truth_map" in ctx.cfg.inputs:
        return _labels_input(ctx, "truth_map")
    ref_t1 = _labels_input(ctx, "reference_t1")
    ref_t2 = _labels_input(ctx, "reference_t2")
    return build_transition_map(ref_t1, ref_t2, ctx.rules)


def _direct(ctx: RunContext, change_map: GeoGrid, truth: GeoGrid, mask,
            name: str = "direct_change") -> Evaluation:
    change_map.require_aligned(truth)
    valid = change_map.bands[0].valid_mask()
    present = np.unique(change_map.values[valid])
    multiclass = ctx.cfg.change_map_kind == "multiclass"
    limit = len(ctx.rules.categories) if multiclass else 2
    if present.size and present.max() >= limit:
        raise ValidationError(
            f"category-set mismatch: change map holds value {int(present.max())}, "
            f"expected 0..{limit - 1}"
        )
    return evaluate_change(name, change_map, truth, mask, ctx.rules, ctx.cfg.undefined,
                           multiclass=multiclass)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt(x) -> str:
    return "undefined" if x is None or x != x else f"{x:.6f}"


def _write_csv(path: Path, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def summary_rows(evaluations: list[Evaluation]) -> list[list[str]]:
    tasks = ("binary", "multiclass", "segmentation")
    header = ["evaluation"] + [f"{t}_{m}" for t in tasks
                               for m in ("overall_accuracy", "macro_iou", "macro_f1")]
    rows = [header]
    for ev in evaluations:
        row = [ev.name]
        for t in tasks:
            if t in ev.tasks:
                r = ev.tasks[t].report
                row += [_fmt(r.overall_accuracy), _fmt(r.macro_iou), _fmt(r.macro_f1)]
            else:
                row += ["", "", ""]
        rows.append(row)
    return rows


def write_outputs(ctx: RunContext, evaluations: list[Evaluation], extra: dict | None = None
                  ) -> dict[str, Path]:
    cfg = ctx.cfg
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}

    doc = {"schema_version": SCHEMA_VERSION, "evaluations": {}}
    report_csv = [["evaluation", "task"] + REPORT_COLUMNS]
    confusion_csv = [["evaluation", "task", "reference_id", "predicted_id", "count"]]
    for ev in evaluations:
        doc["evaluations"][ev.name] = {t: r.report.to_dict() for t, r in ev.tasks.items()}
        for task, res in ev.tasks.items():
            report_csv += [[ev.name, task] + row for row in report_rows(res.report)]
            k = res.confusion.k
            confusion_csv += [[ev.name, task, str(i), str(j), str(int(res.confusion.counts[i, j]))]
                              for i in range(k) for j in range(k)]
            sub = out / "evaluations" / ev.name / task
            write_report(res.report, res.confusion, sub)
    if extra:
        doc.update(extra)

    written["report.json"] = out / "report.json"
    written["report.json"].write_text(dumps(doc), encoding="utf-8")
    written["report.csv"] = out / "report.csv"
    _write_csv(written["report.csv"], report_csv)
    written["confusion.csv"] = out / "confusion.csv"
    _write_csv(written["confusion.csv"], confusion_csv)
    written["summary.csv"] = out / "summary.csv"
    _write_csv(written["summary.csv"], summary_rows(evaluations))

    maps = [ev for ev in evaluations if ev.change_map is not None]
    if maps:
        written["change_map.tif"] = out / "change_map.tif"
        write_raster(maps[0].change_map, written["change_map.tif"])
        if len(maps) > 1:
            (out / "maps").mkdir(exist_ok=True)
            for ev in maps:
                write_raster(ev.change_map, out / "maps" / f"{ev.name}.tif")

    if cfg.figures:
        from . import plotting

        fig_dir = out / "figures"
        for ev in evaluations:
            for task, res in ev.tasks.items():
                plotting.plot_confusion(res.confusion.counts, res.scheme.names,
                                        fig_dir / f"{ev.name}_{task}_confusion.png",
                                        f"{ev.name} ({task})")
                plotting.plot_per_class(res.report, fig_dir / f"{ev.name}_{task}_per_class.png")
        if maps:
            plotting.plot_label_map(maps[0].change_map, ctx.rules.categories,
                                    fig_dir / "change_map.png", maps[0].name)

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "versions": _versions(),
        "config": cfg.to_dict(),
        "seeds": ctx.seeds,
        "inputs": {k: {"path": str(p), "sha256": _sha256(p)} for k, p in sorted(ctx.inputs.items())},
        "checks": ctx.checks,
        "outputs": {k: _sha256(p) for k, p in sorted(written.items())},
    }
    written["run_manifest.json"] = out / "run_manifest.json"
    written["run_manifest.json"].write_text(dumps(manifest), encoding="utf-8")
    with (out / "run.log").open("a", encoding="utf-8") as fh:
        fh.write(f"{datetime.now(timezone.utc).isoformat()} run finished "
                 f"evaluations={[e.name for e in evaluations]}\n")
    return written


def _versions() -> dict[str, str]:
    import rasterio

    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "rasterio": rasterio.__version__,
    }


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------

def run_post_classification(cfg: ExperimentConfig, write: bool = True) -> list[Evaluation]:
    ctx = _context(cfg)
    ref_t1 = _labels_input(ctx, "reference_t1")
    ref_t2 = _labels_input(ctx, "reference_t2")
    pred_t2 = _labels_input(ctx, "predictions_t2")
    ref_t1.require_aligned(ref_t2)
    ref_t1.require_aligned(pred_t2)
    mask = _eval_mask(ctx, ref_t1.shape)
    evaluations = [_post_classification(ctx, ref_t1, ref_t2, pred_t2, mask)]
    if write:
        write_outputs(ctx, evaluations)
    return evaluations


def run_direct_change(cfg: ExperimentConfig, write: bool = True) -> list[Evaluation]:
    ctx = _context(cfg)
    truth = _truth_for_direct(ctx)
    change_map = _labels_input(ctx, "change_map")
    mask = _eval_mask(ctx, truth.shape)
    evaluations = [_direct(ctx, change_map, truth, mask)]
    if write:
        write_outputs(ctx, evaluations)
    return evaluations


ABLATION_COLUMNS = ["modalities", "tags", "change_task",
                    "change_overall_accuracy", "change_macro_iou", "change_macro_f1",
                    "segmentation_overall_accuracy", "segmentation_macro_iou",
                    "segmentation_macro_f1"]


def run_ablation(cfg: ExperimentConfig, write: bool = True) -> list[dict]:
    """One row per modality level, in ladder order."""
    if not cfg.modality_ladder:
        raise ValidationError("ablation requires ≥1 level")
    ctx = _context(cfg)
    post = cfg.paradigm == "post_classification"
    if post:
        ref_t1 = _labels_input(ctx, "reference_t1")
        ref_t2 = _labels_input(ctx, "reference_t2")
        ref_t1.require_aligned(ref_t2)
        shape = ref_t1.shape
    else:
        truth = _truth_for_direct(ctx)
        shape = truth.shape
    mask = _eval_mask(ctx, shape)

    rows, evaluations = [], []
    for i, level in enumerate(cfg.modality_ladder):
        key = f"level{i}:{level.name}"
        if post:
            if level.predictions_t2 is None:
                raise ValidationError(f"ablation level {level.name!r} lacks predictions_t2")
            pred = _labels_input(ctx, key, cfg.resolve(level.predictions_t2))
            ev = _post_classification(ctx, ref_t1, ref_t2, pred, mask, f"ablation_{i}")
        else:
            if level.change_map is None:
                raise ValidationError(f"ablation level {level.name!r} lacks change_map")
            cmap = _labels_input(ctx, key, cfg.resolve(level.change_map))
            ev = _direct(ctx, cmap, truth, mask, f"ablation_{i}")
        evaluations.append(ev)
        change_task = "multiclass" if "multiclass" in ev.tasks else "binary"
        row = {"modalities": level.name, "tags": "+".join(level.tags), "change_task": change_task}
        for prefix, task in (("change", change_task), ("segmentation", "segmentation")):
            r = ev.tasks[task].report if task in ev.tasks else None
            for m in ("overall_accuracy", "macro_iou", "macro_f1"):
                row[f"{prefix}_{m}"] = None if r is None else getattr(r, m)
        rows.append(row)

    if write:
        write_outputs(ctx, evaluations)
        out = cfg.out_dir
        _write_csv(out / "ablation.csv", [ABLATION_COLUMNS] + [
            [r[c] if isinstance(r[c], str) else ("" if r[c] is None else _fmt(r[c]))
             for c in ABLATION_COLUMNS] for r in rows])
        if cfg.figures:
            from . import plotting

            plotting.plot_ablation(rows, out / "figures" / "ablation.png")
    return rows


def run_synthetic_end_to_end(spec: SceneSpec, cfg: ExperimentConfig, write: bool = True
                             ) -> list[Evaluation]:
    """Generate a scene and evaluate both paradigms on it.

    Raises :class:`OracleViolation` if the generator truth differs from the
    rule-based transition map, if tiling then mosaicking changes a label
    map, or if perfect predictions score below 1.
    """
    ctx = _context(cfg)
    syn = cfg.synthetic or SyntheticConfig()
    ctx.seeds.update(scene=spec.seed, noise=syn.noise_seed)
    rules = ctx.rules
    scene = generate_scene(spec, rules)

    rebuilt = build_transition_map(scene.t1, scene.t2, rules)
    if not np.array_equal(rebuilt.values, scene.truth.values):
        n = int((rebuilt.values != scene.truth.values).sum())
        raise OracleViolation(f"generator truth differs from rule-based map at {n} pixels")
    identity = build_transition_map(scene.t1, scene.t1, rules)
    if not (identity.values[scene.t1.bands[0].valid_mask()] == rules.no_change_id).all():
        raise OracleViolation("identical dates produced a change")
    ctx.checks["truth_map_equal"] = True

    k = len(ctx.scheme)
    noisy_t2 = perturb_predictions(scene.t2, syn.noise_rate, syn.noise_seed, n_classes=k)
    index, patches = extract_patches(noisy_t2, cfg.tiling.patch_size, cfg.tiling.overlap)
    mosaicked = mosaic_labels(patches, index, nodata=noisy_t2.bands[0].nodata)
    if not np.array_equal(mosaicked.values, noisy_t2.values):
        raise OracleViolation("tiling round-trip altered the prediction map")
    ctx.checks["tiling_round_trip"] = {"patches": len(index.origins), "identical": True}

    noisy_change = perturb_predictions(scene.truth, syn.noise_rate, syn.noise_seed + 1,
                                       n_classes=len(rules.categories))
    mask = _eval_mask(ctx, scene.t1.shape)
    evaluations = [
        _post_classification(ctx, scene.t1, scene.t2, scene.t2, mask,
                             "post_classification_perfect"),
        _post_classification(ctx, scene.t1, scene.t2, mosaicked, mask,
                             "post_classification_noisy"),
        _direct(ctx, scene.truth, scene.truth, mask, "direct_change_perfect"),
        _direct(ctx, noisy_change, scene.truth, mask, "direct_change_noisy"),
    ]
    for ev in evaluations:
        if ev.name.endswith("_perfect"):
            for task, res in ev.tasks.items():
                r = res.report
                if not (r.overall_accuracy == 1.0 and r.macro_iou == 1.0 and r.macro_f1 == 1.0):
                    raise OracleViolation(f"{ev.name}/{task}: perfect predictions scored below 1")
    ctx.checks["perfect_predictions_score_one"] = True

    if write:
        out = cfg.out_dir
        (out / "scene").mkdir(parents=True, exist_ok=True)
        write_raster(scene.t1, out / "scene" / "t1.tif")
        write_raster(scene.t2, out / "scene" / "t2.tif")
        write_raster(scene.truth, out / "scene" / "truth.tif")
        write_outputs(ctx, evaluations, {"scene": spec.to_dict(), "noise_rate": syn.noise_rate})
        if cfg.figures:
            from . import plotting

            plotting.plot_label_map(scene.t1, ctx.scheme.names, out / "figures" / "scene_t1.png",
                                    "Synthetic labels t1")
    return evaluations


def run(cfg: ExperimentConfig, write: bool = True):
    """Dispatch on the config: synthetic, ablation, or one paradigm."""
    if cfg.synthetic is not None:
        return run_synthetic_end_to_end(cfg.synthetic.scene_spec(), cfg, write)
    if cfg.modality_ladder is not None:
        return run_ablation(cfg, write)
    if cfg.paradigm == "post_classification":
        return run_post_classification(cfg, write)
    return run_direct_change(cfg, write)
