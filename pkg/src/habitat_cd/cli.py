"""Command line entry point ``habitat-cd``.

Exit codes: 0 success, 2 validation error, 3 oracle violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import OracleViolation, ValidationError

log = logging.getLogger("habitat_cd")


def _fractions(text: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("fractions look like 0.7,0.15,0.15") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("need exactly three fractions")
    return parts


def _out(args, default: str) -> Path:
    out = Path(args.out or default)
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_split(args) -> None:
    from .raster import read_raster
    from .sampling import assign_split, partition_blocks, save_split_csv

    if args.raster:
        shape = read_raster(args.raster).shape
    elif args.extent:
        shape = tuple(args.extent)
    else:
        raise ValidationError("split needs --raster or --extent H W")
    assignment = assign_split(partition_blocks(shape, args.block_size), args.seed, args.fractions)
    out = _out(args, "split.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_split_csv(assignment, out)
    counts = assignment.counts()
    log.info("wrote %s (%s)", out, ", ".join(f"{k}={v}" for k, v in counts.items()))


def cmd_tile(args) -> None:
    import numpy as np

    from .raster import read_raster
    from .sampling import extract_patches, save_patch_index

    grid = read_raster(args.raster)
    index, patches = extract_patches(grid, args.patch_size, args.overlap)
    out = _out(args, "tiles")
    out.mkdir(parents=True, exist_ok=True)
    np.save(out / "patches.npy", patches)
    save_patch_index(index, out / "patch_index.csv")
    meta = {
        "patch_size": index.patch_size, "overlap": index.overlap,
        "height": index.height, "width": index.width,
        "pixel_size": index.pixel_size, "origin": list(index.origin), "crs": index.crs,
        "nodata": grid.bands[0].nodata, "tags": grid.tags,
    }
    (out / "tiling.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    log.info("wrote %d patches to %s", len(index.origins), out)


def cmd_mosaic(args) -> None:
    import numpy as np

    from .raster import write_raster
    from .sampling import load_patch_index, mosaic_labels, mosaic_scores

    tiles = Path(args.tiles)
    meta = json.loads((tiles / "tiling.json").read_text(encoding="utf-8"))
    index = load_patch_index(
        tiles / "patch_index.csv", meta["patch_size"], meta["overlap"], meta["height"],
        meta["width"], pixel_size=meta["pixel_size"], origin=tuple(meta["origin"]),
        crs=meta["crs"])
    patches = np.load(Path(args.patches) if args.patches else tiles / "patches.npy")
    if args.mode == "scores":
        grid = mosaic_scores(patches, index)
    else:
        nodata = meta.get("nodata")
        grid = mosaic_labels(patches, index, nodata=None if nodata is None else int(nodata))
    out = _out(args, "mosaic.tif")
    write_raster(grid, out)
    log.info("wrote %s", out)


def cmd_terrain(args) -> None:
    from .raster import read_raster, write_raster
    from .terrain import derive_all

    dtm = read_raster(args.dtm)
    dsm = read_raster(args.dsm) if args.dsm else None
    out = _out(args, "terrain")
    out.mkdir(parents=True, exist_ok=True)
    for name, grid in derive_all(dtm, dsm, args.window).items():
        write_raster(grid, out / f"{name}.tif")
        log.info("wrote %s", out / f"{name}.tif")


def cmd_remap(args) -> None:
    from .raster import read_raster, write_raster
    from .taxonomy import load_remap_table, remap_labels

    default = args.default
    if default not in ("error", "pass"):
        try:
            default = int(default)
        except ValueError:
            raise ValidationError("--default must be error, pass or an integer id") from None
    table = load_remap_table(args.table, default)
    out = _out(args, "remapped.tif")
    write_raster(remap_labels(read_raster(args.raster), table), out)
    log.info("wrote %s", out)


def cmd_compare(args) -> None:
    from .raster import read_raster, write_raster
    from .taxonomy import (
        area_stats,
        binarize_change,
        build_transition_map,
        load_class_scheme,
        load_transition_rules,
    )

    n = len(load_class_scheme(args.scheme))
    rules = load_transition_rules(args.rules, args.categories, n_classes=n)
    change = build_transition_map(read_raster(args.t1), read_raster(args.t2), rules)
    out = _out(args, "change_map.tif")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_raster(change, out)
    if args.binary_out:
        write_raster(binarize_change(change, rules), args.binary_out)
    for row in area_stats(change, rules.scheme):
        log.info("%-52s %12.4f ha %7.2f %%", row.name, row.area_ha, row.share_percent)


def cmd_metrics(args) -> None:
    from .metrics import accumulate, report, write_report
    from .raster import read_raster
    from .taxonomy import load_class_scheme

    scheme = load_class_scheme(args.scheme)
    pred, ref = read_raster(args.pred), read_raster(args.ref)
    mask = read_raster(args.mask) if args.mask else None
    cm = accumulate(pred, ref, mask, n_classes=len(scheme))
    rep = report(cm, scheme, args.undefined)
    out = _out(args, "metrics")
    write_report(rep, cm, out)
    if not args.no_figures:
        from . import plotting

        plotting.plot_confusion(cm.counts, scheme.names, out / "figures" / "confusion.png")
        plotting.plot_per_class(rep, out / "figures" / "per_class.png")
    log.info("OA %.4f  macro IoU %.4f  macro F1 %.4f",
             rep.overall_accuracy, rep.macro_iou, rep.macro_f1)


def cmd_synth(args) -> None:
    from dataclasses import replace

    from .raster import write_raster
    from .synth import default_scene_spec, generate_scene, load_scene_spec

    spec = load_scene_spec(args.spec) if args.spec else default_scene_spec()
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    scene = generate_scene(spec)
    out = _out(args, "scene")
    out.mkdir(parents=True, exist_ok=True)
    write_raster(scene.t1, out / "t1.tif")
    write_raster(scene.t2, out / "t2.tif")
    write_raster(scene.truth, out / "truth.tif")
    (out / "scene_spec.json").write_text(json.dumps(spec.to_dict(), indent=2) + "\n",
                                         encoding="utf-8")
    log.info("wrote scene to %s", out)


def cmd_run(args) -> None:
    from . import runner

    cfg_path = Path(args.config) if args.config else runner.bundled_config_path()
    cfg = runner.load_config(cfg_path)
    if args.out:
        cfg.output_dir = str(Path(args.out).resolve())
    if args.seed is not None:
        cfg.split.seed = args.seed
        if cfg.synthetic is not None:
            cfg.synthetic.scene = dict(cfg.synthetic.scene or {}, seed=args.seed)
    if args.no_figures:
        cfg.figures = False
    runner.run(cfg)
    log.info("reports written to %s", cfg.out_dir)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--config", help="experiment config JSON (run)")

    p = argparse.ArgumentParser(prog="habitat-cd", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("split", parents=[common], help="spatial block train/val/test split")
    s.add_argument("--raster")
    s.add_argument("--extent", type=int, nargs=2, metavar=("HEIGHT", "WIDTH"))
    s.add_argument("--block-size", type=int, default=512)
    s.add_argument("--fractions", type=_fractions, default=(0.7, 0.15, 0.15))
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("tile", parents=[common], help="cut a raster into overlapping patches")
    s.add_argument("raster")
    s.add_argument("--patch-size", type=int, default=256)
    s.add_argument("--overlap", type=int, default=64)
    s.set_defaults(func=cmd_tile)

    s = sub.add_parser("mosaic", parents=[common], help="reassemble patches into a label map")
    s.add_argument("tiles", help="directory written by `tile`")
    s.add_argument("--patches", help="(n, K, p, p) score or (n, p, p) label .npy")
    s.add_argument("--mode", choices=("labels", "scores"), default="labels")
    s.set_defaults(func=cmd_mosaic)

    s = sub.add_parser("terrain", parents=[common], help="nDSM, slope, aspect, roughness, curvature")
    s.add_argument("--dtm", required=True)
    s.add_argument("--dsm")
    s.add_argument("--window", type=int, default=3)
    s.set_defaults(func=cmd_terrain)

    s = sub.add_parser("remap", parents=[common], help="apply a label remap table")
    s.add_argument("raster")
    s.add_argument("--table", help="source_id,target_id CSV (bundled identity if omitted)")
    s.add_argument("--default", default="error")
    s.set_defaults(func=cmd_remap)

    s = sub.add_parser("compare", parents=[common], help="temporal comparison of two label maps")
    s.add_argument("t1")
    s.add_argument("t2")
    s.add_argument("--scheme")
    s.add_argument("--rules")
    s.add_argument("--categories")
    s.add_argument("--binary-out")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("metrics", parents=[common], help="confusion matrix and metric report")
    s.add_argument("pred")
    s.add_argument("ref")
    s.add_argument("--mask")
    s.add_argument("--scheme")
    s.add_argument("--undefined", choices=("exclude", "zero"), default="exclude")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic bi-temporal scene")
    s.add_argument("--spec", help="SceneSpec JSON (default calibration if omitted)")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("run", parents=[common], help="run an experiment config")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except OracleViolation as exc:
        log.error("oracle violation: %s", exc)
        return 3
    except ValidationError as exc:
        log.error("%s", exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
