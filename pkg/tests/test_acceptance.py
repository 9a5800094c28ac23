"""Acceptance suite: the ten release criteria, each at its stated tolerance
and runtime budget.

Run with ``pytest tests/test_acceptance.py``; one PASS/FAIL line per
criterion is printed in the terminal summary.  ``python tests/test_acceptance.py``
runs the same checks without pytest.
"""

import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from habitat_cd import runner  # noqa: E402
from habitat_cd.metrics import (  # noqa: E402
    accumulate,
    accumulate_sharded,
    macro_average,
    overall_accuracy,
    per_class_f1,
    per_class_iou,
    per_class_recall,
    report,
)
from habitat_cd.raster import CATEGORICAL, CONTINUOUS, GeoGrid  # noqa: E402
from habitat_cd.sampling import (  # noqa: E402
    ROLES,
    assign_split,
    extract_patches,
    mosaic_labels,
    partition_blocks,
)
from habitat_cd.synth import (  # noqa: E402
    SceneSpec,
    TransitionEvent,
    default_scene_spec,
    generate_scene,
    generate_t1,
    perturb_predictions,
)
from habitat_cd.taxonomy import (  # noqa: E402
    BINARY_SCHEME,
    ClassScheme,
    area_stats,
    binarize_change,
    build_transition_map,
    load_class_scheme,
    load_transition_rules,
)
from habitat_cd.terrain import derive_all, slope_aspect  # noqa: E402

from reference_columns import F1, IOU, MACRO, RECALL  # noqa: E402

RESULTS: dict[int, tuple[bool, str, float]] = {}

TITLES = {
    1: "macro-average arithmetic (per-class table)",
    2: "area-share arithmetic (class and transition tables)",
    3: "metric oracle equivalence",
    4: "tile-merge determinism",
    5: "tiling round-trip",
    6: "split correctness",
    7: "terrain kernels",
    8: "cross-module transition oracle",
    9: "noise-model calibration",
    10: "end-to-end reproducibility",
}
BUDGET_S = {1: 1, 2: 1, 3: 10, 4: 10, 5: 10, 6: 1, 7: 5, 8: 30, 9: 60, 10: 60}

# Reference hectare columns: class areas and transition areas.
CLASS_AREA_HA = [2632.8, 2225.5, 1394.3, 1283.5, 1095.7, 1070.5, 686.1, 594.7, 594.3, 462.7,
                 447.3, 439.8, 392.4, 365.7, 359.0, 340.4, 244.0, 206.1, 161.3, 158.7, 130.3,
                 95.3, 17.2]
TRANSITION_AREA_HA = [13994.1, 294.3, 119.0, 95.3, 306.4, 40.9, 158.7, 242.7, 146.3]


def record(n, fn):
    t0 = time.perf_counter()
    try:
        detail = fn()
        ok = True
    except AssertionError as exc:
        ok, detail = False, f"assertion failed: {exc}"
    elapsed = time.perf_counter() - t0
    if ok and elapsed >= BUDGET_S[n]:
        ok, detail = False, f"{detail}; over budget"
    RESULTS[n] = (ok, detail, elapsed)
    return ok, detail, elapsed


def line(n):
    ok, detail, elapsed = RESULTS[n]
    return (f"{'PASS' if ok else 'FAIL'} criterion {n:2d} {TITLES[n]} "
            f"[{elapsed:.2f}s / {BUDGET_S[n]}s] {detail}")


# -- criteria ---------------------------------------------------------------------

def criterion_1():
    got = {"recall": macro_average(RECALL), "iou": macro_average(IOU), "f1": macro_average(F1)}
    for key, value in got.items():
        assert abs(value - MACRO[key]) <= 0.005, (key, value)
    return "OA {recall:.4f} IoU {iou:.4f} F1 {f1:.4f}".format(**got)


def _shares(hectares, scheme):
    # One pixel per 0.1 ha, so the counts reproduce the hectare columns.
    counts = np.rint(np.asarray(hectares) * 10).astype(np.int64)
    values = np.repeat(np.arange(len(counts), dtype=np.uint8), counts).reshape(1, -1)
    grid = GeoGrid.from_array(values, kind=CATEGORICAL, pixel_size=math.sqrt(1000.0))
    return area_stats(grid, scheme)


def criterion_2():
    rows = _shares(CLASS_AREA_HA, load_class_scheme())
    rock = rows[0].share_percent
    assert abs(rock - 17.1) <= 0.05, rock
    rows = _shares(TRANSITION_AREA_HA, load_transition_rules().scheme)
    no_change = rows[0].share_percent
    assert abs(no_change - 90.9) <= 0.05, no_change
    return f"Rock {rock:.3f}%  No change {no_change:.3f}%"


def _brute(pred, ref, k):
    tp = [0] * k
    fp = [0] * k
    fn = [0] * k
    agree = 0
    for p, r in zip(pred.ravel().tolist(), ref.ravel().tolist()):
        if p == r:
            agree += 1
            tp[p] += 1
        else:
            fp[p] += 1
            fn[r] += 1
    nan = float("nan")
    iou = [tp[c] / (tp[c] + fp[c] + fn[c]) if tp[c] + fp[c] + fn[c] else nan for c in range(k)]
    f1 = [2 * tp[c] / (2 * tp[c] + fp[c] + fn[c]) if tp[c] + fp[c] + fn[c] else nan
          for c in range(k)]
    rec = [tp[c] / (tp[c] + fn[c]) if tp[c] + fn[c] else nan for c in range(k)]
    return agree / pred.size, iou, f1, rec


def criterion_3():
    g = np.random.default_rng(3)
    n = 120
    for _ in range(n):
        k = int(g.integers(2, 10))
        h, w = (int(v) for v in g.integers(1, 65, size=2))
        pred, ref = g.integers(0, k, size=(h, w)), g.integers(0, k, size=(h, w))
        c = accumulate(pred, ref, n_classes=k)
        oa, iou, f1, rec = _brute(pred, ref, k)
        assert overall_accuracy(c) == oa
        np.testing.assert_array_equal(per_class_iou(c), iou)
        np.testing.assert_array_equal(per_class_f1(c), f1)
        np.testing.assert_array_equal(per_class_recall(c), rec)
        ci, cf = per_class_iou(c), per_class_f1(c)
        ok = ~np.isnan(ci)
        assert (np.abs(cf[ok] - 2 * ci[ok] / (1 + ci[ok])) <= 1e-12).all()
    return f"{n} pairs exact"


def criterion_4():
    g = np.random.default_rng(4)
    for _ in range(10):
        k = int(g.integers(2, 24))
        h, w = (int(v) for v in g.integers(50, 400, size=2))
        pred, ref = g.integers(0, k, size=(h, w)), g.integers(0, k, size=(h, w))
        mask = g.random((h, w)) < 0.9
        whole = accumulate(pred, ref, mask, n_classes=k)
        scheme = ClassScheme.from_names([str(i) for i in range(k)])
        expected = report(whole, scheme).to_dict()
        for shards in (1, 2, 8):
            merged = accumulate_sharded(pred, ref, mask, n_classes=k, n_shards=shards)
            assert merged == whole
            assert report(merged, scheme).to_dict() == expected
    return "10 scenes x {1,2,8} shards identical"


def criterion_5():
    g = np.random.default_rng(5)
    sizes = [(500, 500), (448, 448), (256, 256), (257, 700), (640, 300)]
    sizes += [tuple(int(v) for v in g.integers(256, 640, size=2)) for _ in range(45)]
    for h, w in sizes:
        values = g.integers(0, 23, size=(h, w)).astype(np.uint8)
        grid = GeoGrid.from_array(values, kind=CATEGORICAL)
        index, patches = extract_patches(grid, 256, 64)
        out = mosaic_labels(patches, index)
        assert np.array_equal(out.values, values), (h, w)
    return f"{len(sizes)} grids identical"


def criterion_6():
    p = partition_blocks((1000, 1000), 100)
    assert len(p) == 100
    a = assign_split(p, 2024, (0.7, 0.15, 0.15))
    assert a.counts() == {"train": 70, "val": 15, "test": 15}, a.counts()
    assert a.roles == assign_split(p, 2024, (0.7, 0.15, 0.15)).roles
    masks = [a.role_mask(r) for r in ROLES]
    total = sum(m.astype(int) for m in masks)
    assert (total == 1).all()
    return "70/15/15, deterministic, partition"


def _plane(n, gx, gy, L=0.2):
    rows, cols = np.mgrid[0:n, 0:n]
    z = gx * (cols + 0.5) * L + gy * (n - rows - 0.5) * L
    return GeoGrid.from_array(z, kind=CONTINUOUS, tag="DTM", pixel_size=L)


def _angle_diff(a, b):
    return np.abs((a - b + 180.0) % 360.0 - 180.0)


def criterion_7():
    inner = (slice(1, -1), slice(1, -1))
    s, a = slope_aspect(_plane(16, 1.0, 0.0))
    assert np.abs(s.values[inner] - 45.0).max() <= 1e-6
    assert np.abs(a.values[inner] - 270.0).max() <= 1e-6
    s, a = slope_aspect(_plane(16, 0.5, 0.5))
    assert np.abs(s.values[inner] - math.degrees(math.atan(math.sqrt(0.5)))).max() <= 1e-6
    assert np.abs(a.values[inner] - 225.0).max() <= 1e-6

    z = np.random.default_rng(7).uniform(0, 20, size=(40, 40))
    grid = lambda v: GeoGrid.from_array(v, kind=CONTINUOUS, tag="DTM")  # noqa: E731
    base, shifted, rot = derive_all(grid(z)), derive_all(grid(z + 250.0)), derive_all(
        grid(np.rot90(z)))
    for name in ("slope", "roughness", "curvature"):
        d = np.abs(shifted[name].values[inner] - base[name].values[inner]).max()
        assert d <= 1e-9, (name, d)
    assert _angle_diff(shifted["aspect"].values[inner], base["aspect"].values[inner]).max() <= 1e-9
    for name in ("slope", "roughness"):
        d = np.abs(rot[name].values[inner] - np.rot90(base[name].values)[inner]).max()
        assert d <= 1e-9, (name, d)
    d = np.abs(np.abs(rot["curvature"].values[inner])
               - np.abs(np.rot90(base["curvature"].values)[inner])).max()
    assert d <= 1e-9
    d = _angle_diff(rot["aspect"].values[inner], np.rot90(base["aspect"].values)[inner] - 90.0)
    assert d.max() <= 1e-9
    return "planes exact, offset and rotation invariant"


def _random_spec(g, rules):
    k = rules.n_classes
    freqs = g.dirichlet(np.ones(k))
    freqs[-1] = 1.0 - freqs[:-1].sum()
    h, w = (int(v) for v in g.integers(60, 240, size=2))
    sp = int(g.integers(1, 9))
    seed = int(g.integers(0, 2**31))
    plain = SceneSpec(w, h, tuple(freqs), (), sp, seed)
    present = np.unique(generate_t1(plain).values)
    events = []
    for src in g.choice(present, size=min(len(present), 6), replace=False):
        for dst in g.choice(k, size=2, replace=False):
            events.append(TransitionEvent(int(src), int(dst), float(g.uniform(0, 0.45))))
    return SceneSpec(w, h, tuple(freqs), tuple(events), sp, seed)


def criterion_8():
    rules = load_transition_rules()
    g = np.random.default_rng(8)
    for _ in range(20):
        scene = generate_scene(_random_spec(g, rules), rules)
        rebuilt = build_transition_map(scene.t1, scene.t2, rules)
        assert np.array_equal(rebuilt.values, scene.truth.values)
        same = build_transition_map(scene.t1, scene.t1, rules)
        assert (same.values == rules.no_change_id).all()
    return "20 random specs bit-exact"


def criterion_9():
    rules = load_transition_rules()
    spec = default_scene_spec(1000, 1000, superpixel_size=5, seed=9)
    scene = generate_scene(spec, rules)
    oas = []
    for p in (0.1, 0.2, 0.5):
        noisy = perturb_predictions(scene.t1, p, 99, rules.n_classes)
        oa = overall_accuracy(accumulate(noisy, scene.t1, n_classes=rules.n_classes))
        assert abs(oa - (1 - p)) <= 0.01, (p, oa)
        oas.append(oa)
    share = float((scene.truth.values == rules.no_change_id).mean())
    none = scene.truth.with_values(np.full(scene.truth.shape, rules.no_change_id, np.uint8))
    cm = accumulate(binarize_change(none, rules), binarize_change(scene.truth, rules),
                    n_classes=2)
    rep = report(cm, BINARY_SCHEME)
    assert abs(rep.overall_accuracy - 0.909) <= 0.005, rep.overall_accuracy
    assert rep.per_class[1].iou == 0.0
    return (f"OA {oas[0]:.4f}/{oas[1]:.4f}/{oas[2]:.4f}; no-change share {share:.4f}, "
            f"binary OA {rep.overall_accuracy:.4f}")


def criterion_10():
    names = ("report.json", "report.csv", "confusion.csv")
    with tempfile.TemporaryDirectory() as tmp:
        digests = []
        for i in range(2):
            cfg = runner.load_config(runner.bundled_config_path())
            cfg.output_dir = os.path.join(tmp, f"run{i}")
            runner.run(cfg)
            digests.append([(Path(cfg.output_dir) / n).read_bytes() for n in names])
        for name, a, b in zip(names, *digests):
            assert a == b, name
    return "report.json, report.csv, confusion.csv byte-identical"


CRITERIA = {n: globals()[f"criterion_{n}"] for n in range(1, 11)}


@pytest.mark.parametrize("n", list(CRITERIA))
def test_criterion(n):
    ok, detail, _ = record(n, CRITERIA[n])
    assert ok, line(n)


if __name__ == "__main__":
    for n, fn in CRITERIA.items():
        record(n, fn)
        print(line(n))
    sys.exit(0 if all(r[0] for r in RESULTS.values()) else 1)
