"""Regenerate ``src/habitat_cd/data/transition_rules.csv``.

Only the eight change category names are fixed; the (from, to) pairs
behind them are not.  This script reconstructs a plausible table
from forest development stage and canopy-cover attributes of the 23-class
scheme.  Pairs not listed in the output fall back to "Other Transition".

    python scripts/build_default_rules.py
"""

import csv
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "habitat_cd" / "data" / "transition_rules.csv"

# class id -> (development stage, canopy cover); stage 1 young .. 4 old-growth
FOREST = {
    11: (1, None), 17: (1, None),
    6: (2, "high"), 15: (2, "low"), 18: (2, None),
    2: (3, "low"), 3: (3, "high"), 12: (3, "high"), 16: (3, "low"),
    5: (4, "low"), 8: (4, "high"), 14: (4, "high"), 19: (4, "low"),
}
CLEARCUT = 13
N_CLASSES = 23

MATURE_LOSS, OLD_LOSS, SETBACK, PROGRESSION, GAIN, ESTABLISHMENT, CLEARCUT_CAT = 1, 2, 3, 4, 5, 6, 7


def category(a: int, b: int):
    if a in FOREST and b == CLEARCUT:
        return CLEARCUT_CAT
    if a in FOREST and b in FOREST:
        (sa, ca), (sb, cb) = FOREST[a], FOREST[b]
        if sb < sa:
            return SETBACK
        if sb > sa:
            return PROGRESSION
        if ca == "high" and cb == "low":
            return {3: MATURE_LOSS, 4: OLD_LOSS}.get(sa)
        if ca == "low" and cb == "high":
            return GAIN
        return None
    if a not in FOREST and b in FOREST and FOREST[b][0] <= 2:
        return ESTABLISHMENT
    return None


def main():
    with OUT.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["from_id", "to_id", "category_id"])
        for a in range(N_CLASSES):
            for b in range(N_CLASSES):
                if a != b and (cat := category(a, b)) is not None:
                    writer.writerow([a, b, cat])


if __name__ == "__main__":
    main()
