#!/usr/bin/env python3
"""Rebuild data/mushroom.csv and data/adult.csv from the UCI source files.

The UCI files ship inside two public packages that are reachable through the
package mirrors:

  * agaricus-lepiota.data: crates.io `xgboost-sys` 0.1.2
    (xgboost/demo/binary_classification/)
  * adult.data / adult.test: PyPI `responsibly` 0.1.2 (responsibly/dataset/adult/)

Usage: prepare_data.py <agaricus-lepiota.data> <adult.data> <adult.test> <out_dir>
"""
import csv
import sys
from pathlib import Path

MUSHROOM_COLUMNS = [
    "class", "cap_shape", "cap_surface", "cap_color", "bruises", "odor",
    "gill_attachment", "gill_spacing", "gill_size", "gill_color", "stalk_shape",
    "stalk_root", "stalk_surface_above_ring", "stalk_surface_below_ring",
    "stalk_color_above_ring", "stalk_color_below_ring", "veil_type", "veil_color",
    "ring_number", "ring_type", "spore_print_color", "population", "habitat",
]
ODOR = {"a": "almond", "l": "anise", "c": "creosote", "y": "fishy", "f": "foul",
        "m": "musty", "n": "none", "p": "pungent", "s": "spicy"}
CLASS = {"e": "edible", "p": "poisonous"}

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education_num", "marital_status",
    "occupation", "relationship", "race", "sex", "capital_gain", "capital_loss",
    "hours_per_week", "native_country", "income",
]


def mushroom(src: Path, dst: Path) -> int:
    rows = []
    for line in src.read_text().splitlines():
        if not line.strip():
            continue
        r = line.strip().split(",")
        r[0] = CLASS[r[0]]
        r[5] = ODOR[r[5]]
        rows.append(r)
    with dst.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(MUSHROOM_COLUMNS)
        w.writerows(rows)
    return len(rows)


def adult(train: Path, test: Path, dst: Path) -> int:
    rows = []
    for src in (train, test):
        for line in src.read_text().splitlines():
            if not line.strip() or line.startswith("|"):
                continue
            r = [x.strip() for x in line.split(",")]
            r[-1] = r[-1].rstrip(".")
            rows.append(r)
    with dst.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(ADULT_COLUMNS)
        w.writerows(rows)
    return len(rows)


if __name__ == "__main__":
    if len(sys.argv) != 5:
        sys.exit(__doc__)
    out = Path(sys.argv[4])
    print("mushroom rows:", mushroom(Path(sys.argv[1]), out / "mushroom.csv"))
    print("adult rows:", adult(Path(sys.argv[2]), Path(sys.argv[3]), out / "adult.csv"))
