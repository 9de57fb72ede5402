#!/usr/bin/env python3
"""Rebuild the benchmark CSVs under data/ from PyPI wheels that bundle them.

    python3 scripts/prepare_datasets.py [--out data]

Sources:
  * Adult  - responsibly (original adult.data / adult.test files)
  * Letter - keel-ds (KEEL copy of UCI letter-recognition, KEEL row order)
  * Iris   - keel-ds
  * Yeast  - keel-ds; the 10-class labels are recovered by intersecting the
             KEEL binary variants (yeast1/3/4/5/6, yeast-1_vs_7, yeast-2_vs_4,
             yeast-2_vs_8, yeast-0-2-5-6_vs_3-7-8-9). Class counts match UCI.
"""
import argparse
import collections
import csv
import os
import subprocess
import sys
import tempfile
import zipfile

YEAST_COLS = ["mcg", "gvh", "alm", "mit", "erl", "pox", "vac", "nuc"]
YEAST_CLASSES = ["CYT", "NUC", "MIT", "ME3", "ME2", "ME1", "EXC", "VAC", "POX", "ERL"]
ADULT_COLS = [
    "age", "workclass", "fnlwgt", "education", "education_num", "marital_status",
    "occupation", "relationship", "race", "sex", "capital_gain", "capital_loss",
    "hours_per_week", "native_country", "income",
]


def fetch(pkg, dest):
    subprocess.check_call(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", dest, pkg]
    )
    for name in os.listdir(dest):
        if name.startswith(pkg.replace("-", "_")) and name.endswith(".whl"):
            return zipfile.ZipFile(os.path.join(dest, name))
    raise SystemExit(f"wheel for {pkg} not found")


def keel_rows(text):
    rows = []
    for line in text.splitlines():
        parts = [p.strip() for p in line.strip().split(",")]
        if len(parts) < 3 or line.startswith("@"):
            continue
        rows.append(parts)
    return rows


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {path} ({len(rows)} rows)")


def yeast(keel, out):
    def load(name):
        text = keel.read(f"keel_ds/data/imbalanced/raw/{name}.dat").decode()
        return [
            (tuple(round(float(x) * 100) for x in r[:-1]), r[-1]) for r in keel_rows(text)
        ]

    def count(name, label):
        return collections.Counter(v for v, y in load(name) if y == label)

    base = [v for v, _ in load("yeast1")]
    mult = collections.Counter(base)
    nuc = count("yeast1", "positive")
    me3 = count("yeast3", "positive")
    me2 = count("yeast4", "positive")
    me1 = count("yeast5", "positive")
    exc = count("yeast6", "positive")
    pox = count("yeast-2_vs_8", "positive")
    cyt = count("yeast-2_vs_4", "negative")
    p0256 = count("yeast-0-2-5-6_vs_3-7-8-9", "positive")
    # yeast-1_vs_7 drops the pox column
    by_proj = collections.defaultdict(list)
    for v in mult:
        by_proj[v[:5] + v[6:]].append(v)
    vac = collections.Counter()
    for p, n in count("yeast-1_vs_7", "positive").items():
        if len(by_proj[p]) != 1:
            raise SystemExit("ambiguous VAC row")
        vac[by_proj[p][0]] = n

    pools = {}
    for v, m in mult.items():
        c = {
            "NUC": nuc[v], "ME3": me3[v], "ME2": me2[v], "ME1": me1[v],
            "EXC": exc[v], "VAC": vac[v], "POX": pox[v], "CYT": cyt[v],
        }
        c["ERL"] = p0256[v] - c["ME1"] - c["VAC"] - c["POX"]
        c["MIT"] = m - sum(c.values())
        if min(c.values()) < 0:
            raise SystemExit("inconsistent yeast reconstruction")
        pools[v] = [k for k in YEAST_CLASSES for _ in range(c[k])]
    rows = [["%.2f" % (x / 100) for x in v] + [pools[v].pop(0)] for v in base]
    totals = collections.Counter(r[-1] for r in rows)
    expected = dict(CYT=463, NUC=429, MIT=244, ME3=163, ME2=51, ME1=44, EXC=35, VAC=30, POX=20, ERL=5)
    if dict(totals) != expected:
        raise SystemExit(f"yeast class counts differ from UCI: {totals}")
    write_csv(os.path.join(out, "yeast.csv"), YEAST_COLS + ["class"], rows)


def letter(keel, out):
    rows = keel_rows(keel.read("keel_ds/data/balanced/raw/letter.dat").decode())
    header = [f"f{i}" for i in range(16)] + ["letter"]
    write_csv(os.path.join(out, "letter_train.csv"), header, rows[:16000])
    write_csv(os.path.join(out, "letter_test.csv"), header, rows[16000:])


def iris(keel, out):
    rows = keel_rows(keel.read("keel_ds/data/balanced/raw/iris.dat").decode())
    header = ["sepal_length", "sepal_width", "petal_length", "petal_width", "species"]
    write_csv(os.path.join(out, "iris.csv"), header, rows)


def adult(wheel, out):
    for part, name in (("data", "adult_train.csv"), ("test", "adult_test.csv")):
        text = wheel.read(f"responsibly/dataset/adult/adult.{part}").decode()
        rows = []
        for line in text.splitlines():
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != len(ADULT_COLS):
                continue
            parts[-1] = parts[-1].rstrip(".")
            rows.append(["" if p == "?" else p for p in parts])
        write_csv(os.path.join(out, name), ADULT_COLS, rows)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        keel = fetch("keel-ds", tmp)
        yeast(keel, args.out)
        letter(keel, args.out)
        iris(keel, args.out)
        adult(fetch("responsibly", tmp), args.out)


if __name__ == "__main__":
    main()
