#!/usr/bin/env python3
"""End-to-end run on the public low-back-pain cohort (847 patients, 52 weeks).

Not part of the test suite: the full run configuration needs many hours.
Prepare the three input files in the formats `mhmmx fit` reads, then run

    python3 scripts/reproduce_real_data.py --baseline baseline.csv \
        --trajectories trajectories.csv --schema schema.json --output-dir real_run

The script prints one line per check:
  * the K sweep (S=3) recommends K=8,
  * the S sweep (K=8) recommends S=3,
  * MHMMX DB* beats a random partition with the same number of subgroups on both panels.
"""

import argparse
import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np


def mhmmx(*args):
    cmd = [sys.executable, "-m", "mhmmx", *map(str, args)]
    print("+", " ".join(cmd), flush=True)
    subprocess.run(cmd, check=True)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--baseline", required=True)
    ap.add_argument("--trajectories", required=True)
    ap.add_argument("--schema", required=True)
    ap.add_argument("--output-dir", default="real_run")
    ap.add_argument("--k-max", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--quick", action="store_true", help="short chains, for a smoke run of the pipeline")
    args = ap.parse_args(argv)

    out = Path(args.output_dir)
    data = ["--baseline", args.baseline, "--trajectories", args.trajectories, "--schema", args.schema,
            "--seed", args.seed]
    sampler = ["--mode", "mcmc", "--chains", 1]
    sampler += ["--warmup", 100, "--iter", 300] if args.quick else ["--warmup", 1000, "--iter", 5000]

    mhmmx("select", *data, *sampler, "--K", f"1..{args.k_max}", "--S", 3, "--output-dir", out / "select_K")
    mhmmx("select", *data, *sampler, "--K", 8, "--S", "1..4", "--output-dir", out / "select_S")
    mhmmx("fit", *data, *sampler, "--K", 8, "--S", 3, "--output-dir", out / "fit")
    model = ["--model", out / "fit" / "model.json", "--draws", out / "fit" / "draws.csv"]
    mhmmx("assign", *data, *model, "--weeks", 52, "--output-dir", out / "assign")

    with open(out / "assign" / "assignments.csv", newline="") as handle:
        rows = list(csv.DictReader(handle))
    rng = np.random.default_rng(args.seed)
    random_path = out / "assign" / "random_partition.csv"
    with open(random_path, "w", newline="") as handle:
        w = csv.writer(handle)
        w.writerow(["id", "label"])
        for r, lab in zip(rows, rng.integers(1, 9, len(rows))):
            w.writerow([r["id"], int(lab)])
    mhmmx("cvi", *data, "--assignments", out / "assign" / "assignments.csv", "--assignments", random_path,
          "--methods", "mhmmx,random", "--output-dir", out / "cvi")

    rec_k = json.loads((out / "select_K" / "recommendation.json").read_text())["recommended"]
    rec_s = json.loads((out / "select_S" / "recommendation.json").read_text())["recommended"]
    with open(out / "cvi" / "cvi.csv", newline="") as handle:
        cvi = {r["method"]: r for r in csv.DictReader(handle)}
    checks = {
        "K sweep selects K=8": rec_k is not None and rec_k["K"] == 8,
        "S sweep selects S=3": rec_s is not None and rec_s["S"] == 3,
        "pain DB* beats random partition":
            float(cvi["mhmmx"]["pain_db_star"]) < float(cvi["random"]["pain_db_star"]),
        "disability DB* beats random partition":
            float(cvi["mhmmx"]["disability_db_star"]) < float(cvi["random"]["disability_db_star"]),
    }
    for name, ok in checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return 0 if all(checks.values()) else 1


if __name__ == "__main__":
    sys.exit(main())
