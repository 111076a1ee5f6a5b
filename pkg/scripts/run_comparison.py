"""Comparative synthetic experiment over several master seeds.

Runs the full pipeline (all model families) per seed and prints test JT for
each variant, the greedy sets, and the mean over seeds.

    python scripts/run_comparison.py --seeds 0 1 2 3 4 --out runs/comparison
    python scripts/run_comparison.py --config my.ini --seeds 0 1
"""
import argparse
import time
from pathlib import Path

import numpy as np

from addle import pipeline
from addle.config import ExperimentConfig, load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", type=Path)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--out", type=Path, default=Path("runs/comparison"))
    args = ap.parse_args()
    base = load_config(args.config) if args.config else ExperimentConfig()

    rows, t0 = {}, time.perf_counter()
    for seed in args.seeds:
        summary = pipeline.run_pipeline(base.with_seed(seed), args.out / f"seed{seed}")
        rows[seed] = summary
        print(f"seed {seed}: greedy sets {summary['selection']}")
    names = sorted(next(iter(rows.values()))["reports"])
    print("\nvariant".ljust(22) + "".join(f"seed{s}".rjust(9) for s in args.seeds) + "mean".rjust(9))
    for name in names:
        jts = [rows[s]["reports"][name]["jt"] for s in args.seeds]
        print(name.ljust(21) + "".join(f"{v:9.4f}" for v in jts) + f"{np.mean(jts):9.4f}")
    print("\nparameters:", next(iter(rows.values()))["params"])
    print(f"elapsed {time.perf_counter() - t0:.0f} s")


if __name__ == "__main__":
    main()
