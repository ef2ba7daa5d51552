"""Evolve the homogeneous swarm controller on several seeds and summarise the trend.

Prints generation-0 best, final best and whether the 10-generation moving
average of the population mean keeps rising.

    python3 scripts/swarm_trend.py --seeds 0 1 --generations 30 --workers 1
"""

import argparse
import csv
import tempfile
from pathlib import Path

import numpy as np

from evoctrl import experiments as ex


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, nargs="+", default=list(range(5)))
    parser.add_argument("--generations", type=int, default=30)
    parser.add_argument("--duration", type=float, default=120.0)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--out", help="keep archives here (default: temporary directory)")
    args = parser.parse_args()
    root = Path(args.out) if args.out else Path(tempfile.mkdtemp(prefix="swarm_trend-"))
    print("seed  gen0_best  final_best  gain     rising")
    for seed in args.seeds:
        cfg = ex.load_config(preset="table6_1", seed=seed)
        cfg = ex.from_dict(ex.ExperimentConfig, ex.merge(ex.to_dict(cfg), {
            "swarm": {"duration": args.duration}, "de": {"generations": args.generations}}))
        path = ex.run_evolve_swarm(cfg, root / f"seed{seed}", args.workers)
        rows = list(csv.DictReader(open(path / "generations.csv")))
        pop_mean = np.array([float(r["pop_mean"]) for r in rows])
        moving = np.convolve(pop_mean, np.ones(10) / 10, mode="valid")
        g0, final = float(rows[0]["batch_max"]), float(rows[-1]["best_so_far"])
        print(f"{seed:<5} {g0:<10.4f} {final:<11.4f} {final / g0 - 1:<+8.1%} {bool(np.all(np.diff(moving) > 0))}")
    print(f"archives in {root}")


if __name__ == "__main__":
    main()
