"""Train a heterogeneous controller, then print the sub-group ratio x r_ratio table.

    python3 scripts/ratio_sweep.py --seed 0 --repetitions 20
"""

import argparse
import tempfile
from pathlib import Path

from evoctrl import experiments as ex


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--repetitions", type=int, default=20)
    parser.add_argument("--archive", help="existing evolve_swarm archive with two reservoirs")
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()
    root = Path(tempfile.mkdtemp(prefix="ratio_sweep-"))
    archive = args.archive
    if archive is None:
        archive = ex.run_evolve_swarm(ex.load_config(preset="desk_hetero", seed=args.seed), root / "train",
                                      args.workers)
    cfg = ex.load_config(preset="desk_retest", seed=args.seed)
    cfg = ex.from_dict(ex.ExperimentConfig, ex.merge(ex.to_dict(cfg), {
        "retest": {"grids": ["ratio"], "repetitions": args.repetitions}}))
    path = ex.run_retest_sweep(cfg, archive, root / "retest", args.workers)
    rows, cols, table = ex.ratio_table(path)
    print(f"{'':<14}" + "".join(f"{c:>8}" for c in cols))
    for name, values in zip(rows, table):
        print(f"{name:<14}" + "".join(f"{v:8.3f}" for v in values))


if __name__ == "__main__":
    main()
