"""Compare ISO and RevDE weight optimisation on the surrogate CPG body.

For each seed, prints every skill's final best fitness under both methods
and the ISO/WO ratio.

    python3 scripts/iso_vs_wo.py --seeds 0 1 2
"""

import argparse

from evoctrl import experiments as ex
from evoctrl.metrics import mbf


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, nargs="+", default=list(range(10)))
    parser.add_argument("--preset", default="desk_skills")
    args = parser.parse_args()
    print("seed  skill        iso        wo         ratio")
    for seed in args.seeds:
        cfg = ex.load_config(preset=args.preset, seed=seed)
        res, _, _ = ex.run_iso(cfg)
        iso_final = res.best_so_far()[-1]
        for s, skill in enumerate(cfg.skills.skills):
            wo_final = float(mbf(ex.run_wo(cfg, skill).fitness)[-1])
            ratio = iso_final[s] / wo_final if wo_final > 0 else float("nan")
            print(f"{seed:<5} {skill:<12} {iso_final[s]:<10.4f} {wo_final:<10.4f} {ratio:.2f}")


if __name__ == "__main__":
    main()
