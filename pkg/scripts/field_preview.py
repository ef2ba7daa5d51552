"""Write dense value grids of every field kind as CSV for plotting.

    python3 scripts/field_preview.py --arena 30 --n 121 --out fields/
"""

import argparse
from pathlib import Path

from evoctrl.swarm import FIELD_KINDS, make_field, write_field_csv


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--arena", type=float, default=30.0)
    parser.add_argument("--n", type=int, default=101)
    parser.add_argument("--cell", type=float, default=0.0, help="grid-cell quantisation, 0 = continuous")
    parser.add_argument("--out", default="fields")
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for kind in FIELD_KINDS:
        field = make_field(kind, args.arena, args.cell)
        write_field_csv(field, out / f"{kind}.csv", args.n)
        _, _, values = field.grid(args.n)
        print(f"{kind:<8} min {values.min():7.2f}  mean {values.mean():7.2f}  max {values.max():7.2f}")


if __name__ == "__main__":
    main()
