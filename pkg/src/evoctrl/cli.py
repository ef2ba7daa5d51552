"""Command line entry point: ``evoctrl <subcommand> [flags]``.

Validation failures exit with status 2 and print a JSON error record to
stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import experiments as ex


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML or JSON config file")
    p.add_argument("--preset", help=f"named preset: {', '.join(sorted(ex.PRESETS))}")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
    p.add_argument("--out", help=f"run directory (default: ${ex.OUT_ENV} or ./runs)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evoctrl", description="Evolve swarm and CPG controllers.")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("evolve-swarm", help="evolve a swarm controller (DE or CMA-ES)"))
    _common(sub.add_parser("learn-skills", help="learn locomotion skills with ISO or RevDE-WO"))
    p = sub.add_parser("retest", help="re-test an archived swarm controller over sweep grids")
    _common(p)
    p.add_argument("--archive", required=True, help="evolve-swarm run directory")
    p = sub.add_parser("metrics", help="recompute metrics of an archive and print them as JSON")
    p.add_argument("--archive", required=True)
    p.add_argument("--compare", help="WO archive to compare an ISO archive against")
    p = sub.add_parser("export", help="write tidy CSV, summary JSON and field grid")
    p.add_argument("--archive", required=True)
    p.add_argument("--out", required=True)
    return parser


def _run(args, kind: str) -> dict:
    cfg = ex.load_config(args.config, args.preset, args.seed)
    if args.preset is None and args.config is None:
        cfg = ex.from_dict(ex.ExperimentConfig, ex.merge(ex.to_dict(cfg), {"kind": kind}))
    if cfg.kind != kind:
        raise ex.ConfigError(f"config kind {cfg.kind!r} does not match subcommand {kind!r}")
    out = Path(args.out) if args.out else ex.run_dir(cfg)
    path = ex.run(cfg, out, args.workers, getattr(args, "archive", None))
    return {"archive": str(path), **json.loads((path / "summary.json").read_text())}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "evolve-swarm":
            result = _run(args, "evolve_swarm")
        elif args.command == "learn-skills":
            result = _run(args, "learn_skills")
        elif args.command == "retest":
            result = _run(args, "retest")
        elif args.command == "metrics":
            if args.compare:
                result = ex.compare_skills(args.archive, args.compare)
            else:
                result = ex.recompute_metrics(ex.load_archive(args.archive))
        else:
            result = {"export": str(ex.export(args.archive, args.out))}
    except (ex.ConfigError, ex.ArchiveError, FileNotFoundError, ValueError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(record), file=sys.stderr)
        return 2
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
