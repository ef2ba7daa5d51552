"""Config-driven experiment recipes, run archives and replay.

A run archive is a directory holding everything needed to reproduce the
run: ``config.json``, ``evaluations.csv``, ``generations.csv``,
``best_genotype.json``, ``reservoirs.json`` (swarm runs), ``summary.json``
and, for retests, ``retest.csv``. Files carry no timestamps, so reruns
with the same config and seed are byte-identical.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
import typing
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import metrics
from .controllers import (HIDDEN_RANGE_HETEROGENEOUS, HIDDEN_RANGE_HOMOGENEOUS, BLOCK,
                          RegulatoryPolicy, ReservoirNet, load_reservoirs, reservoir_init,
                          save_reservoirs)
from .cpg import (PRESETS as MORPHOLOGIES, WO_INITIAL_STATE, CpgNetwork, build_cpg_network,
                  decode_weights, load_morphology, set_initial_state)
from .numerics import derive_seed, rng_stream
from .optimizers import (CmaesConfig, DeConfig, History, IsoConfig, RevDeConfig, cmaes_optimize,
                         de_optimize, iso_optimize, iso_retest, revde_optimize)
from .swarm import SurrogateBody, WorldConfig, make_field, run_swarm_trial, write_field_csv

OUT_ENV = "EVOCTRL_OUT"
KINDS = ("evolve_swarm", "learn_skills", "retest")


class ConfigError(ValueError):
    pass


class ArchiveError(ValueError):
    pass


# ------------------------------------------------------------------ configs

@dataclass(frozen=True)
class SwarmSection:
    arena_side: float = 10.0
    swarm_size: int = 14
    spawn_radius: float = 3.4
    duration: float = 120.0
    box_side: float = 3.0
    group_ratio: tuple[int, int] = (1, 1)
    wall_side: float = 0.0
    forward_only: bool = True
    perception: str = "quadrant"
    field: str = "center"
    field_cell: float = 0.0
    n_reservoirs: int = 1
    hidden_range: float = 0.0        # 0 -> 2.0 homogeneous, 1.0 heterogeneous
    regulatory: bool = False
    optimizer: str = "de"

    def __post_init__(self):
        if self.n_reservoirs not in (1, 2):
            raise ConfigError("n_reservoirs must be 1 or 2")
        if self.optimizer not in ("de", "cmaes"):
            raise ConfigError("swarm optimizer must be 'de' or 'cmaes'")
        if self.regulatory and self.n_reservoirs != 2:
            raise ConfigError("the regulatory switch needs two reservoirs")

    def world(self, **overrides) -> WorldConfig:
        keys = ("arena_side", "swarm_size", "spawn_radius", "duration", "box_side", "group_ratio",
                "wall_side", "forward_only", "perception", "field_cell")
        base = {k: getattr(self, k) for k in keys}
        if self.n_reservoirs == 1:
            base["group_ratio"] = (1, 0)
        base.update(overrides)
        return WorldConfig(**base)

    @property
    def reservoir_range(self) -> float:
        if self.hidden_range > 0:
            return self.hidden_range
        return HIDDEN_RANGE_HOMOGENEOUS if self.n_reservoirs == 1 else HIDDEN_RANGE_HETEROGENEOUS


@dataclass(frozen=True)
class SkillSection:
    morphology: str = "spider"
    skills: tuple[str, ...] = metrics.SKILLS
    method: str = "iso"
    wo_trials: int = 100
    wo_t_trial: float = 60.0

    def __post_init__(self):
        if self.method not in ("iso", "wo"):
            raise ConfigError("skill method must be 'iso' or 'wo'")
        if not self.skills or any(s not in metrics.SKILLS for s in self.skills):
            raise ConfigError(f"skills must be a non-empty subset of {metrics.SKILLS}")
        if self.wo_trials < 1:
            raise ConfigError("wo_trials must be >= 1")


@dataclass(frozen=True)
class RetestSection:
    repetitions: int = 20
    duration: float = 120.0
    arenas: tuple[float, ...] = (10.0, 30.0, 45.0)
    swarm_sizes: tuple[int, ...] = (5, 14, 50)
    fields: tuple[str, ...] = ("bimodal", "linear", "banana")
    ratios: tuple[tuple[int, int], ...] = ((4, 0), (3, 1), (2, 2), (1, 3), (0, 4))
    r_ratios: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0, 1.25)
    grids: tuple[str, ...] = ("flexibility", "scalability", "robustness", "ratio")

    def __post_init__(self):
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        unknown = set(self.grids) - {"flexibility", "scalability", "robustness", "ratio"}
        if unknown:
            raise ConfigError(f"unknown retest grids {sorted(unknown)}")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "evolve_swarm"
    seed: int = 0
    swarm: SwarmSection = field(default_factory=SwarmSection)
    de: DeConfig = field(default_factory=lambda: DeConfig(population=12, generations=30))
    cmaes: CmaesConfig = field(default_factory=lambda: CmaesConfig(popsize=12, n_generations=30))
    skills: SkillSection = field(default_factory=SkillSection)
    revde: RevDeConfig = field(default_factory=RevDeConfig)
    iso: IsoConfig = field(default_factory=lambda: IsoConfig(n_trials=5))
    retest: RetestSection = field(default_factory=RetestSection)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


def _coerce(tp, value, where: str):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        return from_dict(tp, value, where)
    if origin is tuple:
        args = typing.get_args(tp)
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(args[0], v, where) for v in value)
        if len(args) != len(value):
            raise ConfigError(f"{where}: expected {len(args)} items")
        return tuple(_coerce(a, v, where) for a, v in zip(args, value))
    if origin is typing.Union or str(origin) == "<class 'types.UnionType'>":
        if value is None:
            return None
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        return _coerce(args[0], value, where)
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer")
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    return value


def from_dict(cls, data, where: str = "config"):
    """Build dataclass ``cls`` from nested mappings; unknown keys are errors."""
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {k: _coerce(hints[k], v, f"{where}.{k}") for k, v in data.items()}
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def to_dict(cfg) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(cfg)))


def merge(base: dict, overrides: dict) -> dict:
    out = dict(base)
    for k, v in overrides.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = v
    return out


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# Table-scale presets plus desk-scale variants that finish in minutes.
PRESETS: dict[str, dict] = {
    "table5_3": {
        "kind": "learn_skills",
        "skills": {"wo_trials": 300, "wo_t_trial": 60.0},
        "iso": {"n_trials": 150, "t_trial": 120.0, "t_eval": 60.0},
    },
    "table6_1": {
        "kind": "evolve_swarm",
        "swarm": {"arena_side": 10.0, "swarm_size": 14, "duration": 600.0, "forward_only": True,
                  "n_reservoirs": 1, "optimizer": "de"},
        "de": {"population": 25, "generations": 100},
    },
    "table7_1": {
        "kind": "evolve_swarm",
        "swarm": {"arena_side": 30.0, "swarm_size": 20, "spawn_radius": 12.0, "duration": 600.0,
                  "forward_only": False, "n_reservoirs": 2, "group_ratio": [1, 1],
                  "optimizer": "cmaes"},
        "cmaes": {"popsize": 30, "n_generations": 100, "sigma0": 1.0, "n_repeats": 3},
    },
    "table7_2": {
        "kind": "retest",
        "retest": {"repetitions": 60, "duration": 600.0, "swarm_sizes": [10, 20, 50],
                   "grids": ["scalability", "robustness", "ratio"]},
    },
    "desk_skills": {
        "kind": "learn_skills",
        "skills": {"wo_trials": 100, "wo_t_trial": 60.0},
        "iso": {"n_trials": 5, "t_trial": 120.0, "t_eval": 60.0},
    },
    "desk_swarm": {"kind": "evolve_swarm"},
    "desk_hetero": {
        "kind": "evolve_swarm",
        "swarm": {"arena_side": 30.0, "swarm_size": 20, "spawn_radius": 12.0, "duration": 120.0,
                  "forward_only": False, "n_reservoirs": 2, "group_ratio": [1, 1],
                  "optimizer": "cmaes"},
        "cmaes": {"popsize": 12, "n_generations": 30, "n_repeats": 1},
    },
    "desk_retest": {"kind": "retest", "retest": {"repetitions": 20, "duration": 120.0}},
}


def load_config(path=None, preset: str | None = None, seed: int | None = None) -> ExperimentConfig:
    """Defaults, then a preset, then a YAML/JSON file, then the seed flag."""
    data = to_dict(ExperimentConfig())
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        data = merge(data, PRESETS[preset])
    if path is not None:
        text = Path(path).read_text()
        try:
            user = yaml.safe_load(text) if str(path).endswith((".yaml", ".yml")) else json.loads(text)
        except (yaml.YAMLError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        from_dict(ExperimentConfig, merge(to_dict(ExperimentConfig()), user))  # key check
        data = merge(data, user)
    if seed is not None:
        data["seed"] = seed
    return from_dict(ExperimentConfig, data)


# ----------------------------------------------------------------- workers

@contextmanager
def worker_map(workers: int = 1):
    """Ordered map over a process pool; results never depend on ``workers``."""
    if workers <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield lambda fn, *its: pool.map(fn, *its, chunksize=4)


@dataclass(frozen=True)
class SwarmObjective:
    reservoirs: tuple
    policy: RegulatoryPolicy | None
    world: WorldConfig
    field_kind: str

    def __call__(self, x, seed: int) -> float:
        field = make_field(self.field_kind, self.world.arena_side, self.world.field_cell)
        return run_swarm_trial(x, list(self.reservoirs), self.policy, self.world, field, seed).fitness


@dataclass(frozen=True)
class WeightObjective:
    """Skill fitness of a CPG weight vector run from the fixed WO initial state."""

    net: CpgNetwork
    body: SurrogateBody
    skill: str
    t_trial: float

    def __call__(self, x, seed: int) -> float:
        net = decode_weights(self.net, x)
        net = set_initial_state(net, np.full(2 * net.k, WO_INITIAL_STATE))
        traj, _ = self.body(net, self.t_trial)
        return metrics.skill_fitness(self.skill, traj, 0.0, self.t_trial)


# ----------------------------------------------------------------- archive

EVAL_HEADER = ["run_id", "generation", "candidate_id", "skill", "fitness"]


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def run_dir(cfg: ExperimentConfig, out=None) -> Path:
    root = Path(out) if out is not None else Path(os.environ.get(OUT_ENV, "runs"))
    return root / f"{cfg.kind}-seed{cfg.seed}-{config_hash(cfg)[:10]}"


def _start_archive(cfg: ExperimentConfig, out) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    _write_json(path / "config.json", to_dict(cfg))
    return path


def _summary(cfg: ExperimentConfig, values: dict) -> dict:
    return {"seed": cfg.seed, "kind": cfg.kind, "config_hash": config_hash(cfg), "metrics": values}


def _generation_rows(hist: History, run_id: str, halves: int = 1):
    rows = []
    for g in hist.generations:
        pop = g.get("population")
        stds = ["", ""]
        if pop is not None and halves == 2:
            sd = np.asarray(pop).std(axis=0)
            stds = [float(sd[:BLOCK].mean()), float(sd[BLOCK:].mean())]
        rows.append([run_id, g["generation"], g["mean"], g["max"], g["best_so_far"],
                     g.get("pop_mean", g["mean"]), g.get("pop_max", g["max"]), *stds])
    return rows


GEN_HEADER = ["run_id", "generation", "batch_mean", "batch_max", "best_so_far", "pop_mean",
              "pop_max", "genotype_std_half0", "genotype_std_half1"]


def run_evolve_swarm(cfg: ExperimentConfig, out, workers: int = 1) -> Path:
    """Evolve swarm controllers with DE (homogeneous) or CMA-ES (heterogeneous)."""
    sw = cfg.swarm
    world = sw.world()
    make_field(sw.field, world.arena_side)  # validates the field kind
    res_rng = rng_stream(cfg.seed, "reservoir")
    reservoirs = tuple(reservoir_init(res_rng, sw.reservoir_range) for _ in range(sw.n_reservoirs))
    policy = RegulatoryPolicy() if sw.regulatory else None
    objective = SwarmObjective(reservoirs, policy, world, sw.field)
    dim = BLOCK * sw.n_reservoirs
    rng = rng_stream(cfg.seed, "optimizer")
    with worker_map(workers) as map_fn:
        if sw.optimizer == "de":
            hist = de_optimize(objective, dim, cfg.de, rng, map_fn)
        else:
            hist = cmaes_optimize(objective, dim, cfg.cmaes, rng, map_fn)
    path = _start_archive(cfg, out)
    save_reservoirs(list(reservoirs), path / "reservoirs.json", seed=cfg.seed)
    _write_csv(path / "evaluations.csv", EVAL_HEADER,
               [["swarm", g, c, "gradient", f] for g, c, f in hist.evaluations])
    _write_csv(path / "generations.csv", GEN_HEADER, _generation_rows(hist, "swarm", sw.n_reservoirs))
    _write_json(path / "best_genotype.json", {"genotype": hist.best_x.tolist(), "fitness": hist.best_f})
    _write_json(path / "summary.json", _summary(cfg, swarm_metrics(hist)))
    return path


def swarm_metrics(hist: History) -> dict:
    fit = hist.fitness
    return {"best_fitness": hist.best_f,
            "generation0_best": hist.generations[0]["max"],
            "final_pop_mean": hist.generations[-1].get("pop_mean", hist.generations[-1]["mean"]),
            "aes": metrics.aes(fit)[0],
            "evaluations": int(fit.size)}


def _morphology(name: str):
    if name in MORPHOLOGIES:
        return MORPHOLOGIES[name]()
    return load_morphology(name)


def skill_setup(cfg: ExperimentConfig):
    """(network with fixed random weights, surrogate body) for a skill run."""
    graph = _morphology(cfg.skills.morphology)
    net = build_cpg_network(graph, rng_stream(cfg.seed, "weights"))
    body = SurrogateBody(WorldConfig(duration=cfg.iso.t_eval), seed=derive_seed(cfg.seed, "body"))
    return net, body


def run_iso(cfg: ExperimentConfig):
    net, body = skill_setup(cfg)
    return iso_optimize(net, body, list(cfg.skills.skills), cfg.iso, rng_stream(cfg.seed, "iso")), net, body


def run_wo(cfg: ExperimentConfig, skill: str, map_fn=map) -> History:
    net, body = skill_setup(cfg)
    objective = WeightObjective(net, body, skill, cfg.skills.wo_t_trial)
    return revde_optimize(objective, net.n_weights, cfg.revde, rng_stream(cfg.seed, f"wo/{skill}"),
                          budget=cfg.skills.wo_trials, map_fn=map_fn)


def run_learn_skills(cfg: ExperimentConfig, out, workers: int = 1) -> Path:
    """ISO learns all skills in one trial sequence; WO runs one RevDE per skill."""
    sk = cfg.skills
    path = _start_archive(cfg, out)
    evals, gens = [], []
    if sk.method == "iso":
        res, net, body = run_iso(cfg)
        for trial in range(cfg.iso.n_trials):
            for s, skill in enumerate(sk.skills):
                evals.append(["iso", trial, 0, skill, res.trial_fitness[trial, s]])
        bsf = res.best_so_far()
        for trial in range(cfg.iso.n_trials):
            gens.append(["iso", trial, *bsf[trial].tolist()])
        retests = [iso_retest(res, s, net, body, cfg.iso.t_eval) for s in range(len(sk.skills))]
        _write_json(path / "best_genotype.json", {
            "weights": net.genotype().tolist(),
            "states": {skill: res.best_states[s].tolist() for s, skill in enumerate(sk.skills)},
            "fitness": {skill: float(res.best_fitness[s]) for s, skill in enumerate(sk.skills)},
            "retest": {skill: retests[s] for s, skill in enumerate(sk.skills)}})
        _write_csv(path / "generations.csv", ["run_id", "trial", *[f"best_{s}" for s in sk.skills]], gens)
    else:
        best = {}
        with worker_map(workers) as map_fn:
            for skill in sk.skills:
                hist = run_wo(cfg, skill, map_fn)
                for i, (g, c, f) in enumerate(hist.evaluations):
                    evals.append([f"wo/{skill}", g, c, skill, f])
                best[skill] = {"genotype": hist.best_x.tolist(), "fitness": hist.best_f}
        _write_json(path / "best_genotype.json", best)
        rows = _group_series(evals)
        _write_csv(path / "generations.csv", ["run_id", "trial", "best_so_far"],
                   [[run, i, v] for run, series in rows.items()
                    for i, v in enumerate(np.maximum.accumulate(series).tolist())])
    _write_csv(path / "evaluations.csv", EVAL_HEADER, evals)
    _write_json(path / "summary.json", _summary(cfg, skill_metrics(cfg, evals)))
    return path


def _group_series(evals) -> dict[str, np.ndarray]:
    out: dict[str, list] = {}
    for run, _, _, skill, f in evals:
        out.setdefault(f"{run}|{skill}" if run == "iso" else run, []).append(float(f))
    return {k: np.array(v) for k, v in out.items()}


def skill_metrics(cfg: ExperimentConfig, evals) -> dict:
    series = _group_series(evals)
    out = {}
    for key, f in series.items():
        skill = key.split("|")[1] if "|" in key else key.split("/")[1]
        m = metrics.mbf(f)
        out[skill] = {"final_mbf": float(m[-1]), "aes": metrics.aes(f)[0], "trials": int(f.size)}
    if cfg.skills.method == "iso":
        out["simulated_minutes"] = cfg.iso.n_trials * cfg.iso.t_trial / 60.0
    else:
        out["simulated_minutes"] = len(cfg.skills.skills) * cfg.skills.wo_trials * cfg.skills.wo_t_trial / 60.0
    return out


def compare_skills(iso_archive, wo_archive) -> dict:
    """TTEQ and normalised performance of an ISO archive against a WO archive."""
    iso, wo = load_archive(iso_archive), load_archive(wo_archive)
    iso_series, wo_series = _group_series(iso.evaluations), _group_series(wo.evaluations)
    skills = list(iso.config.skills.skills)
    t_iso, t_wo = iso.config.iso.t_trial, wo.config.skills.wo_t_trial
    horizon = max(len(next(iter(iso_series.values()))) * t_iso, len(next(iter(wo_series.values()))) * t_wo)
    grid = np.arange(1, int(horizon // 60.0) + 1) * 60.0
    grid = grid[grid >= max(t_iso, t_wo) - 1e-9]  # both curves defined

    def on_grid(f, period):
        bsf = np.maximum.accumulate(f)
        idx = np.minimum(np.floor(grid / period + 1e-9).astype(int) - 1, len(bsf) - 1)
        return bsf[idx]

    iso_mbf, wo_mbf, out = [], [], {}
    for skill in skills:
        a = metrics.mbf(iso_series[f"iso|{skill}"])
        b = metrics.mbf(wo_series[f"wo/{skill}"])
        iso_mbf.append(a)
        wo_mbf.append(b)
        out[f"tteq_{skill}"] = metrics.tteq(on_grid(a, t_iso), on_grid(b, t_wo), grid)
    norm = metrics.normalized_performance(np.array(wo_mbf), np.array(iso_mbf))
    out["iso_sum_final"] = float(norm.iso_sum[-1])
    out["iso_sum"] = norm.iso_sum.tolist()
    return out


# ------------------------------------------------------------------ retest

@dataclass
class Archive:
    path: Path
    config: ExperimentConfig
    evaluations: list
    summary: dict
    best: dict


REQUIRED = ("config.json", "evaluations.csv", "summary.json", "best_genotype.json")


def load_archive(path) -> Archive:
    path = Path(path)
    missing = [f for f in REQUIRED if not (path / f).exists()]
    if missing:
        raise ArchiveError(f"incomplete archive {path}: missing {missing}")
    cfg = from_dict(ExperimentConfig, json.loads((path / "config.json").read_text()))
    evals = [[r["run_id"], int(r["generation"]), int(r["candidate_id"]), r["skill"], float(r["fitness"])]
             for r in _read_csv(path / "evaluations.csv")]
    return Archive(path, cfg, evals, json.loads((path / "summary.json").read_text()),
                   json.loads((path / "best_genotype.json").read_text()))


def recompute_metrics(archive: Archive) -> dict:
    cfg = archive.config
    if cfg.kind == "learn_skills":
        return skill_metrics(cfg, archive.evaluations)
    if cfg.kind == "evolve_swarm":
        f = np.array([e[4] for e in archive.evaluations])
        gens = _read_csv(archive.path / "generations.csv")
        return {"best_fitness": float(f.max()),
                "generation0_best": float(gens[0]["batch_max"]),
                "final_pop_mean": float(gens[-1]["pop_mean"]),
                "aes": metrics.aes(f)[0],
                "evaluations": int(f.size)}
    return archive.summary["metrics"]


def fit_spawn_radius(arena: float, wanted: float, world: WorldConfig) -> float:
    """Largest radius up to ``wanted`` whose spawn box stays inside the walls."""
    return max(0.0, min(wanted, arena / 2 - world.box_side / 2 - world.robot_radius))


def ratio_wall_side(world: WorldConfig, r_ratios) -> float:
    """Wall size that fits the spawn box at the largest r_ratio."""
    need = 2 * (max(r_ratios) * world.spawn_radius + world.box_side / 2 + world.robot_radius) + 1e-6
    return max(world.walls, need)


def retest_cells(train: ExperimentConfig, rt: RetestSection):
    """(grid, row, column, WorldConfig, field kind, policy flag) for every cell."""
    sw = train.swarm
    base = sw.world(duration=rt.duration)
    cells = []
    if "flexibility" in rt.grids:
        for arena in rt.arenas:
            r = fit_spawn_radius(arena, sw.spawn_radius * arena / sw.arena_side, base)
            w = replace(base, arena_side=arena, spawn_radius=r, wall_side=0.0)
            cells.append(("flexibility", f"arena={arena:g}", "", w, sw.field, True))
    if "scalability" in rt.grids:
        for n in rt.swarm_sizes:
            box = sw.box_side * math.sqrt(n / sw.swarm_size)
            w = replace(base, swarm_size=n, box_side=box)
            w = replace(w, wall_side=max(w.walls, 2 * (w.spawn_radius + box / 2 + w.robot_radius) + 1e-6))
            cells.append(("scalability", f"N={n}", "", w, sw.field, True))
    if "robustness" in rt.grids:
        for kind in rt.fields:
            cells.append(("robustness", kind, "", base, kind, True))
    if "ratio" in rt.grids and sw.n_reservoirs == 2:
        walls = ratio_wall_side(base, rt.r_ratios)
        for ratio in rt.ratios:
            for rr in rt.r_ratios:
                w = replace(base, group_ratio=tuple(ratio), spawn_radius=rr * sw.spawn_radius,
                            wall_side=walls)
                cells.append(("ratio", f"r_ratio={rr:g}", f"{ratio[0]}:{ratio[1]}", w, sw.field, False))
    return cells


def run_retest_sweep(cfg: ExperimentConfig, archive_path, out, workers: int = 1) -> Path:
    """Re-test an archived swarm controller over the configured grids.

    Ratio cells use fixed sub-group labels (no regulatory switching) so each
    column really holds the stated ratio.
    """
    arch = load_archive(archive_path)
    if arch.config.kind != "evolve_swarm" or "genotype" not in arch.best:
        raise ArchiveError("retest needs an evolve_swarm archive with a best genotype")
    if not (Path(archive_path) / "reservoirs.json").exists():
        raise ArchiveError("archive has no reservoirs.json")
    train = arch.config
    genotype = np.array(arch.best["genotype"])
    reservoirs = tuple(load_reservoirs(Path(archive_path) / "reservoirs.json"))
    policy = RegulatoryPolicy() if train.swarm.regulatory else None
    rt = cfg.retest
    cells = retest_cells(train, rt)
    if not cells:
        raise ConfigError("no retest cells for this archive and grid selection")
    jobs, seeds = [], []
    for grid, row, col, world, kind, use_policy in cells:
        fn = SwarmObjective(reservoirs, policy if use_policy else None, world, kind)
        for rep in range(rt.repetitions):
            jobs.append(fn)
            seeds.append(derive_seed(cfg.seed, f"retest/{grid}/{row}/{col}/{rep}"))
    with worker_map(workers) as map_fn:
        values = list(map_fn(_call, jobs, [genotype] * len(jobs), seeds))
    values = np.array(values).reshape(len(cells), rt.repetitions)
    path = _start_archive(cfg, out)
    evals, table = [], []
    for c, (grid, row, col, *_rest) in enumerate(cells):
        for rep in range(rt.repetitions):
            evals.append([f"{grid}/{row}/{col}", 0, rep, "gradient", values[c, rep]])
        table.append([grid, row, col, float(values[c].mean()), float(values[c].std())])
    _write_csv(path / "evaluations.csv", EVAL_HEADER, evals)
    _write_csv(path / "retest.csv", ["grid", "row", "column", "mean", "std"], table)
    _write_json(path / "best_genotype.json", {"genotype": genotype.tolist(), "source": str(archive_path)})
    _write_json(path / "summary.json", _summary(cfg, {f"{g}/{r}/{c}": m for g, r, c, m, _ in table}))
    return path


def _call(fn, x, seed):
    return fn(x, seed)


def ratio_table(retest_path) -> tuple[list[str], list[str], np.ndarray]:
    """(r_ratio rows, ratio columns, means) from a retest archive."""
    rows = [r for r in _read_csv(Path(retest_path) / "retest.csv") if r["grid"] == "ratio"]
    rr = list(dict.fromkeys(r["row"] for r in rows))
    cols = list(dict.fromkeys(r["column"] for r in rows))
    table = np.full((len(rr), len(cols)), np.nan)
    for r in rows:
        table[rr.index(r["row"]), cols.index(r["column"])] = float(r["mean"])
    return rr, cols, table


# ------------------------------------------------------------ export/replay

def export(archive_path, out) -> Path:
    """Tidy metrics CSV, summary JSON and a dense field grid for plotting."""
    arch = load_archive(archive_path)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    values = recompute_metrics(arch)
    metrics.write_tidy_csv(metrics.tidy_rows(values, arch.config.kind), out / "metrics.csv")
    _write_json(out / "summary.json", _summary(arch.config, values))
    if arch.config.kind in ("evolve_swarm", "retest"):
        sw = arch.config.swarm
        write_field_csv(make_field(sw.field, sw.arena_side), out / "field.csv")
    return out


def import_metrics(export_dir) -> dict:
    """Metric values from an exported tidy CSV, keyed by metric name."""
    return {r["metric"]: float(r["value"]) for r in _read_csv(Path(export_dir) / "metrics.csv")}


def run(cfg: ExperimentConfig, out, workers: int = 1, archive=None) -> Path:
    if cfg.kind == "evolve_swarm":
        return run_evolve_swarm(cfg, out, workers)
    if cfg.kind == "learn_skills":
        return run_learn_skills(cfg, out, workers)
    if archive is None:
        raise ConfigError("retest needs --archive")
    return run_retest_sweep(cfg, archive, out, workers)


def replay(archive_path, out, workers: int = 1) -> bool:
    """Rerun an archive from its embedded config; True if the fitness logs match bit for bit."""
    arch = load_archive(archive_path)
    source = None
    if arch.config.kind == "retest":
        source = arch.best.get("source")
    new = run(arch.config, out, workers, source)
    return (Path(archive_path) / "evaluations.csv").read_bytes() == (Path(new) / "evaluations.csv").read_bytes()
