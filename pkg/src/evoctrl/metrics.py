"""Fitness functions and comparison statistics.

Trajectories are (n, 4) arrays of (t, x, y, heading) sampled on a regular
grid, positions in metres and headings in radians (ccw positive about z).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import unwrap_planar

SKILLS = ("gait", "rotate_cw", "rotate_ccw")
G_MAX = 255.0


def _window(traj, t_start: float, t_eval: float) -> np.ndarray:
    traj = np.asarray(traj, dtype=float)
    if traj.ndim != 2 or traj.shape[1] < 4 or traj.shape[0] < 2:
        raise ValueError("trajectory must be an (n >= 2, 4) array of (t, x, y, heading)")
    if not t_eval > 0:
        raise ValueError("t_eval must be positive")
    period = traj[1, 0] - traj[0, 0]
    i0 = int(round((t_start - traj[0, 0]) / period))
    n = int(round(t_eval / period))
    if i0 < 0 or i0 + n > traj.shape[0] - 1:
        raise ValueError(f"window [{t_start}, {t_start + t_eval}] outside trajectory")
    return traj[i0:i0 + n + 1]


def gait_fitness(traj, t_start: float, t_eval: float) -> float:
    """Planar displacement over the window in centimetres per second."""
    w = _window(traj, t_start, t_eval)
    return 100.0 * math.hypot(w[-1, 1] - w[0, 1], w[-1, 2] - w[0, 2]) / t_eval


def rotation_fitness(traj, t_start: float, t_eval: float, direction: str = "ccw") -> float:
    """Mean yaw rate over the window, rad/s; positive for the preferred direction."""
    if direction not in ("cw", "ccw"):
        raise ValueError(f"direction must be 'cw' or 'ccw', got {direction!r}")
    w = _window(traj, t_start, t_eval)
    rate = float(np.sum(unwrap_planar(w[:, 3]))) / t_eval
    return rate if direction == "ccw" else -rate


def skill_fitness(skill: str, traj, t_start: float, t_eval: float) -> float:
    if skill == "gait":
        return gait_fitness(traj, t_start, t_eval)
    if skill in ("rotate_cw", "rotate_ccw"):
        return rotation_fitness(traj, t_start, t_eval, skill.split("_")[1])
    raise ValueError(f"unknown skill {skill!r}")


def skill_windows(skill: str, traj, n_windows: int, n_eval: int, sample_period: float) -> np.ndarray:
    """Fitness of windows starting at rows 0..n_windows-1, each n_eval samples long.

    Vectorised equivalent of calling ``skill_fitness`` once per window.
    """
    traj = np.asarray(traj, dtype=float)
    if n_windows < 1 or n_windows - 1 + n_eval > traj.shape[0] - 1:
        raise ValueError("trajectory too short for the requested windows")
    t_eval = n_eval * sample_period
    start = np.arange(n_windows)
    end = start + n_eval
    if skill == "gait":
        return 100.0 * np.hypot(traj[end, 1] - traj[start, 1], traj[end, 2] - traj[start, 2]) / t_eval
    if skill in ("rotate_cw", "rotate_ccw"):
        cum = np.concatenate([[0.0], np.cumsum(unwrap_planar(traj[:, 3]))])
        rate = (cum[end] - cum[start]) / t_eval
        return rate if skill == "rotate_ccw" else -rate
    raise ValueError(f"unknown skill {skill!r}")


def swarm_fitness(light) -> float:
    """Time-average of the swarm-mean field value, normalised to [0, 1].

    ``light`` is a (steps, robots) array of field values on the 0-255 scale.
    """
    light = np.asarray(light, dtype=float)
    if light.size == 0:
        raise ValueError("empty light log")
    return float(np.mean(light.reshape(light.shape[0], -1).mean(axis=1)) / G_MAX)


def order_parameter(headings, neighbors) -> float:
    """Mean over agents of the resultant length of own plus perceived headings.

    ``neighbors`` is either a list of index collections or an (n, m) integer
    array padded with -1.
    """
    h = np.asarray(headings, dtype=float).ravel()
    if h.size == 0:
        raise ValueError("need at least one agent")
    unit = np.exp(1j * h)
    phi = np.empty(h.size)
    for n in range(h.size):
        idx = [int(j) for j in neighbors[n] if int(j) >= 0]
        phi[n] = abs(unit[n] + unit[idx].sum()) / (len(idx) + 1)
    return float(min(1.0, phi.mean()))


def _series(series) -> np.ndarray:
    F = np.asarray(series, dtype=float)
    if F.ndim == 1:
        F = F[None, :]
    if F.ndim != 2 or F.size == 0:
        raise ValueError("series must be a non-empty runs x trials matrix")
    if not np.all(np.isfinite(F)):
        raise ValueError("series contains non-finite values")
    return F


def best_so_far(series) -> np.ndarray:
    return np.maximum.accumulate(_series(series), axis=1)


def mbf(series) -> np.ndarray:
    """Mean over runs of each run's running-best fitness."""
    return best_so_far(series).mean(axis=0)


def tteq(mbf_a, mbf_b, timestamps):
    """First timestamp where ``mbf_a`` drops below ``mbf_b``; None if never."""
    a, b, t = (np.asarray(v, dtype=float).ravel() for v in (mbf_a, mbf_b, timestamps))
    if not a.size == b.size == t.size:
        raise ValueError("mbf_a, mbf_b and timestamps must have equal length")
    below = np.flatnonzero(a < b)
    return float(t[below[0]]) if below.size else None


@dataclass(frozen=True)
class NormalizedPerformance:
    wo: np.ndarray       # (skills, trials_wo) each WO curve over its own final value
    iso_sum: np.ndarray  # (trials_iso,) summed ISO MBF over summed WO finals


def normalized_performance(mbf_wo, mbf_iso) -> NormalizedPerformance:
    """Normalise per-skill MBF curves by the final WO values.

    Both arguments are (skills, trials) arrays; the trial grids may differ
    in length between WO and ISO.
    """
    wo = np.atleast_2d(np.asarray(mbf_wo, dtype=float))
    iso = np.atleast_2d(np.asarray(mbf_iso, dtype=float))
    if wo.shape[0] != iso.shape[0]:
        raise ValueError("WO and ISO need the same skills")
    finals = wo[:, -1]
    if np.any(finals == 0):
        raise ZeroDivisionError("a WO final value is zero")
    return NormalizedPerformance(wo / finals[:, None], iso.sum(axis=0) / finals.sum())


def evaluations_to_best(series) -> np.ndarray:
    """Per run, the 1-based index of the first trial reaching that run's best."""
    F = _series(series)
    return np.argmax(F == F.max(axis=1, keepdims=True), axis=1) + 1


def aes(series) -> tuple[float, float]:
    """(mean, population std) of evaluations-to-best across runs."""
    e = evaluations_to_best(series).astype(float)
    return float(e.mean()), float(e.std())


def robustness_consistency(per_morphology: dict) -> dict:
    """Spread of efficacy across morphologies and runs.

    ``per_morphology`` maps a morphology name to its runs x trials series.
    ROB is the population variance across morphologies of the mean final
    MBF and mean AES; CON is the per-morphology std over runs, summarised
    as mean and std across morphologies.
    """
    if len(per_morphology) < 2:
        raise ValueError("need at least two morphologies")
    finals_mean, aes_mean, finals_std, aes_std = [], [], [], []
    for name, series in per_morphology.items():
        F = _series(series)
        if F.shape[0] < 2:
            raise ValueError(f"morphology {name!r} needs at least two runs")
        finals = F.max(axis=1)
        e = evaluations_to_best(F).astype(float)
        finals_mean.append(finals.mean())
        aes_mean.append(e.mean())
        finals_std.append(finals.std())
        aes_std.append(e.std())
    return {
        "ROB_MBF": float(np.var(finals_mean)),
        "ROB_AES": float(np.var(aes_mean)),
        "CON_MBF": (float(np.mean(finals_std)), float(np.std(finals_std))),
        "CON_AES": (float(np.mean(aes_std)), float(np.std(aes_std))),
    }


def write_metrics_json(metrics: dict, path) -> None:
    Path(path).write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")


def tidy_rows(metrics: dict, condition: str = "") -> list[tuple[str, str, float]]:
    """Flatten nested scalar/list metrics into (metric, condition, value) rows."""
    rows = []

    def walk(prefix, value):
        if isinstance(value, dict):
            for k in sorted(value):
                walk(f"{prefix}.{k}" if prefix else str(k), value[k])
        elif isinstance(value, (list, tuple, np.ndarray)):
            for i, v in enumerate(np.asarray(value, dtype=object).ravel().tolist()):
                walk(f"{prefix}[{i}]", v)
        elif value is not None:
            rows.append((prefix, condition, float(value)))

    walk("", metrics)
    return rows


def write_tidy_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "condition", "value"])
        for metric, condition, value in rows:
            w.writerow([metric, condition, repr(float(value))])
