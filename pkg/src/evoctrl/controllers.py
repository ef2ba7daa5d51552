"""Reservoir controllers for swarm robots and the light-driven sub-group switch.

A reservoir maps 9 normalised sensor inputs to (v, w) through two frozen
9x9 ReLU layers and a trainable 2x9 tanh readout. Biases are zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

N_INPUTS = 9
N_OUTPUTS = 2
BLOCK = N_INPUTS * N_OUTPUTS  # readout weights per reservoir

HIDDEN_RANGE_HOMOGENEOUS = 2.0
HIDDEN_RANGE_HETEROGENEOUS = 1.0


@dataclass(frozen=True)
class ReservoirNet:
    w_h1: np.ndarray
    w_h2: np.ndarray
    w_out: np.ndarray = field(default_factory=lambda: np.zeros((N_OUTPUTS, N_INPUTS)))

    def __post_init__(self):
        for name, shape in (("w_h1", (9, 9)), ("w_h2", (9, 9)), ("w_out", (2, 9))):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def reservoir_init(rng: np.random.Generator, hidden_range: float) -> ReservoirNet:
    if not hidden_range > 0:
        raise ValueError("hidden_range must be positive")
    w_h1 = rng.uniform(-hidden_range, hidden_range, size=(9, 9))
    w_h2 = rng.uniform(-hidden_range, hidden_range, size=(9, 9))
    return ReservoirNet(w_h1, w_h2)


def reservoir_forward(net: ReservoirNet, s_in, forward_only: bool = False) -> tuple[float, float]:
    """(v, w) for one input vector.

    With ``forward_only`` the speed output is mapped to [0, 1] via (v + 1) / 2.
    """
    s = np.asarray(s_in, dtype=float)
    if s.shape != (N_INPUTS,) or not np.all(np.isfinite(s)):
        raise ValueError("input must be 9 finite values")
    h1 = np.maximum(net.w_h1 @ s, 0.0)
    h2 = np.maximum(net.w_h2 @ h1, 0.0)
    v, w = np.tanh(net.w_out @ h2)
    if forward_only:
        v = 0.5 * (v + 1.0)
    return float(v), float(w)


def decode_swarm_genotype(x, reservoirs: list[ReservoirNet]) -> list[ReservoirNet]:
    """Fill each reservoir's readout from consecutive 18-blocks of ``x``.

    Within a block the first 9 entries are the v-row, the next 9 the w-row.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size != BLOCK * len(reservoirs):
        raise ValueError(f"genotype length {x.size} != {BLOCK} * {len(reservoirs)}")
    return [replace(r, w_out=x[i * BLOCK:(i + 1) * BLOCK].reshape(N_OUTPUTS, N_INPUTS))
            for i, r in enumerate(reservoirs)]


def encode_swarm_genotype(reservoirs: list[ReservoirNet]) -> np.ndarray:
    return np.concatenate([r.w_out.ravel() for r in reservoirs])


def save_reservoirs(reservoirs: list[ReservoirNet], path, seed: int | None = None) -> None:
    record = {
        "seed": seed,
        "reservoirs": [{"w_h1": r.w_h1.tolist(), "w_h2": r.w_h2.tolist(), "w_out": r.w_out.tolist()}
                       for r in reservoirs],
    }
    Path(path).write_text(json.dumps(record, indent=1) + "\n")


def load_reservoirs(path) -> list[ReservoirNet]:
    record = json.loads(Path(path).read_text())
    return [ReservoirNet(np.array(r["w_h1"]), np.array(r["w_h2"]), np.array(r["w_out"]))
            for r in record["reservoirs"]]


@dataclass(frozen=True)
class RegulatoryPolicy:
    """Piecewise probability of expressing sub-group 0 ("green").

    ``thresholds`` split the 0-255 light scale into bands (high to low);
    ``probabilities`` holds one value per band.
    """

    thresholds: tuple[float, ...] = (229.0, 76.0)
    probabilities: tuple[float, ...] = (1.0, 0.75, 0.5)
    update_period: float = 5.0

    def __post_init__(self):
        if len(self.probabilities) != len(self.thresholds) + 1:
            raise ValueError("need one probability per band")
        if any(not 0.0 <= p <= 1.0 for p in self.probabilities):
            raise ValueError("probabilities must lie in [0, 1]")
        if any(a <= b for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ValueError("thresholds must be strictly decreasing")
        if not self.update_period > 0:
            raise ValueError("update_period must be positive")


def regulatory_probability(light: float, policy: RegulatoryPolicy = RegulatoryPolicy()) -> float:
    if not 0.0 <= light <= 255.0:
        raise ValueError(f"light {light} outside [0, 255]")
    for threshold, p in zip(policy.thresholds, policy.probabilities):
        if light > threshold:
            return p
    return policy.probabilities[-1]


def regulatory_update(current_group: int, light: float, rng: np.random.Generator,
                      policy: RegulatoryPolicy = RegulatoryPolicy()) -> int:
    """Resample a robot's active sub-group: 0 with P_green(light), else 1.

    ``current_group`` is accepted for interface symmetry; the draw is
    memoryless. Callers invoke this once per ``policy.update_period``.
    """
    return 0 if rng.random() < regulatory_probability(light, policy) else 1
