"""Black-box optimizers. All of them maximise fitness.

Objectives are called as ``objective(x, seed)``; the seed lets stochastic
evaluations (swarm trials) be reproduced regardless of how evaluations are
scheduled over workers. Batches go through ``map_fn`` (``map`` by default,
or an executor's ordered ``map``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .cpg import CpgNetwork, set_initial_state
from .metrics import skill_windows

Objective = Callable[[np.ndarray, int], float]


def _new_seeds(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.integers(0, 2**63 - 1, size=shape, dtype=np.int64)


def _evaluate(objective: Objective, X: np.ndarray, seeds: np.ndarray, map_fn=map) -> np.ndarray:
    """Fitness for every row of X under every seed column: shape (len(X), n_seeds)."""
    X = np.atleast_2d(X)
    seeds = np.asarray(seeds).reshape(len(X), -1)
    jobs_x = [X[i] for i in range(len(X)) for _ in range(seeds.shape[1])]
    jobs_s = [int(s) for s in seeds.ravel()]
    out = np.array(list(map_fn(objective, jobs_x, jobs_s)), dtype=float).reshape(seeds.shape)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("objective returned a non-finite value")
    return out


@dataclass
class History:
    """Per-evaluation and per-generation logs of one optimizer run."""

    evaluations: list[tuple[int, int, float]] = field(default_factory=list)  # (generation, candidate, fitness)
    generations: list[dict] = field(default_factory=list)
    best_x: np.ndarray | None = None
    best_f: float = -math.inf

    def record(self, gen: int, X: np.ndarray, f: np.ndarray, extra: dict | None = None) -> None:
        for i, fi in enumerate(f):
            self.evaluations.append((gen, i, float(fi)))
        i = int(np.argmax(f))
        if f[i] > self.best_f:
            self.best_f = float(f[i])
            self.best_x = np.array(X[i], dtype=float)
        row = {"generation": gen, "mean": float(np.mean(f)), "max": float(np.max(f)),
               "best_so_far": self.best_f}
        if extra:
            row.update(extra)
        self.generations.append(row)

    @property
    def fitness(self) -> np.ndarray:
        return np.array([e[2] for e in self.evaluations])

    def best_so_far(self) -> np.ndarray:
        return np.maximum.accumulate(self.fitness)


# ------------------------------------------------------------------- RevDE

@dataclass(frozen=True)
class RevDeConfig:
    lam: int = 30
    mu: int = 10
    F: float = 0.5
    CR: float = 0.9
    n_generations: int = 10
    bounds: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        if self.lam != 3 * self.mu:
            raise ValueError("RevDE requires lam == 3 * mu")
        if not self.F > 0 or not 0 <= self.CR <= 1:
            raise ValueError("need F > 0 and CR in [0, 1]")


def revde_transform(mu1, mu2, mu3, F: float = 0.5):
    l1 = mu1 + F * (mu2 - mu3)
    l2 = mu2 + F * (mu3 - l1)
    l3 = mu3 + F * (l1 - l2)
    return l1, l2, l3


def revde_inverse(l1, l2, l3, F: float = 0.5):
    """Exact inverse of ``revde_transform`` (each line solved in reverse order)."""
    mu3 = l3 - F * (l1 - l2)
    mu2 = l2 - F * (mu3 - l1)
    mu1 = l1 - F * (mu2 - mu3)
    return mu1, mu2, mu3


def revde_matrix(F: float = 0.5) -> np.ndarray:
    """3x3 coefficient matrix of (l1, l2, l3) in terms of (mu1, mu2, mu3)."""
    return np.column_stack([np.array(revde_transform(*e, F)) for e in np.eye(3)])


def revde_generation(pop: np.ndarray, fitness: np.ndarray, cfg: RevDeConfig,
                     rng: np.random.Generator) -> np.ndarray:
    pop = np.asarray(pop, dtype=float)
    if pop.shape[0] != cfg.lam:
        raise ValueError(f"population size {pop.shape[0]} != lam {cfg.lam}")
    order = np.argsort(-np.asarray(fitness), kind="stable")
    mu1 = pop[order[:cfg.mu]]
    mu2 = mu1[rng.permutation(cfg.mu)]
    mu3 = mu2[rng.permutation(cfg.mu)]
    lams = revde_transform(mu1, mu2, mu3, cfg.F)
    children = []
    for lam_n, mu_n in zip(lams, (mu1, mu2, mu3)):
        mask = rng.random(lam_n.shape) < cfg.CR
        children.append(np.where(mask, lam_n, mu_n))
    return np.clip(np.vstack(children), *cfg.bounds)


def revde_optimize(objective: Objective, dim: int, cfg: RevDeConfig, rng: np.random.Generator,
                   budget: int | None = None, map_fn=map) -> History:
    """Run RevDE; ``budget`` caps the number of evaluations (partial last generation)."""
    hist = History()
    pop = rng.uniform(*cfg.bounds, size=(cfg.lam, dim))
    used = 0
    for gen in range(cfg.n_generations if budget is None else 1 << 30):
        n = cfg.lam if budget is None else min(cfg.lam, budget - used)
        if n <= 0:
            break
        seeds = _new_seeds(rng, n)
        f = _evaluate(objective, pop[:n], seeds, map_fn)[:, 0]
        used += n
        hist.record(gen, pop[:n], f)
        if n < cfg.lam:
            break
        if budget is None and gen == cfg.n_generations - 1:
            break
        pop = revde_generation(pop, f, cfg, rng)
    return hist


# ---------------------------------------------------------------------- DE

@dataclass(frozen=True)
class DeConfig:
    population: int = 25
    generations: int = 100
    F: float = 0.5
    CR: float = 0.9
    repeats: int = 2
    bounds: tuple[float, float] = (-10.0, 10.0)

    def __post_init__(self):
        if self.population < 4:
            raise ValueError("DE needs population >= 4")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")


def de_mutation(x_i, x_j, x_k, F: float) -> np.ndarray:
    return np.asarray(x_i) + F * (np.asarray(x_j) - np.asarray(x_k))


def de_crossover(y, x_i, mask) -> np.ndarray:
    mask = np.asarray(mask, dtype=float)
    return mask * np.asarray(y) + (1.0 - mask) * np.asarray(x_i)


def de_propose(pop: np.ndarray, cfg: DeConfig, rng: np.random.Generator) -> np.ndarray:
    """One trial vector per population slot from a random distinct triplet."""
    n, d = pop.shape
    if n < 4:
        raise ValueError("population too small for DE")
    trials = np.empty_like(pop)
    for c in range(n):
        i, j, k = rng.choice(n, size=3, replace=False)
        y = de_mutation(pop[i], pop[j], pop[k], cfg.F)
        mask = rng.random(d) < cfg.CR
        trials[c] = de_crossover(y, pop[i], mask)
    return np.clip(trials, *cfg.bounds)


def de_select(pop, fit, trials, trial_fit):
    """(mu + lambda) truncation; ties keep parents first."""
    merged = np.vstack([pop, trials])
    merged_f = np.concatenate([fit, trial_fit])
    keep = np.argsort(-merged_f, kind="stable")[:len(pop)]
    return merged[keep], merged_f[keep]


def de_step(pop, fitness, evaluate: Callable[[np.ndarray], np.ndarray], cfg: DeConfig,
            rng: np.random.Generator):
    """Propose, evaluate and select; returns (population, fitness, trials, trial fitness)."""
    trials = de_propose(np.asarray(pop, dtype=float), cfg, rng)
    trial_fit = np.asarray(evaluate(trials), dtype=float)
    new_pop, new_fit = de_select(np.asarray(pop, dtype=float), np.asarray(fitness, dtype=float),
                                 trials, trial_fit)
    return new_pop, new_fit, trials, trial_fit


def de_optimize(objective: Objective, dim: int, cfg: DeConfig, rng: np.random.Generator,
                map_fn=map, init_range: tuple[float, float] | None = None) -> History:
    """Classic DE with min-over-repeats fitness and elitist selection.

    ``generations`` counts offspring generations after the initial one.
    Per-generation rows log the surviving population's mean and max.
    """
    lo, hi = init_range or cfg.bounds

    def evaluate(X):
        return _evaluate(objective, X, _new_seeds(rng, (len(X), cfg.repeats)), map_fn).min(axis=1)

    hist = History()
    pop = rng.uniform(lo, hi, size=(cfg.population, dim))
    fit = evaluate(pop)
    hist.record(0, pop, fit, {"pop_mean": float(fit.mean()), "pop_max": float(fit.max())})
    for gen in range(1, cfg.generations + 1):
        pop, fit, trials, trial_fit = de_step(pop, fit, evaluate, cfg, rng)
        hist.record(gen, trials, trial_fit, {"pop_mean": float(fit.mean()), "pop_max": float(fit.max())})
        hist.generations[-1]["population"] = pop.copy()
    hist.generations[0]["population"] = None
    return hist


# ------------------------------------------------------------------ CMA-ES

@dataclass(frozen=True)
class CmaesConfig:
    popsize: int = 30
    sigma0: float = 1.0
    n_generations: int = 100
    init_range: tuple[float, float] = (-5.0, 5.0)
    n_repeats: int = 3
    bounds: tuple[float, float] | None = None
    max_resample: int = 10

    def __post_init__(self):
        if self.popsize < 2 or not self.sigma0 > 0 or self.n_repeats < 1:
            raise ValueError("invalid CMA-ES configuration")


@dataclass
class CmaesState:
    mean: np.ndarray
    sigma: float
    C: np.ndarray
    p_sigma: np.ndarray
    p_c: np.ndarray
    generation: int = 0


class Cmaes:
    """(mu/mu_w, lambda)-CMA-ES with the usual default constants."""

    def __init__(self, mean, sigma0: float, popsize: int):
        n = len(mean)
        self.n = n
        self.lam = popsize
        self.mu = popsize // 2
        w = math.log(self.mu + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = w / w.sum()
        self.mu_eff = 1.0 / np.sum(self.weights**2)
        self.cc = (4 + self.mu_eff / n) / (n + 4 + 2 * self.mu_eff / n)
        self.cs = (self.mu_eff + 2) / (n + self.mu_eff + 5)
        self.c1 = 2 / ((n + 1.3) ** 2 + self.mu_eff)
        self.cmu = min(1 - self.c1,
                       2 * (self.mu_eff - 2 + 1 / self.mu_eff) / ((n + 2) ** 2 + self.mu_eff))
        self.damps = 1 + 2 * max(0.0, math.sqrt((self.mu_eff - 1) / (n + 1)) - 1) + self.cs
        self.chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n**2))
        self.state = CmaesState(np.asarray(mean, dtype=float).copy(), float(sigma0), np.eye(n),
                                np.zeros(n), np.zeros(n))
        self._eig()

    def _eig(self):
        C = self.state.C
        C[:] = np.triu(C) + np.triu(C, 1).T
        vals, self.B = np.linalg.eigh(C)
        self.D = np.sqrt(np.maximum(vals, 1e-300))

    def sample(self, rng: np.random.Generator, bounds=None, max_resample: int = 10) -> np.ndarray:
        st = self.state
        X = np.empty((self.lam, self.n))
        for i in range(self.lam):
            for _ in range(max_resample if bounds is not None else 1):
                x = st.mean + st.sigma * (self.B @ (self.D * rng.standard_normal(self.n)))
                if bounds is None or np.all((x >= bounds[0]) & (x <= bounds[1])):
                    break
            X[i] = x if bounds is None else np.clip(x, *bounds)
        return X

    def tell(self, X: np.ndarray, fitness: np.ndarray) -> None:
        st = self.state
        n = self.n
        order = np.argsort(-np.asarray(fitness), kind="stable")[:self.mu]
        old_mean = st.mean
        y = (X[order] - old_mean) / st.sigma
        y_w = self.weights @ y
        st.mean = old_mean + st.sigma * y_w
        inv_sqrt_C_y = self.B @ ((self.B.T @ y_w) / self.D)
        st.p_sigma = (1 - self.cs) * st.p_sigma + math.sqrt(self.cs * (2 - self.cs) * self.mu_eff) * inv_sqrt_C_y
        st.generation += 1
        norm_ps = np.linalg.norm(st.p_sigma)
        hsig = norm_ps / math.sqrt(1 - (1 - self.cs) ** (2 * st.generation)) / self.chi_n < 1.4 + 2 / (n + 1)
        st.p_c = (1 - self.cc) * st.p_c + hsig * math.sqrt(self.cc * (2 - self.cc) * self.mu_eff) * y_w
        rank_mu = (self.weights[:, None] * y).T @ y
        delta = (1 - hsig) * self.cc * (2 - self.cc)
        st.C = ((1 - self.c1 - self.cmu + self.c1 * delta) * st.C
                + self.c1 * np.outer(st.p_c, st.p_c) + self.cmu * rank_mu)
        st.sigma *= math.exp((self.cs / self.damps) * (norm_ps / self.chi_n - 1))
        self._eig()

    @property
    def min_eigenvalue(self) -> float:
        return float(np.min(self.D) ** 2)


def cmaes_optimize(objective: Objective, n: int, cfg: CmaesConfig, rng: np.random.Generator,
                   map_fn=map, mean0=None) -> History:
    """CMA-ES where each candidate's fitness is the median of ``n_repeats`` runs."""
    if n < 1:
        raise ValueError("dimension must be >= 1")
    if mean0 is None:
        mean0 = rng.uniform(*cfg.init_range, size=n)
    es = Cmaes(mean0, cfg.sigma0, cfg.popsize)
    hist = History()
    for gen in range(cfg.n_generations):
        X = es.sample(rng, cfg.bounds, cfg.max_resample)
        f = np.median(_evaluate(objective, X, _new_seeds(rng, (len(X), cfg.n_repeats)), map_fn), axis=1)
        hist.record(gen, X, f, {"sigma": es.state.sigma, "min_eig": es.min_eigenvalue,
                                "population": X.copy()})
        es.tell(X, f)
        hist.generations[-1]["min_eig_after"] = es.min_eigenvalue
    return hist


# --------------------------------------------------------------------- ISO

@dataclass(frozen=True)
class IsoConfig:
    n_trials: int = 150
    t_trial: float = 120.0
    t_eval: float = 60.0
    sample_period: float = 0.1

    def __post_init__(self):
        if not self.t_trial > self.t_eval > 0:
            raise ValueError("need t_trial > t_eval > 0")

    @property
    def n_windows(self) -> int:
        return int(round((self.t_trial - self.t_eval) / self.sample_period))

    @property
    def n_eval(self) -> int:
        return int(round(self.t_eval / self.sample_period))


@dataclass
class IsoResult:
    skills: list
    t_eval: float
    trial_fitness: np.ndarray          # (n_trials, n_skills) best window per trial
    best_fitness: np.ndarray           # (n_skills,)
    best_states: np.ndarray            # (n_skills, 2k)
    best_trial: np.ndarray             # (n_skills,)
    best_window: np.ndarray            # (n_skills,)
    windows_evaluated: int = 0

    def best_so_far(self) -> np.ndarray:
        return np.maximum.accumulate(self.trial_fitness, axis=0)


def evaluate_windows(traj: np.ndarray, skills: Sequence, cfg: IsoConfig) -> np.ndarray:
    """Fitness of every rolling window for every skill: shape (n_windows, n_skills)."""
    cols = []
    for skill in skills:
        if callable(skill):
            cols.append(np.asarray(skill(traj, cfg.n_windows, cfg.n_eval, cfg.sample_period)))
        else:
            cols.append(skill_windows(skill, traj, cfg.n_windows, cfg.n_eval, cfg.sample_period))
    return np.column_stack(cols)


def iso_optimize(net: CpgNetwork, body_trial, skills: Sequence, cfg: IsoConfig,
                 rng: np.random.Generator) -> IsoResult:
    """Random-search initial-state optimisation with rolling-window bootstrapping.

    ``net`` carries the (fixed, random) weights. ``body_trial(net, duration)``
    returns (trajectory, states) with trajectory rows (t, x, y, heading) and
    states at the same instants, both sampled every ``cfg.sample_period``.
    Every skill is scored on every window of every trial; per skill the best
    window's starting CPG state is kept.
    """
    if not skills:
        raise ValueError("need at least one skill")
    n_skills = len(skills)
    trial_fitness = np.empty((cfg.n_trials, n_skills))
    best_f = np.full(n_skills, -np.inf)
    best_states = np.zeros((n_skills, 2 * net.k))
    best_trial = np.full(n_skills, -1)
    best_window = np.full(n_skills, -1)
    evaluated = 0
    for trial in range(cfg.n_trials):
        s0 = rng.uniform(-1.0, 1.0, size=2 * net.k)
        traj, states = body_trial(set_initial_state(net, s0), cfg.t_trial)
        F = evaluate_windows(traj, skills, cfg)
        evaluated += F.shape[0]
        idx = np.argmax(F, axis=0)
        trial_fitness[trial] = F[idx, np.arange(n_skills)]
        for s in range(n_skills):
            if trial_fitness[trial, s] > best_f[s]:
                best_f[s] = trial_fitness[trial, s]
                best_states[s] = states[idx[s]]
                best_trial[s] = trial
                best_window[s] = idx[s]
    return IsoResult(list(skills), cfg.t_eval, trial_fitness, best_f, best_states, best_trial,
                     best_window, evaluated)


def iso_retest(result: IsoResult, skill_index: int, net: CpgNetwork, body_trial, t_eval: float) -> float:
    """Fresh t_eval rollout from a skill's stored best state."""
    if not math.isclose(t_eval, result.t_eval):
        raise ValueError(f"retest duration {t_eval} != evaluation window {result.t_eval}")
    state = result.best_states[skill_index]
    if state.size != 2 * net.k:
        raise ValueError("stored state does not match network size")
    traj, _ = body_trial(set_initial_state(net, state), t_eval)
    skill = result.skills[skill_index]
    sub = IsoConfig(n_trials=1, t_trial=t_eval + 1.0, t_eval=t_eval)
    if callable(skill):
        return float(skill(traj, 1, sub.n_eval, sub.sample_period)[0])
    return float(skill_windows(skill, traj, 1, sub.n_eval, sub.sample_period)[0])
