"""Bayesian optimization with a tree-structured Parzen estimator (TPE).

Trials are split at a quantile of their objective values; each parameter
gets a Parzen density over the better group and one over the worse group,
and the candidate maximizing the summed log density ratio is proposed.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Union

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

from .errors import ConfigError, TrainingError


@dataclass(frozen=True)
class Continuous:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ConfigError(f"Continuous needs lo < hi, got ({self.lo}, {self.hi})")

    def contains(self, x) -> bool:
        return isinstance(x, (int, float)) and self.lo <= x <= self.hi


@dataclass(frozen=True)
class Integer:
    lo: int
    hi: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ConfigError(f"Integer needs lo < hi, got ({self.lo}, {self.hi})")

    def contains(self, x) -> bool:
        return isinstance(x, (int, np.integer)) and not isinstance(x, bool) and self.lo <= x <= self.hi


@dataclass(frozen=True)
class Categorical:
    choices: tuple

    def __post_init__(self):
        choices = tuple(self.choices)
        if not choices or len(set(choices)) != len(choices):
            raise ConfigError("Categorical choices must be non-empty and distinct")
        object.__setattr__(self, "choices", choices)

    def contains(self, x) -> bool:
        return x in self.choices


ParamSpec = Union[Continuous, Integer, Categorical]
SearchSpace = dict  # name -> ParamSpec, insertion ordered


@dataclass
class Trial:
    config: dict
    value: float
    status: str = "ok"
    seconds: float = 0.0


@dataclass(frozen=True)
class TpeConfig:
    gamma: float = 0.25
    n_startup: int = 10
    n_candidates: int = 24
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        if self.n_startup < 2:
            raise ConfigError("n_startup must be >= 2")
        if self.n_candidates < 1:
            raise ConfigError("n_candidates must be >= 1")


# ---------------------------------------------------------------------------
# search spaces
# ---------------------------------------------------------------------------

_LR = Continuous(1e-3, 1.0 - 1e-3)
_TREE_SPACE = {
    "max_depth": Integer(5, 50),
    "min_samples_split": Integer(2, 11),
    "min_samples_leaf": Integer(1, 11),
    "criterion": Categorical(("gini", "entropy")),
}


def model_space(family: str) -> SearchSpace:
    """Hyperparameter domains for one learner family."""
    if family == "DT":
        return dict(_TREE_SPACE)
    if family in ("RF", "ET"):
        return {"n_estimators": Integer(50, 500), **_TREE_SPACE}
    if family == "RGBT":
        return {
            "n_estimators": Integer(50, 500),
            "max_depth": Integer(5, 50),
            "learning_rate": _LR,
            "gamma": Continuous(0.0, 5.0),
            "subsample": Continuous(0.5, 1.0),
        }
    if family == "LGBT":
        return {
            "n_estimators": Integer(50, 500),
            "max_depth": Integer(5, 50),
            "learning_rate": _LR,
            "num_leaves": Integer(100, 2000),
            "min_child_samples": Integer(10, 50),
        }
    if family == "OGBT":
        return {
            "n_estimators": Integer(50, 500),
            "max_depth": Integer(5, 50),
            "learning_rate": _LR,
            "depth": Integer(4, 10),
        }
    raise ConfigError(f"unknown learner family {family!r}")


def restrict_space(space: SearchSpace, overrides: dict | None) -> SearchSpace:
    """Replace numeric domains by ``overrides[name] = [lo, hi]`` where the name occurs.

    Categorical overrides give the allowed choices. Names absent from
    ``space`` are ignored so one override table can serve every family.
    """
    if not overrides:
        return dict(space)
    out = dict(space)
    for name, bounds in overrides.items():
        if name not in out:
            continue
        spec = out[name]
        if isinstance(spec, Categorical):
            out[name] = Categorical(tuple(bounds))
            continue
        if len(bounds) != 2:
            raise ConfigError(f"override for {name!r} must be [lo, hi]")
        out[name] = Integer(int(bounds[0]), int(bounds[1])) if isinstance(spec, Integer) \
            else Continuous(float(bounds[0]), float(bounds[1]))
    return out


def midpoint_config(space: SearchSpace) -> dict:
    """Centre of every domain (first choice for categoricals)."""
    out = {}
    for name, spec in space.items():
        if isinstance(spec, Integer):
            out[name] = (spec.lo + spec.hi) // 2
        elif isinstance(spec, Continuous):
            out[name] = (spec.lo + spec.hi) / 2.0
        else:
            out[name] = spec.choices[0]
    return out


def in_domain(space: SearchSpace, config: dict) -> bool:
    return set(config) == set(space) and all(space[k].contains(v) for k, v in config.items())


# ---------------------------------------------------------------------------
# trial splitting and Parzen densities
# ---------------------------------------------------------------------------

def split_trials(history: list[Trial], gamma: float) -> tuple[list[Trial], list[Trial]]:
    """Better ``max(1, ceil(gamma * n))`` trials and the rest; stable in ties."""
    if len(history) < 2:
        raise ConfigError("split_trials needs at least 2 trials")
    values = np.array([t.value for t in history])
    order = np.argsort(values, kind="stable")
    n_good = max(1, math.ceil(gamma * len(history)))
    good = set(order[:n_good].tolist())
    return [t for i, t in enumerate(history) if i in good], [t for i, t in enumerate(history) if i not in good]


class Parzen:
    """Truncated Gaussian mixture (numeric) or smoothed frequency (categorical).

    Numeric mixtures carry one kernel per distinct observation, weighted by
    multiplicity, plus a broad prior kernel counted as one extra location;
    bandwidths are ``max(nearest-neighbour spacing, range / min(100, m))``
    over the ``m`` distinct observations. Integers use the mass of each
    unit cell on the widened range ``[lo - 0.5, hi + 0.5]``.
    """

    def __init__(self, values, spec: ParamSpec):
        if len(values) == 0:
            raise ConfigError("Parzen estimator needs at least one observation")
        self.spec = spec
        if isinstance(spec, Categorical):
            counts = np.array([sum(1 for v in values if v == c) for c in spec.choices], dtype=float)
            self.probs = (counts + 1.0) / (len(values) + len(spec.choices))
            return
        if isinstance(spec, Integer):
            self.lo, self.hi = spec.lo - 0.5, spec.hi + 0.5
        else:
            self.lo, self.hi = float(spec.lo), float(spec.hi)
        width = self.hi - self.lo
        uniq, mult = np.unique(np.asarray(values, dtype=float), return_counts=True)
        m = uniq.size
        if m > 1:
            gaps = np.diff(uniq)
            nn = np.minimum(np.r_[np.inf, gaps], np.r_[gaps, np.inf])
        else:
            nn = np.zeros(1)
        sigma = np.maximum(nn, width / min(100, m))
        prior_w = 1.0 / (m + 1)
        self.mus = np.r_[uniq, (self.lo + self.hi) / 2.0]
        self.sigmas = np.r_[sigma, width]
        self.weights = np.r_[(1.0 - prior_w) * mult / mult.sum(), prior_w]
        a = (self.lo - self.mus) / self.sigmas
        b = (self.hi - self.mus) / self.sigmas
        self._cdf_lo = ndtr(a)
        self._mass = ndtr(b) - self._cdf_lo

    def logpdf(self, x) -> np.ndarray:
        """Log density (numeric) or log probability (integer, categorical)."""
        spec = self.spec
        if isinstance(spec, Categorical):
            idx = [spec.choices.index(v) for v in np.atleast_1d(np.asarray(x, dtype=object))]
            return np.log(self.probs[idx])
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if isinstance(spec, Integer):
            lo = (x[:, None] - 0.5 - self.mus) / self.sigmas
            hi = (x[:, None] + 0.5 - self.mus) / self.sigmas
            cell = (ndtr(hi) - ndtr(lo)) / self._mass
            return np.log(np.maximum(cell @ self.weights, 1e-300))
        z = (x[:, None] - self.mus) / self.sigmas
        logk = -0.5 * z * z - np.log(self.sigmas * math.sqrt(2.0 * math.pi) * self._mass)
        logw = np.log(self.weights)
        tot = logk + logw
        mx = tot.max(axis=1, keepdims=True)
        return (mx + np.log(np.exp(tot - mx).sum(axis=1, keepdims=True)))[:, 0]

    def sample(self, rng: np.random.Generator, n: int) -> list:
        spec = self.spec
        if isinstance(spec, Categorical):
            picks = rng.choice(len(spec.choices), size=n, p=self.probs)
            return [spec.choices[i] for i in picks]
        comp = rng.choice(self.mus.size, size=n, p=self.weights)
        u = self._cdf_lo[comp] + rng.random(n) * self._mass[comp]
        u = np.clip(u, 1e-300, 1.0 - 1e-16)
        x = np.clip(self.mus[comp] + self.sigmas[comp] * ndtri(u), self.lo, self.hi)
        if isinstance(spec, Integer):
            return [int(v) for v in np.clip(np.rint(x), spec.lo, spec.hi)]
        return [float(v) for v in x]


def kde_logdensity(values, spec: ParamSpec, x) -> float:
    """Log Parzen density of one candidate value given observed values."""
    if not spec.contains(x):
        raise ConfigError(f"value {x!r} outside its domain")
    return float(Parzen(values, spec).logpdf([x])[0])


# ---------------------------------------------------------------------------
# suggestion and optimization loop
# ---------------------------------------------------------------------------

def random_config(space: SearchSpace, rng: np.random.Generator) -> dict:
    out = {}
    for name, spec in space.items():
        if isinstance(spec, Integer):
            out[name] = int(rng.integers(spec.lo, spec.hi + 1))
        elif isinstance(spec, Continuous):
            out[name] = float(rng.uniform(spec.lo, spec.hi))
        else:
            out[name] = spec.choices[int(rng.integers(len(spec.choices)))]
    return out


def suggest(space: SearchSpace, history: list[Trial], cfg: TpeConfig) -> dict:
    """Next configuration; a pure function of (space, history, seed)."""
    rng = np.random.default_rng([int(cfg.seed), len(history)])
    ok = [t for t in history if t.status == "ok"]
    if len(ok) < cfg.n_startup:
        return random_config(space, rng)
    good, bad = split_trials(ok, cfg.gamma)
    columns = {}
    score = np.zeros(cfg.n_candidates)
    for name, spec in space.items():
        l = Parzen([t.config[name] for t in good], spec)
        g = Parzen([t.config[name] for t in bad], spec)
        cand = l.sample(rng, cfg.n_candidates)
        columns[name] = cand
        score += l.logpdf(cand) - g.logpdf(cand)
    best = int(np.argmax(score))
    return {name: columns[name][best] for name in space}


@dataclass
class OptimizeResult:
    best: Trial
    history: list[Trial] = field(default_factory=list)

    def best_so_far(self) -> list[float]:
        return best_so_far(self.history)


def best_so_far(history: list[Trial]) -> list[float]:
    out, cur = [], math.inf
    for t in history:
        if t.status == "ok" and t.value < cur:
            cur = t.value
        out.append(cur)
    return out


def optimize(objective: Callable[[dict], float], space: SearchSpace, max_evals: int,
             cfg: TpeConfig = TpeConfig()) -> OptimizeResult:
    """Minimize ``objective`` with exactly ``max_evals`` evaluations.

    Raising or non-finite evaluations are recorded as failed and left out
    of the densities.
    """
    if max_evals < 1:
        raise ConfigError("max_evals must be >= 1")
    history: list[Trial] = []
    for _ in range(max_evals):
        config = suggest(space, history, cfg)
        t0 = time.perf_counter()
        try:
            value = float(objective(config))
            status = "ok" if math.isfinite(value) else "failed"
        except Exception:  # noqa: BLE001 - any objective failure marks the trial
            value, status = math.nan, "failed"
        history.append(Trial(config, value, status, time.perf_counter() - t0))
    ok = [t for t in history if t.status == "ok"]
    if not ok:
        raise TrainingError(f"all {max_evals} objective evaluations failed")
    best = min(ok, key=lambda t: t.value)
    return OptimizeResult(best, history)


def random_search(objective: Callable[[dict], float], space: SearchSpace, max_evals: int,
                  seed: int = 0) -> OptimizeResult:
    """Uniform random search with the same trial bookkeeping as ``optimize``."""
    return optimize(objective, space, max_evals, TpeConfig(n_startup=max_evals + 1, seed=seed))


def trial_record(t: Trial) -> dict[str, Any]:
    return {"config": t.config, "value": t.value, "status": t.status, "wall_seconds": t.seconds}
