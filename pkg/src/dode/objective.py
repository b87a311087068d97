"""Outer-problem objective, feasibility helpers and error metrics.

``F(x) = omega1 * f1(x, seed) + omega2 * f2(c(x), c_hat)`` where both terms
are relative Euclidean discrepancies. Counts ``c(x)`` come from a *counts
source*: any callable ``x -> counts`` with a boolean ``is_true_simulator``
attribute. Only true-simulator evaluations are counted against the budget.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .network import Bounds, TripProductions


class ZeroNormError(ValueError):
    """Raised when a relative discrepancy has a zero reference vector."""


class BudgetExhausted(RuntimeError):
    """Raised instead of running a true simulation once the budget is spent."""


class OutOfBoundsError(ValueError):
    pass


def _norm(v) -> float:
    return float(np.linalg.norm(np.asarray(v, dtype=float)))


def f1(x, seed) -> float:
    """Relative distance of ``x`` to the seed demand."""
    x, seed = np.asarray(x, dtype=float), np.asarray(seed, dtype=float)
    if x.shape != seed.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {seed.shape}")
    ref = _norm(seed)
    if ref == 0:
        raise ZeroNormError("seed demand has zero norm")
    return _norm(x - seed) / ref


def f2(c, c_hat) -> float:
    """Relative distance of simulated counts to observed counts."""
    c, c_hat = np.asarray(c, dtype=float), np.asarray(c_hat, dtype=float)
    if c.shape != c_hat.shape:
        raise ValueError(f"shape mismatch: {c.shape} vs {c_hat.shape}")
    ref = _norm(c_hat)
    if ref == 0:
        raise ZeroNormError("observed counts have zero norm")
    return _norm(c - c_hat) / ref


def rmse(y, y_hat) -> float:
    y, y_hat = np.asarray(y, dtype=float), np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {y_hat.shape}")
    if y.size == 0:
        raise ValueError("rmse of empty vectors")
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def clip_to_bounds(x, bounds: Bounds) -> np.ndarray:
    return np.minimum(bounds.upper, np.maximum(bounds.lower, np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class GenerationCheck:
    feasible: bool
    slack: np.ndarray  # o_i minus outbound sum, per origin


def outbound_totals(x, owner, n_origins) -> np.ndarray:
    """Sum of demand per origin; ``owner[k]`` is the origin position of entry ``k``."""
    return np.bincount(owner, weights=np.asarray(x, dtype=float), minlength=n_origins)


def check_generation(x, productions: TripProductions, owner, rtol=1e-12) -> GenerationCheck:
    """Outbound trips per origin against the production caps.

    A relative tolerance absorbs summation round-off so that the ground truth
    is feasible against productions derived from it.
    """
    o = np.asarray(productions.values, dtype=float)
    slack = o - outbound_totals(x, owner, len(o))
    return GenerationCheck(bool(np.all(slack >= -rtol * np.maximum(1.0, o))), slack)


def project_feasible(x, bounds: Bounds, productions: TripProductions, owner) -> np.ndarray:
    """Clip to bounds, then shrink ``x - lower`` per offending origin until its total equals ``o_i``."""
    x = clip_to_bounds(x, bounds)
    o = np.asarray(productions.values, dtype=float)
    n = len(o)
    totals = outbound_totals(x, owner, n)
    over = totals > o
    if not np.any(over):
        return x
    floor = outbound_totals(bounds.lower, owner, n)
    if np.any(floor[over] > o[over]):
        raise ValueError("lower bounds alone exceed the trip productions")
    excess = totals - floor
    factor = np.ones(n)
    factor[over] = (o[over] - floor[over]) / excess[over]
    y = bounds.lower + (x - bounds.lower) * factor[owner]
    # guard against round-off pushing a total back over its cap
    for i in np.flatnonzero(outbound_totals(y, owner, n) > o):
        mask = owner == i
        f = factor[i]
        while np.sum(y[mask]) > o[i]:
            f = np.nextafter(f, 0.0)
            y[mask] = bounds.lower[mask] + (x[mask] - bounds.lower[mask]) * f
    return y


class EvaluationCounter:
    """Thread-safe tally of true-simulator objective evaluations with an optional budget."""

    def __init__(self, budget: int | None = None, start: int = 0):
        self.budget = budget
        self._count = start
        self._lock = threading.Lock()

    @property
    def count(self) -> int:
        return self._count

    @property
    def remaining(self) -> float:
        return np.inf if self.budget is None else self.budget - self._count

    def acquire(self) -> int:
        """Reserve one evaluation; raises :class:`BudgetExhausted` when none is left."""
        with self._lock:
            if self.budget is not None and self._count >= self.budget:
                raise BudgetExhausted(f"budget of {self.budget} true evaluations spent")
            self._count += 1
            return self._count


@dataclass(frozen=True)
class ObjectiveConfig:
    omega1: float
    omega2: float
    seed: np.ndarray | None
    observed_counts: np.ndarray
    bounds: Bounds
    productions: TripProductions
    owner: np.ndarray  # origin position of each demand entry

    def __post_init__(self):
        if self.omega1 < 0 or self.omega2 < 0:
            raise ValueError("objective weights must be nonnegative")
        if self.seed is None and self.omega1 != 0:
            raise ValueError("omega1 must be 0 without a seed demand")

    @classmethod
    def for_scenario(cls, scenario, seed_kind="None", omega1=1.0, omega2=1.0) -> "ObjectiveConfig":
        if scenario.observed_counts is None:
            raise ValueError("scenario has no observed counts; simulate it first")
        seed = scenario.seed(seed_kind)
        return cls(omega1 if seed is not None else 0.0, omega2, seed,
                   np.asarray(scenario.observed_counts, dtype=float), scenario.bounds,
                   scenario.productions, scenario.origin_incidence())


@dataclass(frozen=True)
class ObjectiveValue:
    f1: float
    f2: float
    F: float
    of_eval_counted: bool
    counts: np.ndarray
    result: object = None  # full simulator output when available


class LinearCountModel:
    """Counts from a fixed assignment matrix, ``c = P x``; never counted."""

    is_true_simulator = False

    def __init__(self, assignment):
        self.matrix = assignment.matrix()

    def __call__(self, x) -> np.ndarray:
        return self.matrix @ np.asarray(x, dtype=float)


def compose(config: ObjectiveConfig, x, counts) -> tuple[float, float, float]:
    """``(f1, f2, F)`` for demand ``x`` and its counts."""
    t1 = f1(x, config.seed) if config.seed is not None else 0.0
    c_hat = config.observed_counts
    if _norm(c_hat) == 0 and _norm(counts) == 0:
        t2 = 0.0  # 0/0: nothing observed and nothing simulated
    else:
        t2 = f2(counts, c_hat)
    return t1, t2, config.omega1 * t1 + config.omega2 * t2


class Objective:
    """``F`` bound to a configuration and an evaluation counter."""

    def __init__(self, config: ObjectiveConfig, counter: EvaluationCounter | None = None, atol=1e-9):
        self.config = config
        self.counter = counter or EvaluationCounter()
        self.atol = atol

    @property
    def evaluations(self) -> int:
        return self.counter.count

    def evaluate(self, x, source) -> ObjectiveValue:
        x = np.asarray(x, dtype=float)
        b = self.config.bounds
        if x.shape != b.lower.shape:
            raise ValueError(f"demand has shape {x.shape}, expected {b.lower.shape}")
        if np.any(x < b.lower - self.atol) or np.any(x > b.upper + self.atol):
            raise OutOfBoundsError("demand vector outside its bounds")
        counted = bool(getattr(source, "is_true_simulator", False))
        result = None
        if counted:
            self.counter.acquire()
        if hasattr(source, "assign"):
            result = source.assign(x)
            counts = np.asarray(result.counts, dtype=float)
        else:
            counts = np.asarray(source(x), dtype=float)
        t1, t2, total = compose(self.config, x, counts)
        return ObjectiveValue(t1, t2, total, counted, counts, result)

    def __call__(self, x, source) -> float:
        return self.evaluate(x, source).F
