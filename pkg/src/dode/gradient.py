"""Gradient-based estimation: assignment-matrix gradients (M1) and SPSA (M2).

Both methods share the update ``x <- x + eta * d`` with ``eta`` from the
quadratic line search. Only true simulator runs count against the budget;
a run that would exceed it stops and returns the best point evaluated so far.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .history import EstimationHistory, IterationRecord
from .linesearch import determine_max_step_rate, line_search
from .objective import (
    BudgetExhausted,
    EvaluationCounter,
    LinearCountModel,
    Objective,
    ObjectiveConfig,
    clip_to_bounds,
    project_feasible,
    rmse,
)


def _relative_gradient(residual, ref_norm):
    """``residual / (||residual|| * ref_norm)``; zero at zero residual."""
    nrm = float(np.linalg.norm(residual))
    if nrm == 0 or ref_norm == 0:
        return np.zeros_like(residual, dtype=float)
    return residual / (nrm * ref_norm)


def grad_f1(x, seed) -> np.ndarray:
    x, seed = np.asarray(x, dtype=float), np.asarray(seed, dtype=float)
    return _relative_gradient(x - seed, float(np.linalg.norm(seed)))


def _as_operator(P):
    if hasattr(P, "matrix"):
        return P.matrix()
    return P


def grad_f2_am(c, c_hat, P) -> np.ndarray:
    """Gradient of the count term under the linear model ``c = P x``.

    ``P`` is an :class:`~dode.dta.AssignmentMatrix`, a sparse matrix or a dense
    array with one row per count and one column per demand entry.
    """
    c, c_hat = np.asarray(c, dtype=float), np.asarray(c_hat, dtype=float)
    P = _as_operator(P)
    residual = c - c_hat
    nrm = float(np.linalg.norm(residual))
    ref = float(np.linalg.norm(c_hat))
    if nrm == 0 or ref == 0:
        return np.zeros(P.shape[1])
    return np.asarray(P.T @ residual, dtype=float).ravel() / (nrm * ref)


def descent_direction_am(g1, g2, omega1, omega2) -> np.ndarray:
    return -(omega1 * np.asarray(g1, dtype=float) + omega2 * np.asarray(g2, dtype=float))


def project_direction(x, d, bounds, productions, owner, rtol=1e-9) -> np.ndarray:
    """Keep the outbound total fixed for origins sitting on their production cap.

    For such an origin with a net increase along ``d``, the mean of its free
    entries (those not pushing into a bound) is removed, so the step moves
    trips between its OD cells instead of adding any.
    """
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float).copy()
    o = np.asarray(productions.values, dtype=float)
    totals = np.bincount(owner, weights=x, minlength=len(o))
    free = ~(((x <= bounds.lower) & (d < 0)) | ((x >= bounds.upper) & (d > 0)))
    for i in np.flatnonzero(o - totals <= rtol * np.maximum(1.0, o)):
        mask = (owner == i) & free
        if mask.any() and d[mask].sum() > 0:
            d[mask] -= d[mask].mean()
    return d


@dataclass(frozen=True)
class SpsaConfig:
    b: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError("perturbation magnitude b must be positive")


def draw_perturbation(rng, n) -> np.ndarray:
    """Independent symmetric Bernoulli +-1 entries."""
    return rng.choice(np.array([-1.0, 1.0]), size=n)


def spsa_gradient(x, f2_at_x, f2_of, delta, b=1.0, bounds=None):
    """One-sided simultaneous-perturbation estimate of the count-term gradient.

    ``f2_of`` is evaluated once, at ``x - b * delta`` (clipped to ``bounds`` if
    given). Returns the estimate and ``f2`` at the perturbed point.
    """
    x = np.asarray(x, dtype=float)
    delta = np.asarray(delta, dtype=float)
    x_minus = x - b * delta
    if bounds is not None:
        x_minus = clip_to_bounds(x_minus, bounds)
    f_minus = f2_of(x_minus)
    return (f2_at_x - f_minus) / b / delta, f_minus


def gradient_step(x, d, eta, bounds) -> np.ndarray:
    if eta < 0:
        raise ValueError("step rate must be nonnegative")
    return clip_to_bounds(np.asarray(x, dtype=float) + eta * np.asarray(d, dtype=float), bounds)


@dataclass(frozen=True)
class MethodConfig:
    budget: int = 201
    n_samples: int = 2
    ell_delta: float = 1e8
    eps1: float = 1e-8
    spsa: SpsaConfig = SpsaConfig()
    keep_iterates: bool = False
    project_direction: bool = True
    max_halvings: int = 40  # M1 only: line-search bracket reductions when the fit stalls


class _Run:
    """Bookkeeping shared by both gradient methods."""

    def __init__(self, method, scenario, seed_kind, config, simulator, x0, min_budget):
        if config.budget < min_budget:
            raise ValueError(f"budget >= {min_budget} required for {method}")
        self.cfg = ObjectiveConfig.for_scenario(scenario, seed_kind)
        self.objective = Objective(self.cfg, EvaluationCounter(config.budget))
        self.sim = simulator or scenario.simulator()
        self.config = config
        self.hist = EstimationHistory(method, str(getattr(seed_kind, "value", seed_kind)))
        self.t0 = time.perf_counter()
        start = np.ones(scenario.dim) if x0 is None else np.asarray(x0, dtype=float)
        self.x0 = self.feasible(start)
        self.best = None  # (ObjectiveValue, x)

    def feasible(self, x):
        return project_feasible(x, self.cfg.bounds, self.cfg.productions, self.cfg.owner)

    def direction(self, x, d):
        if not self.config.project_direction:
            return d
        return project_direction(x, d, self.cfg.bounds, self.cfg.productions, self.cfg.owner)

    def true_eval(self, x):
        return self.objective.evaluate(x, self.sim)

    def accept(self, tau, x, value, eta):
        if self.best is None or value.F < self.best[0].F:
            self.best = (value, x)
        if self.config.keep_iterates:
            self.hist.iterates.append(x.copy())
        self.hist.add(IterationRecord(tau, value.F, value.f1, value.f2, eta, self.objective.evaluations,
                                      time.perf_counter() - self.t0))

    def finish(self, reason):
        h = self.hist
        h.stop_reason = reason
        if self.best is not None:
            value, x = self.best
            h.x_final, h.counts_final = x, value.counts
            h.F_final, h.f1_final, h.f2_final = value.F, value.f1, value.f2
        h.of_evaluations = self.objective.evaluations
        h.running_time_s = time.perf_counter() - self.t0
        return h


def run_am_method(scenario, seed_kind="None", config: MethodConfig | None = None, *,
                  simulator=None, x0=None) -> EstimationHistory:
    """M1: descent along the assignment-matrix gradient.

    Each iteration spends one simulation at ``x_tau`` for counts and the
    assignment matrix, samples the line search through the linear count
    model, and spends one simulation to evaluate the new point.
    """
    config = config or MethodConfig()
    run = _Run("M1", scenario, seed_kind, config, simulator, x0, min_budget=2)
    cfg, obj = run.cfg, run.objective
    x = run.x0
    try:
        value = run.true_eval(x)
    except BudgetExhausted:
        return run.finish("budget")
    run.accept(0, x, value, 0.0)
    tau = 0
    reason = "budget"
    while True:
        if value.F == 0:
            reason = "zero objective"
            break
        try:
            at_x = value if tau == 0 else run.true_eval(x)
        except BudgetExhausted:
            break
        g1 = grad_f1(x, cfg.seed) if cfg.seed is not None and cfg.omega1 > 0 else np.zeros_like(x)
        g2 = grad_f2_am(at_x.counts, cfg.observed_counts, at_x.result.assignment)
        d = run.direction(x, descent_direction_am(g1, g2, cfg.omega1, cfg.omega2))
        if not np.any(d):
            reason = "zero direction"
            break
        linear = LinearCountModel(at_x.result.assignment)
        ell = determine_max_step_rate(x, cfg.bounds, d, cfg.productions, cfg.owner, config.ell_delta, config.eps1)
        # all samples, including alpha = 0, come from the same linear model; they
        # are free, so the bracket shrinks while the fit sees no decrease
        f_lin = obj.evaluate(x, linear).F
        for _ in range(config.max_halvings + 1):
            ls = line_search(x, d, lambda xa: obj.evaluate(xa, linear).F, f_lin, cfg.bounds, cfg.productions,
                             cfg.owner, n=config.n_samples, ell=ell)
            if ls.eta > 0 or ell < config.eps1:
                break
            ell /= 2
        # a zero step leaves x unchanged; the iteration still spends its evaluation
        x_new = run.feasible(gradient_step(x, d, ls.eta, cfg.bounds)) if ls.eta > 0 else x
        try:
            value = run.true_eval(x_new)
        except BudgetExhausted:
            break
        tau += 1
        x = x_new
        run.accept(tau, x, value, ls.eta)
    return run.finish(reason)


def run_spsa_method(scenario, seed_kind="None", config: MethodConfig | None = None, *,
                    simulator=None, x0=None) -> EstimationHistory:
    """M2: descent along a simultaneous-perturbation gradient of the count term.

    Per iteration: one simulation at the perturbed point, two for the line
    search samples and one for the new point (skipped when the chosen step
    coincides with a sample, or is zero).
    """
    config = config or MethodConfig()
    run = _Run("M2", scenario, seed_kind, config, simulator, x0, min_budget=4)
    cfg, obj = run.cfg, run.objective
    rng = np.random.default_rng(config.spsa.rng_seed)
    b = config.spsa.b
    x = run.x0
    try:
        value = run.true_eval(x)
    except BudgetExhausted:
        return run.finish("budget")
    run.accept(0, x, value, 0.0)
    tau = 0
    reason = "budget"
    while True:
        if value.F == 0:
            reason = "zero objective"
            break
        delta = draw_perturbation(rng, x.size)
        try:
            g2, _ = spsa_gradient(x, value.f2, lambda xm: obj.evaluate(xm, run.sim).f2, delta, b, cfg.bounds)
        except BudgetExhausted:
            break
        g1 = grad_f1(x, cfg.seed) if cfg.seed is not None and cfg.omega1 > 0 else np.zeros_like(x)
        d = run.direction(x, descent_direction_am(g1, g2, cfg.omega1, cfg.omega2))
        tau += 1
        if not np.any(d):
            run.accept(tau, x, value, 0.0)
            continue
        ell = determine_max_step_rate(x, cfg.bounds, d, cfg.productions, cfg.owner, config.ell_delta, config.eps1)

        def sample(xa):
            v = obj.evaluate(run.feasible(xa), run.sim)
            return v.F, v

        try:
            ls = line_search(x, d, sample, value.F, cfg.bounds, cfg.productions, cfg.owner,
                             n=config.n_samples, ell=ell)
        except BudgetExhausted:
            break
        for alpha, sampled in ls.extra.items():
            if run.best is None or sampled.F < run.best[0].F:
                xa = run.feasible(clip_to_bounds(x + alpha * d, cfg.bounds))
                run.best = (sampled, xa)
        if ls.eta == 0:
            run.accept(tau, x, value, 0.0)
            continue
        x_new = run.feasible(gradient_step(x, d, ls.eta, cfg.bounds))
        if ls.eta in ls.extra:
            value = ls.extra[ls.eta]
        else:
            try:
                value = run.true_eval(x_new)
            except BudgetExhausted:
                break
        x = x_new
        run.accept(tau, x, value, ls.eta)
    return run.finish(reason)


def summary_metrics(history: EstimationHistory, scenario) -> tuple[float, float]:
    """``(RMSE of demand vs ground truth, RMSE of counts vs observed)``."""
    return (rmse(history.x_final, scenario.x_true),
            rmse(history.counts_final, scenario.observed_counts))
