"""Surrogate-based estimation (M3 with a network, M4 with nearest neighbours).

The trained model replaces the simulator inside the objective; its
evaluations are free. One true simulation checks the final estimate.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..history import EstimationHistory, IterationRecord
from ..objective import EvaluationCounter, Objective, ObjectiveConfig, compose, project_feasible
from .basinhopping import basinhopping
from .tuning import FnnSpec, KnnSpec, fnn_architectures

METHOD_NAMES = {"fnn": "M3", "knn": "M4"}


class SurrogateCounts:
    """Counts source backed by a trained model; predictions are clipped at zero."""

    is_true_simulator = False

    def __init__(self, model):
        self.model = model

    def __call__(self, x) -> np.ndarray:
        return np.maximum(self.model.predict(np.asarray(x, dtype=float)), 0.0)

    def batch(self, X) -> np.ndarray:
        return np.maximum(self.model.predict(np.atleast_2d(X)), 0.0)


def surrogate_objective(config: ObjectiveConfig, source: SurrogateCounts):
    """``(F_hat(x), F_hat over rows)`` for the surrogate counts."""
    c_hat = config.observed_counts
    ref2 = float(np.linalg.norm(c_hat))
    seed = config.seed
    ref1 = float(np.linalg.norm(seed)) if seed is not None else 1.0

    def single(x):
        return compose(config, x, source(x))[2]

    def batch(X):
        X = np.atleast_2d(X)
        C = source.batch(X)
        t2 = np.linalg.norm(C - c_hat, axis=1) / ref2 if ref2 > 0 else np.where(np.any(C, axis=1), np.inf, 0.0)
        t1 = np.linalg.norm(X - seed, axis=1) / ref1 if seed is not None else 0.0
        return config.omega1 * t1 + config.omega2 * t2

    return single, batch


def default_spec(kind: str, n_in: int, n_samples: int):
    """The reference specs: FNN widths (0.75, 0.5, 0.5) x input with lam = 0.01; kNN with k = 43."""
    if kind == "fnn":
        return FnnSpec(fnn_architectures(n_in)[0], 0.01)
    if kind == "knn":
        return KnnSpec(min(43, n_samples))
    raise ValueError(f"unknown model kind {kind!r}; expected 'fnn' or 'knn'")


@dataclass(frozen=True)
class MlConfig:
    budget: int = 201
    niter: int = 10
    stepsize: float = 0.1
    temperature: float = 1.0
    rng_seed: int = 0
    maxiter: int = 100
    fd_step: float = 1e-4


def run_ml_method(scenario, kind, dataset, seed_kind="None", spec=None, config: MlConfig | None = None, *,
                  simulator=None, x0=None, model=None) -> EstimationHistory:
    """Train (unless ``model`` is given), optimise the surrogate objective, verify once."""
    config = config or MlConfig()
    if kind not in METHOD_NAMES:
        raise ValueError(f"unknown model kind {kind!r}; expected 'fnn' or 'knn'")
    if dataset is None or len(dataset) == 0:
        raise ValueError(f"{METHOD_NAMES[kind]} requires a dataset")
    if dataset.simulations + 1 > config.budget:
        raise ValueError(f"dataset used {dataset.simulations} simulations; budget {config.budget} "
                         "leaves none for the final evaluation")
    t0 = time.perf_counter()
    cfg = ObjectiveConfig.for_scenario(scenario, seed_kind)
    spec = spec or default_spec(kind, dataset.X.shape[1], len(dataset))
    model = model or spec.fit(dataset.X, dataset.Y)
    single, batch = surrogate_objective(cfg, SurrogateCounts(model))
    start = np.ones(scenario.dim) if x0 is None else np.asarray(x0, dtype=float)
    result = basinhopping(single, start, cfg.bounds, cfg.productions, cfg.owner, niter=config.niter,
                          stepsize=config.stepsize, temperature=config.temperature,
                          rng=np.random.default_rng(config.rng_seed), fun_batch=batch,
                          maxiter=config.maxiter, h=config.fd_step)
    hist = EstimationHistory(METHOD_NAMES[kind], str(getattr(seed_kind, "value", seed_kind)))
    hist.meta = {"spec": spec.to_dict(), "surrogate_evaluations": result.nfev}
    counted = dataset.simulations
    for hop, x, fx, _, _ in result.trace:
        t1, t2, _ = compose(cfg, x, SurrogateCounts(model)(x))
        hist.add(IterationRecord(hop, fx, t1, t2, np.nan, counted, time.perf_counter() - t0, true_eval=False))
    objective = Objective(cfg, EvaluationCounter(config.budget, start=counted))
    x_final = project_feasible(result.x, cfg.bounds, cfg.productions, cfg.owner)
    value = objective.evaluate(x_final, simulator or scenario.simulator())
    hist.add(IterationRecord(len(result.trace), value.F, value.f1, value.f2, np.nan, objective.evaluations,
                             time.perf_counter() - t0))
    hist.x_final, hist.counts_final = x_final, value.counts
    hist.F_final, hist.f1_final, hist.f2_final = value.F, value.f1, value.f2
    hist.of_evaluations = objective.evaluations
    hist.running_time_s = time.perf_counter() - t0
    hist.stop_reason = "final evaluation"
    return hist
