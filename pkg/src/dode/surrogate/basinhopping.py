"""Basin hopping under box bounds and linear generation caps.

Each hop perturbs the current point uniformly within a fraction of the box
range, repairs it to feasibility, runs a local SLSQP descent, and accepts
the result by the Metropolis rule.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ..objective import project_feasible


@dataclass
class BasinHoppingResult:
    x: np.ndarray
    fun: float
    nit: int
    nfev: int
    trace: list = field(default_factory=list)  # (hop, candidate x, candidate value, accepted, best value)


def origin_matrix(owner, n_origins) -> np.ndarray:
    """0/1 matrix ``A`` with ``(A @ x)[i]`` the outbound total of origin ``i``."""
    A = np.zeros((n_origins, len(owner)))
    A[owner, np.arange(len(owner))] = 1.0
    return A


class _Counted:
    def __init__(self, fun, fun_batch):
        self.fun, self.fun_batch = fun, fun_batch
        self.nfev = 0

    def __call__(self, x):
        self.nfev += 1
        return float(self.fun(x))

    def batch(self, X):
        self.nfev += len(X)
        if self.fun_batch is not None:
            return np.asarray(self.fun_batch(X), dtype=float)
        return np.array([self.fun(x) for x in X])


def forward_difference(f, x, h=1e-4, fx=None):
    """Forward-difference gradient with all shifted points evaluated in one batch."""
    x = np.asarray(x, dtype=float)
    fx = f(x) if fx is None else fx
    shifted = x + h * np.eye(x.size)
    return (f.batch(shifted) - fx) / h


def local_minimize(f, x0, bounds, productions, owner, maxiter=100, h=1e-4):
    """SLSQP from ``x0`` honouring bounds and ``A x <= o``; result repaired to feasibility."""
    o = np.asarray(productions.values, dtype=float)
    A = origin_matrix(owner, len(o))
    res = minimize(f, x0, jac=lambda x: forward_difference(f, x, h), method="SLSQP",
                   bounds=list(zip(bounds.lower, bounds.upper)),
                   constraints=[{"type": "ineq", "fun": lambda x: o - A @ x, "jac": lambda x: -A}],
                   options={"maxiter": maxiter, "ftol": 1e-10})
    x = project_feasible(res.x, bounds, productions, owner)
    fx, f0 = f(x), f(x0)
    return (x, fx) if fx <= f0 else (np.asarray(x0, dtype=float), f0)


def basinhopping(fun, x0, bounds, productions, owner, *, niter=10, stepsize=0.1, temperature=1.0,
                 rng=None, fun_batch=None, maxiter=100, h=1e-4) -> BasinHoppingResult:
    """Global search over the feasible demand polytope.

    Parameters
    ----------
    fun : callable
        Objective of one demand vector.
    fun_batch : callable, optional
        Vectorized objective over rows; speeds up finite differences.
    stepsize : float
        Perturbation half-width as a fraction of ``upper - lower``.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    f = _Counted(fun, fun_batch)
    x0 = project_feasible(x0, bounds, productions, owner)
    x, fx = local_minimize(f, x0, bounds, productions, owner, maxiter, h)
    best_x, best_f = x, fx
    trace = [(0, x, fx, True, best_f)]
    half = stepsize * (bounds.upper - bounds.lower)
    for hop in range(1, niter + 1):
        trial = project_feasible(x + rng.uniform(-half, half), bounds, productions, owner)
        y, fy = local_minimize(f, trial, bounds, productions, owner, maxiter, h)
        accept = fy < fx or rng.random() < np.exp(-(fy - fx) / temperature)
        if accept:
            x, fx = y, fy
        if fy < best_f:
            best_x, best_f = y, fy
        trace.append((hop, y, fy, bool(accept), best_f))
    return BasinHoppingResult(best_x, best_f, niter, f.nfev, trace)
