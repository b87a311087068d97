"""Step-rate selection along a descent direction.

The admissible step is capped by the largest rate that keeps the clipped
point generation-feasible; inside ``[0, ell]`` a quadratic is fitted through
the known value at ``alpha = 0`` and ``n`` equally spaced samples.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .objective import clip_to_bounds, outbound_totals


_NEGLIGIBLE = 1e-12


class ZeroDirectionError(ValueError):
    pass


class DegenerateFitError(ValueError):
    pass


def determine_max_step_rate(x, bounds, d, productions, owner, ell_delta=1e8, eps1=1e-8) -> float:
    """Largest step rate along ``d`` whose clipped point respects the productions.

    Advances ``ell`` in constant increments and, on a violation or when every
    moving coordinate sits on a bound, steps back and halves the increment
    until it drops below ``eps1``.
    """
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    # round-off sized entries would take ~1/|d_k| constant advances to bind
    d = np.where(np.abs(d) > _NEGLIGIBLE * np.max(np.abs(d), initial=0.0), d, 0.0)
    moving = d != 0
    if not np.any(moving):
        raise ZeroDirectionError("descent direction is zero")
    o = np.asarray(productions.values, dtype=float)
    lo, hi = bounds.lower[moving], bounds.upper[moving]
    ell = 0.0
    while True:
        ell += ell_delta
        xb = clip_to_bounds(x + ell * d, bounds)
        violated = np.any(outbound_totals(xb, owner, len(o)) > o)
        binding = np.all((xb[moving] == lo) | (xb[moving] == hi))
        if violated or binding:
            ell -= ell_delta
            ell_delta /= 2
            if ell_delta < eps1:
                break
    return ell


def fit_quadratic(samples) -> tuple[float, float, float]:
    """Least-squares ``(beta0, beta1, beta2)`` of ``y ~ b0 + b1 a + b2 a^2``."""
    alpha = np.array([a for a, _ in samples], dtype=float)
    y = np.array([v for _, v in samples], dtype=float)
    if len(np.unique(alpha)) < 3:
        raise DegenerateFitError("need at least 3 distinct step rates for a quadratic fit")
    # fit in alpha / scale so tiny or huge step rates stay well conditioned
    scale = float(np.max(np.abs(alpha)))
    vander = np.vander(alpha / scale, 3, increasing=True)
    if len(alpha) == 3:
        gamma = np.linalg.solve(vander, y)  # interpolation
    else:
        gamma, _, rank, _ = np.linalg.lstsq(vander, y, rcond=None)
        if rank < 3:
            raise DegenerateFitError("sample matrix is rank deficient")
    return float(gamma[0]), float(gamma[1] / scale), float(gamma[2] / scale**2)


def choose_step(betas, samples, ell=np.inf) -> float:
    """Vertex of the fitted parabola if convex, else the best sampled rate; clamped to ``[0, ell]``."""
    _, b1, b2 = betas
    if b2 > 0:
        eta = -b1 / (2 * b2)
    else:
        eta = min(samples, key=lambda s: s[1])[0]
    return float(min(max(eta, 0.0), ell))


@dataclass
class LineSearchResult:
    ell: float
    samples: list = field(default_factory=list)
    beta0: float = np.nan
    beta1: float = np.nan
    beta2: float = np.nan
    eta: float = 0.0
    extra: dict = field(default_factory=dict)  # evaluator payloads keyed by alpha


def line_search(x, d, evaluator, f_at_x, bounds, productions, owner, n=2, ell=None) -> LineSearchResult:
    """Sample ``y(alpha)`` at ``ell/n, 2 ell/n, ..., ell``, fit and choose ``eta``.

    Parameters
    ----------
    evaluator : callable
        Maps a clipped trial point to ``F`` or to ``(F, payload)``; payloads are
        kept in ``result.extra`` so callers can reuse expensive evaluations.
    f_at_x : float
        Known objective at ``alpha = 0``.
    ell : float, optional
        Precomputed maximum step rate.
    """
    if n < 2:
        raise ValueError("need n >= 2 sample points")
    if ell is None:
        ell = determine_max_step_rate(x, bounds, d, productions, owner)
    result = LineSearchResult(ell=ell, samples=[(0.0, float(f_at_x))])
    if ell <= 0:
        return result
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    for k in range(1, n + 1):
        alpha = ell * k / n
        out = evaluator(clip_to_bounds(x + alpha * d, bounds))
        if isinstance(out, tuple):
            out, payload = out
            result.extra[alpha] = payload
        result.samples.append((alpha, float(out)))
    result.beta0, result.beta1, result.beta2 = fit_quadratic(result.samples)
    result.eta = choose_step((result.beta0, result.beta1, result.beta2), result.samples, ell)
    return result
