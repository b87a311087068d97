"""Unscrambled Sobol points and a brute-force star discrepancy."""
from __future__ import annotations

import itertools
import warnings

import numpy as np
from scipy.stats import qmc

# scipy ships the Joe-Kuo direction numbers up to this dimension
MAX_DIM = getattr(qmc.Sobol, "MAXDIM", 21201)


class UnsupportedDimensionError(ValueError):
    pass


def sobol_points(dim: int, n: int, skip_zero: bool = True) -> np.ndarray:
    """First ``n`` points of the ``dim``-dimensional Sobol sequence, shape ``(n, dim)``."""
    if dim < 1 or n < 1:
        raise ValueError("dim and n must be >= 1")
    if dim > MAX_DIM:
        raise UnsupportedDimensionError(f"Sobol direction numbers go up to dimension {MAX_DIM}, got {dim}")
    engine = qmc.Sobol(d=dim, scramble=False)
    with warnings.catch_warnings():
        # balance warnings for non powers of two are irrelevant for prefixes
        warnings.simplefilter("ignore", UserWarning)
        pts = engine.random(n + int(skip_zero))
    return pts[int(skip_zero):]


def star_discrepancy(points) -> float:
    """Exact L-infinity star discrepancy by enumerating the critical box corners.

    Cost is ``O(n^(d+1))``; intended for small two- or three-dimensional sets.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = pts.shape
    axes = [np.unique(np.append(pts[:, j], 1.0)) for j in range(d)]
    worst = 0.0
    for corner in itertools.product(*axes):
        corner = np.array(corner)
        vol = float(np.prod(corner))
        open_frac = np.count_nonzero(np.all(pts < corner, axis=1)) / n
        closed_frac = np.count_nonzero(np.all(pts <= corner, axis=1)) / n
        worst = max(worst, vol - open_frac, closed_frac - vol)
    return worst
