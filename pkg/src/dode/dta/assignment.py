"""Dynamic traffic assignment: the map from a demand vector to sensor counts.

:class:`Simulator` runs an iterative stochastic user equilibrium: trips pick a
path from a small per-(OD pair, departure interval) choice set, the queue model
is simulated, measured arc travel times update the perceived path costs and the
choice probabilities (Gawron's pairwise rule), and the last iteration yields
the counts and the assignment matrix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .paths import PathFinder
from .queue import SATURATION_FLOW, VEHICLE_LENGTH, Trace, arc_parameters, simulate_once


@dataclass(frozen=True)
class SueConfig:
    iterations: int = 15
    paths_per_od: int = 3
    gawron_beta: float = 0.3
    gawron_a: float = 0.05
    rng_seed: int = 0
    saturation_flow: float = SATURATION_FLOW
    vehicle_length: float = VEHICLE_LENGTH
    grace_period: float = 3600.0
    path_penalty: float = 1.5

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("SUE needs at least one iteration")
        if self.paths_per_od < 1:
            raise ValueError("paths_per_od must be >= 1")
        if not 0 < self.gawron_beta <= 1:
            raise ValueError("gawron_beta must lie in (0, 1]")


@dataclass(frozen=True)
class TripPlan:
    od_index: int
    interval: int
    departure: float
    path: tuple = ()


@dataclass
class AssignmentMatrix:
    """Sparse proportions ``p[q, r, w, s]`` stored as COO triples.

    Rows index ``q * n_S + r`` (sensor, count interval), columns index
    ``w * n_S + s`` (OD pair, departure interval). ``hits`` is the integer number
    of vehicles behind each entry and ``trips`` the rounded demand of its column,
    so ``values = hits / trips``.
    """

    shape: tuple
    rows: np.ndarray
    cols: np.ndarray
    hits: np.ndarray
    trips: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.hits / self.trips

    @property
    def nnz(self) -> int:
        return len(self.rows)

    def matrix(self) -> sparse.csr_matrix:
        return sparse.csr_matrix((self.values, (self.rows, self.cols)), shape=self.shape)

    def apply(self, x) -> np.ndarray:
        """Linear count model ``c = P x``."""
        return self.matrix() @ np.asarray(x, dtype=float)

    def entries(self, n_intervals):
        """Yield ``(q, r, w, s, p)`` tuples (sensor position, not arc id)."""
        for row, col, p in zip(self.rows, self.cols, self.values):
            yield (int(row // n_intervals), int(row % n_intervals),
                   int(col // n_intervals), int(col % n_intervals), float(p))


@dataclass
class TripStats:
    length: np.ndarray  # m
    duration: np.ndarray  # s
    delay: np.ndarray  # s
    flushed: np.ndarray  # bool


@dataclass
class DtaResult:
    counts: np.ndarray
    assignment: AssignmentMatrix
    arc_travel_times: np.ndarray
    trip_stats: TripStats
    x_int: np.ndarray
    trace: Trace = field(repr=False)
    plans: list = field(repr=False)
    sue_log: list = field(default_factory=list)


def round_demand(x) -> np.ndarray:
    """Round half up to the nearest integer."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("demand must be nonnegative")
    return np.floor(x + 0.5).astype(np.int64)


def spawn_trips(x_int, grid, n_intervals=None) -> list[TripPlan]:
    """Stratified departures: trip j of n in interval s leaves at start + (j - 0.5) / n * duration."""
    x_int = np.asarray(x_int, dtype=np.int64)
    n_s = grid.n_intervals
    dur = grid.interval_duration
    plans = []
    for col in np.flatnonzero(x_int):
        w, s = divmod(int(col), n_s)
        n = int(x_int[col])
        start = s * dur
        plans.extend(TripPlan(w, s, start + (j - 0.5) / n * dur) for j in range(1, n + 1))
    return plans


def count_from_trace(trace: Trace, sensors, grid) -> np.ndarray:
    """Vehicles entering each sensor arc per interval, flattened ``q * n_S + r``."""
    n_s = grid.n_intervals
    position = {arc: q for q, arc in enumerate(sensors)}
    counts = np.zeros(len(sensors) * n_s, dtype=np.int64)
    if len(trace) == 0:
        return counts
    q = np.array([position.get(int(a), -1) for a in trace.arc])
    keep = q >= 0
    r = grid.interval_of(trace.entry_time[keep])
    np.add.at(counts, q[keep] * n_s + r, 1)
    return counts


def extract_assignment_matrix(trace: Trace, plans, x_int, sensors, grid) -> AssignmentMatrix:
    """Proportion of each demand cell's rounded trips crossing sensor q in interval r."""
    n_s = grid.n_intervals
    x_int = np.asarray(x_int, dtype=np.int64)
    shape = (len(sensors) * n_s, x_int.size)
    if len(trace) == 0:
        z = np.zeros(0, dtype=np.int64)
        return AssignmentMatrix(shape, z, z, z, z)
    position = {arc: q for q, arc in enumerate(sensors)}
    q = np.array([position.get(int(a), -1) for a in trace.arc])
    keep = q >= 0
    veh = trace.vehicle[keep]
    rows = q[keep] * n_s + grid.interval_of(trace.entry_time[keep])
    plan_col = np.array([p.od_index * n_s + p.interval for p in plans], dtype=np.int64)
    cols = plan_col[veh]
    key = rows * shape[1] + cols
    uniq, hits = np.unique(key, return_counts=True)
    rows_u, cols_u = np.divmod(uniq, shape[1])
    return AssignmentMatrix(shape, rows_u, cols_u, hits.astype(np.int64), x_int[cols_u])


def _gawron_g(a, x):
    denom = 1.0 - x * x
    if denom == 0:
        return math.inf
    return math.exp(a * x / denom)


def gawron_update(perceived, measured, probabilities, beta=0.3, a=0.05):
    """Smooth perceived path costs and update choice probabilities pairwise.

    Costs: ``beta * measured + (1 - beta) * perceived``. For every pair (r, s)
    the odds ``p_r / p_s`` are multiplied by ``exp(a x / (1 - x^2))`` with
    ``x = (c_s - c_r) / (c_s + c_r)``. A pair where the cheaper path has zero
    probability cannot move under that rule, so there a share
    ``a * |x| * (p_r + p_s)`` is transferred to the cheaper path instead.

    Returns ``(new_costs, new_probabilities)``.
    """
    perceived = np.asarray(perceived, dtype=float)
    measured = np.asarray(measured, dtype=float)
    probs = np.array(probabilities, dtype=float)
    if probs.size == 0:
        raise ValueError("empty path set")
    costs = beta * measured + (1.0 - beta) * perceived
    n = len(probs)
    for i in range(n - 1):
        for j in range(i + 1, n):
            pr, ps = probs[i], probs[j]
            total = pr + ps
            if total <= 0:
                continue
            cr, cs = costs[i], costs[j]
            x = (cs - cr) / (cs + cr) if cs + cr > 0 else 0.0
            if x == 0:
                continue
            if ps == 0 and x < 0:
                moved = min(a * -x * total, pr)
                new_r = pr - moved
            elif pr == 0 and x > 0:
                new_r = min(a * x * total, total)
            else:
                g = _gawron_g(a, x)
                if math.isinf(g):
                    new_r = total if cs > cr else 0.0
                else:
                    new_r = pr * total * g / (pr * g + ps)
            new_r = min(max(new_r, 0.0), total)
            probs[i] = new_r
            probs[j] = min(max(total - new_r, 0.0), 1.0)
    s = probs.sum()
    if s > 0:
        probs /= s
    return costs, probs


class _ChoiceSet:
    __slots__ = ("paths", "costs", "probs")

    def __init__(self, paths, costs, probs):
        self.paths = list(paths)
        self.costs = np.asarray(costs, dtype=float)
        self.probs = np.asarray(probs, dtype=float)


class Simulator:
    """The DTA map from demand to counts for one network and time grid.

    Free-flow path alternatives are computed once and cached; everything else
    is recomputed per :meth:`assign` call, so distinct calls are independent.
    """

    is_true_simulator = True

    def __init__(self, network, grid, od, config: SueConfig | None = None):
        self.network = network
        self.grid = grid
        self.od = od
        self.config = config or SueConfig()
        self.finder = PathFinder(network, grid.interval_duration, grid.n_intervals)
        self.params = arc_parameters(network, self.config.saturation_flow, self.config.vehicle_length)
        self.fft = np.array(self.params[0])
        self.arc_length = np.array([a.length for a in network.arcs])
        self._free_flow_sets = None

    # -- path alternatives --------------------------------------------------
    def free_flow_alternatives(self):
        """``k`` diversified free-flow paths per OD pair (cached)."""
        if self._free_flow_sets is None:
            times = np.repeat(self.fft[:, None], self.grid.n_intervals, axis=1).tolist()
            self._free_flow_sets = [
                self.finder.k_paths(i, j, 0.0, times, k=self.config.paths_per_od,
                                    penalty=self.config.path_penalty)
                for i, j in self.od.pairs
            ]
        return self._free_flow_sets

    def _midpoint(self, s):
        return (s + 0.5) * self.grid.interval_duration

    def _new_best_paths(self, keys, arc_times):
        """Current least-cost path for every (w, s) key, one tree per (origin, s)."""
        by_origin = {}
        for w, s in keys:
            i, j = self.od.pairs[w]
            by_origin.setdefault((i, s), []).append((w, j))
        best = {}
        for (i, s), targets in by_origin.items():
            paths = self.finder.least_cost_paths_from(i, [j for _, j in targets], self._midpoint(s), arc_times)
            for w, j in targets:
                best[w, s] = paths[j]
        return best

    # -- measurement ----------------------------------------------------------
    def measure_arc_times(self, trace: Trace) -> np.ndarray:
        """Mean traversal time per arc and entry interval; free-flow where unobserved."""
        n_arcs, n_s = len(self.fft), self.grid.n_intervals
        times = np.repeat(self.fft[:, None], n_s, axis=1)
        if len(trace) == 0:
            return times
        done = ~np.isnan(trace.exit_time)
        cell = trace.arc[done] * n_s + self.grid.interval_of(trace.entry_time[done])
        total = np.bincount(cell, weights=trace.exit_time[done] - trace.entry_time[done],
                            minlength=n_arcs * n_s)
        count = np.bincount(cell, minlength=n_arcs * n_s)
        seen = count > 0
        flat = times.reshape(-1)
        flat[seen] = total[seen] / count[seen]
        return flat.reshape(n_arcs, n_s)

    def trip_stats(self, trace: Trace, paths) -> TripStats:
        length = np.array([self.arc_length[list(p)].sum() for p in paths])
        free = np.array([self.fft[list(p)].sum() for p in paths])
        duration = trace.arrival - trace.departure
        return TripStats(length, duration, duration - free, trace.flushed.copy())

    # -- the map ----------------------------------------------------------------
    def assign(self, x) -> DtaResult:
        cfg = self.config
        grid = self.grid
        x_int = round_demand(x)
        if x_int.size != self.od.m * grid.n_intervals:
            raise ValueError(f"demand vector has {x_int.size} entries, expected {self.od.m * grid.n_intervals}")
        plans = spawn_trips(x_int, grid)
        rng = np.random.default_rng(cfg.rng_seed)
        stop_time = grid.t_end + cfg.grace_period

        # trips grouped by choice key, in departure order
        members = {}
        for k, plan in enumerate(plans):
            members.setdefault((plan.od_index, plan.interval), []).append(k)
        keys = list(members)

        alternatives = self.free_flow_alternatives()
        choice = {}
        for w, s in keys:
            alts = alternatives[w]
            probs = np.zeros(len(alts))
            probs[0] = 1.0
            choice[w, s] = _ChoiceSet([p for _, p in alts], [c for c, _ in alts], probs)

        departures = [p.departure for p in plans]
        arc_times = None
        trace = None
        sue_log = []
        chosen = [()] * len(plans)
        for it in range(cfg.iterations):
            if it > 0:
                sue_log.append(self._update_choices(choice, keys, arc_times))
            for key in keys:
                cs = choice[key]
                idx = members[key]
                offset = rng.random()
                cum = np.cumsum(cs.probs)
                cum[-1] = 1.0
                picks = np.searchsorted(cum, (np.arange(len(idx)) + offset) / len(idx), side="right")
                for k, pick in zip(idx, picks):
                    chosen[k] = cs.paths[min(pick, len(cs.paths) - 1)]
            trace = simulate_once(self.network, departures, chosen, stop_time=stop_time, params=self.params)
            arc_times = self.measure_arc_times(trace)

        final_plans = [TripPlan(p.od_index, p.interval, p.departure, path) for p, path in zip(plans, chosen)]
        if trace is None or not plans:
            trace = Trace.empty()
        counts = count_from_trace(trace, self.network.sensors, grid)
        am = extract_assignment_matrix(trace, final_plans, x_int, self.network.sensors, grid)
        stats = self.trip_stats(trace, chosen) if plans else TripStats(*(np.zeros(0),) * 3, np.zeros(0, bool))
        return DtaResult(counts, am, arc_times if arc_times is not None else
                         np.repeat(self.fft[:, None], grid.n_intervals, axis=1),
                         stats, x_int, trace, final_plans, sue_log)

    def _update_choices(self, choice, keys, arc_times):
        """One Gawron step for every choice set; returns the relative change of the mean perceived cost."""
        cfg = self.config
        if not keys:
            return 0.0
        times = arc_times.tolist()
        before = np.mean([cs.costs @ cs.probs for cs in choice.values()])
        best = self._new_best_paths(keys, times)
        for key in keys:
            cs = choice[key]
            dep = self._midpoint(key[1])
            measured = np.array([self.finder.path_cost(p, dep, times) for p in cs.paths])
            cs.costs, cs.probs = gawron_update(cs.costs, measured, cs.probs, cfg.gawron_beta, cfg.gawron_a)
            path = best[key]
            if path not in cs.paths:
                # a newly found route enters with share 1/n, the rest is rescaled
                n = len(cs.paths) + 1
                cs.paths.append(path)
                cs.costs = np.append(cs.costs, self.finder.path_cost(path, dep, times))
                cs.probs = np.append(cs.probs * (n - 1) / n, 1.0 / n)
                if n > cfg.paths_per_od:
                    drop = int(np.argmin(cs.probs[:-1]))
                    del cs.paths[drop]
                    cs.costs = np.delete(cs.costs, drop)
                    cs.probs = np.delete(cs.probs, drop)
                    cs.probs /= cs.probs.sum()
        after = np.mean([cs.costs @ cs.probs for cs in choice.values()])
        return abs(after - before) / before if before > 0 else 0.0

    def __call__(self, x) -> np.ndarray:
        return self.assign(x).counts


def assign(network, grid, od, x, config: SueConfig | None = None) -> DtaResult:
    """Convenience wrapper: one-off :class:`Simulator` run."""
    return Simulator(network, grid, od, config).assign(x)
