"""Traffic network, time grid and synthetic benchmark generation.

Demand and count vectors are flattened row-major: the entry for OD pair ``w``
and interval ``s`` lives at ``w * n_intervals + s`` (sensor ``q`` and interval
``r`` likewise at ``q * n_intervals + r``). All indices are zero-based.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class InvalidDimensionError(ValueError):
    pass


class InvalidRangeError(ValueError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    """Analysis period ``[0, t_end)`` split into ``n_intervals`` equal parts."""

    t_end: float
    n_intervals: int

    def __post_init__(self):
        if self.n_intervals < 1:
            raise InvalidDimensionError("a time grid needs at least one interval")
        if not self.t_end > 0:
            raise InvalidRangeError("t_end must be positive")

    @property
    def interval_duration(self) -> float:
        return self.t_end / self.n_intervals

    def interval_start(self, s: int) -> float:
        return s * self.interval_duration

    def interval_of(self, t):
        """Interval index of time ``t``; times at or after ``t_end`` map to the last interval."""
        idx = np.floor_divide(np.asarray(t, dtype=float), self.interval_duration).astype(int)
        idx = np.clip(idx, 0, self.n_intervals - 1)
        return int(idx) if idx.ndim == 0 else idx


@dataclass(frozen=True)
class Node:
    id: int
    x: float
    y: float


@dataclass(frozen=True)
class Arc:
    id: int
    from_node: int
    to_node: int
    length: float  # meters
    lanes: int = 1
    speed_kmh: float = 50.0

    def __post_init__(self):
        if not self.length > 0:
            raise InvalidRangeError(f"arc {self.id}: length must be positive")
        if not self.speed_kmh > 0:
            raise InvalidRangeError(f"arc {self.id}: free-flow speed must be positive")
        if self.lanes < 1:
            raise InvalidRangeError(f"arc {self.id}: needs at least one lane")

    @property
    def free_flow_time(self) -> float:
        return self.length / (self.speed_kmh / 3.6)


@dataclass
class Network:
    nodes: list[Node]
    arcs: list[Arc]
    origins: list[int]
    destinations: list[int]
    sensors: list[int]

    def __post_init__(self):
        node_ids = {n.id for n in self.nodes}
        if not set(self.origins) <= node_ids or not set(self.destinations) <= node_ids:
            raise ValueError("origins and destinations must be network nodes")
        if not set(self.sensors) <= {a.id for a in self.arcs}:
            raise ValueError("sensors must be network arcs")
        for k, arc in enumerate(self.arcs):
            if arc.id != k:
                raise ValueError("arc ids must be consecutive and start at 0")

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)

    def free_flow_times(self) -> np.ndarray:
        return np.array([a.free_flow_time for a in self.arcs])

    def out_arcs(self) -> dict[int, list[int]]:
        out = {n.id: [] for n in self.nodes}
        for arc in self.arcs:
            out[arc.from_node].append(arc.id)
        return out

    def reachable_from(self, node: int) -> set[int]:
        out = self.out_arcs()
        seen, stack = {node}, [node]
        while stack:
            u = stack.pop()
            for a in out[u]:
                v = self.arcs[a].to_node
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return seen

    def is_strongly_connected_over(self, nodes) -> bool:
        nodes = set(nodes)
        return all(nodes <= self.reachable_from(n) for n in nodes)


@dataclass(frozen=True)
class OdSet:
    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if len(set(self.pairs)) != len(self.pairs):
            raise ValueError("OD pairs must be unique")
        if any(i == j for i, j in self.pairs):
            raise ValueError("an OD pair cannot start and end at the same node")

    @property
    def m(self) -> int:
        return len(self.pairs)

    @property
    def origins(self) -> list[int]:
        """Origins in order of first appearance."""
        return list(dict.fromkeys(i for i, _ in self.pairs))

    def origin_of_entries(self, n_intervals: int) -> np.ndarray:
        """For each flattened demand entry, the position of its origin in :attr:`origins`."""
        pos = {o: k for k, o in enumerate(self.origins)}
        return np.repeat([pos[i] for i, _ in self.pairs], n_intervals)


class SeedKind(str, Enum):
    NONE = "None"
    LD = "LD"
    HD = "HD"

    @classmethod
    def parse(cls, value) -> "SeedKind":
        if isinstance(value, cls):
            return value
        if value is None:
            return cls.NONE
        for kind in cls:
            if str(value).lower() == kind.value.lower():
                return kind
        raise ValueError(f"unknown seed kind {value!r}")


# lower, upper factor of the multiplicative seed noise x_true * (lo + 0.3 u)
_SEED_FACTORS = {SeedKind.LD: 0.7, SeedKind.HD: 0.9}


@dataclass(frozen=True)
class Bounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        if self.lower.shape != self.upper.shape:
            raise ValueError("bound vectors differ in shape")
        if np.any(self.lower < 0) or np.any(self.lower > self.upper):
            raise ValueError("bounds must satisfy 0 <= lower <= upper")


@dataclass(frozen=True)
class TripProductions:
    """Maximum outbound trips per origin, ordered like ``OdSet.origins``."""

    origins: tuple[int, ...]
    values: np.ndarray = field(repr=False)

    def as_dict(self) -> dict[int, float]:
        return {o: float(v) for o, v in zip(self.origins, self.values)}


def build_irregular_grid(rows, cols, base_length=1250.0, speed=50.0, jitter_max=1250.0,
                         rng_seed=0, lanes=1):
    """Perturbed rows x cols lattice with two opposing arcs per adjacency.

    Perimeter nodes become both origins and destinations; every arc carries
    a sensor.
    """
    if rows < 2 or cols < 2:
        raise InvalidDimensionError(f"grid needs rows, cols >= 2 (got {rows}x{cols})")
    rng = np.random.default_rng(rng_seed)
    jitter = rng.uniform(0.0, jitter_max, size=(rows * cols, 2)) if jitter_max > 0 else np.zeros((rows * cols, 2))
    nodes = []
    for r in range(rows):
        for c in range(cols):
            k = r * cols + c
            nodes.append(Node(k, c * base_length + float(jitter[k, 0]), r * base_length + float(jitter[k, 1])))

    arcs = []
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            for v in ((u + 1) if c + 1 < cols else None, (u + cols) if r + 1 < rows else None):
                if v is None:
                    continue
                length = float(np.hypot(nodes[u].x - nodes[v].x, nodes[u].y - nodes[v].y))
                arcs.append(Arc(len(arcs), u, v, length, lanes, speed))
                arcs.append(Arc(len(arcs), v, u, length, lanes, speed))

    perimeter = [r * cols + c for r in range(rows) for c in range(cols)
                 if r in (0, rows - 1) or c in (0, cols - 1)]
    return Network(nodes, arcs, list(perimeter), list(perimeter), [a.id for a in arcs])


def enumerate_od_pairs(network: Network) -> OdSet:
    return OdSet(tuple((i, j) for i in network.origins for j in network.destinations if i != j))


def sample_ground_truth(od: OdSet, grid: TimeGrid, a: float, b: float, rng_seed) -> np.ndarray:
    if a > b:
        raise InvalidRangeError(f"need a <= b (got a={a}, b={b})")
    if a < 0:
        raise InvalidRangeError("demand cannot be negative")
    rng = np.random.default_rng(rng_seed)
    return rng.uniform(a, b, size=od.m * grid.n_intervals)


def derive_bounds(x_true) -> Bounds:
    x_true = np.asarray(x_true, dtype=float)
    if x_true.size == 0:
        raise ValueError("ground truth is empty")
    top = 1.5 * float(x_true.max())
    if top == 0:
        warnings.warn("ground truth is all zeros; upper bounds collapse to zero", stacklevel=2)
    return Bounds(np.zeros_like(x_true), np.full_like(x_true, top))


def derive_trip_productions(x_true, od: OdSet) -> TripProductions:
    x_true = np.asarray(x_true, dtype=float)
    n_intervals = x_true.size // od.m if od.m else 0
    owner = od.origin_of_entries(n_intervals)
    origins = od.origins
    totals = np.bincount(owner, weights=x_true, minlength=len(origins)) if origins else np.zeros(0)
    return TripProductions(tuple(origins), totals)


def make_seed_demand(x_true, kind, rng_seed):
    """Prior demand: ``None`` for no seed, else ``x_true * (base + 0.3 u)`` with u ~ U(0, 1)."""
    kind = SeedKind.parse(kind)
    if kind is SeedKind.NONE:
        return None
    x_true = np.asarray(x_true, dtype=float)
    u = np.random.default_rng(rng_seed).uniform(0.0, 1.0, size=x_true.shape)
    return apply_seed_noise(x_true, kind, u)


def apply_seed_noise(x_true, kind, u):
    """Deterministic part of :func:`make_seed_demand` for given uniforms ``u``."""
    kind = SeedKind.parse(kind)
    if kind is SeedKind.NONE:
        return None
    return np.asarray(x_true, dtype=float) * (_SEED_FACTORS[kind] + 0.3 * np.asarray(u, dtype=float))
