"""Benchmark scenario assembly and its JSON document.

Schema (``format: "dode-scenario/1"``)::

    params          generation parameters, including the master rng_seed
    rng_seeds       derived seeds: network, ground_truth, seed_LD, seed_HD, sue
    time_grid       {t_end_s, n_intervals, interval_duration_s}
    nodes[]         {id, x_m, y_m}
    arcs[]          {id, from, to, length_m, lanes, speed_kmh, sensor}
    origins[], destinations[], sensors[]   (sensors: arc ids, in count order)
    od_pairs[]      [origin, destination], in demand-vector order
    index_legend    {demand: "w * n_intervals + s", counts: "q * n_intervals + r"}
    sue_config      simulator settings used for observed_counts
    x_true, x_lower, x_upper, seed_LD, seed_HD     flat demand vectors
    productions     {origin id: max outbound trips}
    observed_counts flat count vector (omitted until simulated)
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dta import Simulator, SueConfig
from .network import (
    Arc,
    Bounds,
    Network,
    Node,
    OdSet,
    SeedKind,
    TimeGrid,
    TripProductions,
    build_irregular_grid,
    derive_bounds,
    derive_trip_productions,
    enumerate_od_pairs,
    make_seed_demand,
    sample_ground_truth,
)

FORMAT = "dode-scenario/1"


@dataclass(frozen=True)
class ScenarioParams:
    rows: int = 4
    cols: int = 4
    base_length: float = 1250.0
    speed_kmh: float = 50.0
    jitter_max: float = 1250.0
    lanes: int = 1
    t_end: float = 3600.0
    n_intervals: int = 4
    demand_low: float = 1.0
    demand_high: float = 20.0
    rng_seed: int = 0
    origins: tuple | None = None
    destinations: tuple | None = None


def derive_seeds(master: int) -> dict[str, int]:
    names = ("network", "ground_truth", "seed_LD", "seed_HD", "sue")
    children = np.random.SeedSequence(master).spawn(len(names))
    return {name: int(child.generate_state(1)[0]) for name, child in zip(names, children)}


@dataclass
class Scenario:
    network: Network
    grid: TimeGrid
    od: OdSet
    x_true: np.ndarray
    bounds: Bounds
    productions: TripProductions
    seeds: dict  # SeedKind -> vector or None
    sue: SueConfig
    params: ScenarioParams = field(default_factory=ScenarioParams)
    rng_seeds: dict = field(default_factory=dict)
    observed_counts: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.od.m * self.grid.n_intervals

    def seed(self, kind) -> np.ndarray | None:
        return self.seeds.get(SeedKind.parse(kind))

    def simulator(self, config: SueConfig | None = None) -> Simulator:
        return Simulator(self.network, self.grid, self.od, config or self.sue)

    def origin_incidence(self) -> np.ndarray:
        return self.od.origin_of_entries(self.grid.n_intervals)

    # -- serialization ------------------------------------------------------------
    def to_dict(self) -> dict:
        net = self.network
        sensors = set(net.sensors)
        doc = {
            "format": FORMAT,
            "params": {k: (list(v) if isinstance(v, tuple) else v)
                       for k, v in dataclasses.asdict(self.params).items()},
            "rng_seeds": dict(self.rng_seeds),
            "time_grid": {"t_end_s": self.grid.t_end, "n_intervals": self.grid.n_intervals,
                          "interval_duration_s": self.grid.interval_duration},
            "nodes": [{"id": n.id, "x_m": n.x, "y_m": n.y} for n in net.nodes],
            "arcs": [{"id": a.id, "from": a.from_node, "to": a.to_node, "length_m": a.length,
                      "lanes": a.lanes, "speed_kmh": a.speed_kmh, "sensor": a.id in sensors}
                     for a in net.arcs],
            "origins": list(net.origins),
            "destinations": list(net.destinations),
            "sensors": list(net.sensors),
            "od_pairs": [list(p) for p in self.od.pairs],
            "index_legend": {"demand": "w * n_intervals + s", "counts": "q * n_intervals + r",
                             "w": "position in od_pairs", "q": "position in sensors",
                             "s, r": "zero-based interval index"},
            "sue_config": dataclasses.asdict(self.sue),
            "x_true": self.x_true.tolist(),
            "x_lower": self.bounds.lower.tolist(),
            "x_upper": self.bounds.upper.tolist(),
            "productions": {str(o): v for o, v in self.productions.as_dict().items()},
        }
        for kind in (SeedKind.LD, SeedKind.HD):
            vec = self.seeds.get(kind)
            doc[f"seed_{kind.value}"] = None if vec is None else vec.tolist()
        if self.observed_counts is not None:
            doc["observed_counts"] = [int(c) for c in self.observed_counts]
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        if doc.get("format") != FORMAT:
            raise ValueError(f"not a scenario document (format={doc.get('format')!r})")
        nodes = [Node(n["id"], n["x_m"], n["y_m"]) for n in doc["nodes"]]
        arcs = [Arc(a["id"], a["from"], a["to"], a["length_m"], a["lanes"], a["speed_kmh"]) for a in doc["arcs"]]
        network = Network(nodes, arcs, doc["origins"], doc["destinations"], doc["sensors"])
        tg = doc["time_grid"]
        grid = TimeGrid(tg["t_end_s"], tg["n_intervals"])
        od = OdSet(tuple(tuple(p) for p in doc["od_pairs"]))
        prods = {int(k): v for k, v in doc["productions"].items()}
        productions = TripProductions(tuple(od.origins), np.array([prods[o] for o in od.origins], dtype=float))
        seeds = {SeedKind.NONE: None}
        for kind in (SeedKind.LD, SeedKind.HD):
            vec = doc.get(f"seed_{kind.value}")
            seeds[kind] = None if vec is None else np.array(vec, dtype=float)
        params = dict(doc.get("params", {}))
        for key in ("origins", "destinations"):
            if params.get(key) is not None:
                params[key] = tuple(params[key])
        observed = doc.get("observed_counts")
        return cls(
            network=network, grid=grid, od=od,
            x_true=np.array(doc["x_true"], dtype=float),
            bounds=Bounds(np.array(doc["x_lower"], dtype=float), np.array(doc["x_upper"], dtype=float)),
            productions=productions, seeds=seeds, sue=SueConfig(**doc["sue_config"]),
            params=ScenarioParams(**params), rng_seeds=dict(doc.get("rng_seeds", {})),
            observed_counts=None if observed is None else np.array(observed, dtype=np.int64),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_scenario(params: ScenarioParams | None = None, sue: SueConfig | None = None,
                   simulate: bool = True) -> Scenario:
    """Generate network, ground truth, seeds, bounds and productions; optionally simulate the observed counts."""
    params = params or ScenarioParams()
    seeds = derive_seeds(params.rng_seed)
    network = build_irregular_grid(params.rows, params.cols, params.base_length, params.speed_kmh,
                                   params.jitter_max, seeds["network"], lanes=params.lanes)
    if params.origins is not None:
        network.origins = list(params.origins)
    if params.destinations is not None:
        network.destinations = list(params.destinations)
    if not network.is_strongly_connected_over(set(network.origins) | set(network.destinations)):
        raise ValueError("network is not strongly connected over its origins and destinations")
    grid = TimeGrid(params.t_end, params.n_intervals)
    od = enumerate_od_pairs(network)
    x_true = sample_ground_truth(od, grid, params.demand_low, params.demand_high, seeds["ground_truth"])
    sue = sue or SueConfig(rng_seed=seeds["sue"])
    scenario = Scenario(
        network=network, grid=grid, od=od, x_true=x_true,
        bounds=derive_bounds(x_true), productions=derive_trip_productions(x_true, od),
        seeds={SeedKind.NONE: None,
               SeedKind.LD: make_seed_demand(x_true, SeedKind.LD, seeds["seed_LD"]),
               SeedKind.HD: make_seed_demand(x_true, SeedKind.HD, seeds["seed_HD"])},
        sue=sue, params=params, rng_seeds=seeds,
    )
    if simulate:
        scenario.observed_counts = scenario.simulator().assign(x_true).counts
    return scenario
