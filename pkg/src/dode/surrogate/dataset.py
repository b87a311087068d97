"""Simulation datasets for surrogate training, persisted as CSV pairs plus a manifest."""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..objective import EvaluationCounter, project_feasible
from .sobol import sobol_points

INPUTS_FILE = "inputs.csv"
TARGETS_FILE = "targets.csv"
MANIFEST_FILE = "manifest.json"


def scenario_digest(scenario) -> str:
    return hashlib.sha256(scenario.to_json().encode()).hexdigest()


@dataclass
class Dataset:
    X: np.ndarray  # (n, m * n_S) demand inputs
    Y: np.ndarray  # (n, n_Q * n_S) simulated counts
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.X) != len(self.Y):
            raise ValueError("inputs and targets differ in length")

    def __len__(self):
        return len(self.X)

    @property
    def simulations(self) -> int:
        """True simulator runs spent building the set (failed attempts included)."""
        return int(self.manifest.get("simulations", len(self)))

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        _write_matrix(directory / INPUTS_FILE, self.X, "x")
        _write_matrix(directory / TARGETS_FILE, self.Y, "c")
        (directory / MANIFEST_FILE).write_text(json.dumps(self.manifest, indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory) -> "Dataset":
        directory = Path(directory)
        manifest_path = directory / MANIFEST_FILE
        if not manifest_path.exists():
            raise FileNotFoundError(f"no dataset manifest in {directory}")
        manifest = json.loads(manifest_path.read_text())
        return cls(_read_matrix(directory / INPUTS_FILE), _read_matrix(directory / TARGETS_FILE), manifest)


def _write_matrix(path, A, prefix) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"{prefix}{j}" for j in range(A.shape[1])])
        writer.writerows([[repr(float(v)) for v in row] for row in A])


def _read_matrix(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array(rows[1:], dtype=float).reshape(len(rows) - 1, len(rows[0]))


def build_dataset(scenario, n: int = 200, simulator=None, counter: EvaluationCounter | None = None,
                  skip_zero: bool = True, max_failures: int = 20) -> Dataset:
    """Simulate ``n`` Sobol points spread over the feasible demand box.

    A point whose simulation raises is recorded in the manifest and replaced by
    the next point of the sequence.
    """
    if n < 1:
        raise ValueError("dataset size must be >= 1")
    sim = simulator or scenario.simulator()
    counter = counter or EvaluationCounter()
    lo, hi = scenario.bounds.lower, scenario.bounds.upper
    owner = scenario.origin_incidence()
    unit = sobol_points(scenario.dim, n + max_failures, skip_zero)
    X, Y, failures = [], [], []
    for i, u in enumerate(unit):
        if len(X) == n:
            break
        x = project_feasible(lo + u * (hi - lo), scenario.bounds, scenario.productions, owner)
        counter.acquire()
        try:
            y = sim(x)
        except Exception as exc:  # noqa: BLE001 - any simulator failure is recorded and skipped
            failures.append({"sobol_index": i, "error": f"{type(exc).__name__}: {exc}"})
            continue
        X.append(x)
        Y.append(np.asarray(y, dtype=float))
    if len(X) < n:
        raise RuntimeError(f"only {len(X)} of {n} dataset points could be simulated")
    manifest = {
        "format": "dode-dataset/1",
        "n": n,
        "simulations": n + len(failures),
        "failures": failures,
        "sampler": {"kind": "sobol", "scramble": False, "skip_zero": skip_zero},
        "scenario_sha256": scenario_digest(scenario),
        "sue_config": asdict(getattr(sim, "config", scenario.sue)),
    }
    return Dataset(np.array(X), np.array(Y), manifest)
