"""Per-run optimisation traces and their CSV export."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HISTORY_COLUMNS = ("tau", "F", "f1", "f2", "eta", "of_evals_cumulative", "wall_time_s", "true_eval")


@dataclass(frozen=True)
class IterationRecord:
    tau: int
    F: float
    f1: float
    f2: float
    eta: float
    of_evals: int
    wall_time_s: float
    true_eval: bool = True  # False for surrogate objective values


@dataclass
class EstimationHistory:
    method: str
    seed_kind: str
    records: list = field(default_factory=list)
    x_final: np.ndarray | None = None
    counts_final: np.ndarray | None = None
    F_final: float = np.nan
    f1_final: float = np.nan
    f2_final: float = np.nan
    of_evaluations: int = 0
    running_time_s: float = 0.0
    stop_reason: str = ""
    iterates: list = field(default_factory=list)  # accepted points, in order
    meta: dict = field(default_factory=dict)

    def add(self, record: IterationRecord) -> None:
        self.records.append(record)

    def best_so_far(self) -> np.ndarray:
        """Running minimum of the true objective values."""
        values = [r.F for r in self.records if r.true_eval]
        return np.minimum.accumulate(values) if values else np.zeros(0)

    def to_rows(self) -> list[dict]:
        return [{"tau": r.tau, "F": repr(float(r.F)), "f1": repr(float(r.f1)), "f2": repr(float(r.f2)),
                 "eta": repr(float(r.eta)), "of_evals_cumulative": r.of_evals,
                 "wall_time_s": f"{r.wall_time_s:.3f}", "true_eval": int(r.true_eval)}
                for r in self.records]

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=HISTORY_COLUMNS, lineterminator="\n")
            writer.writeheader()
            writer.writerows(self.to_rows())
