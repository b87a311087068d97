"""Experiment grid, run orchestration and result files."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gradient import MethodConfig, SpsaConfig, run_am_method, run_spsa_method
from .network import SeedKind
from .objective import rmse
from .surrogate.method import MlConfig, run_ml_method

METHOD_ALIASES = {"m1": "M1", "am": "M1", "m2": "M2", "spsa": "M2", "m3": "M3", "fnn": "M3",
                  "m4": "M4", "knn": "M4"}
MODEL_KIND = {"M3": "fnn", "M4": "knn"}
MIN_BUDGET = {"M1": 2, "M2": 4, "M3": 2, "M4": 2}
SUMMARY_COLUMNS = ("method", "experiment", "seed_kind", "of_evaluations", "running_time_s",
                   "rmse_demand", "rmse_counts")


def parse_method(name: str) -> str:
    try:
        return METHOD_ALIASES[str(name).lower()]
    except KeyError:
        raise ValueError(f"invalid method {name!r}; choose from M1/am, M2/spsa, M3/fnn, M4/knn") from None


@dataclass(frozen=True)
class ExperimentSpec:
    id: str
    method: str
    seed_kind: SeedKind
    budget: int = 201
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", parse_method(self.method))
        object.__setattr__(self, "seed_kind", SeedKind.parse(self.seed_kind))
        need = MIN_BUDGET[self.method]
        if self.budget < need:
            raise ValueError(f"budget >= {need} required for {self.method} (got {self.budget})")


def canonical_experiments(budget: int = 201, rng_seed: int = 0) -> list[ExperimentSpec]:
    """E1..E12: methods M1..M4 crossed with seed kinds None, LD, HD."""
    specs = []
    for m, method in enumerate(("M1", "M2", "M3", "M4")):
        for s, kind in enumerate(SeedKind):
            specs.append(ExperimentSpec(f"E{3 * m + s + 1}", method, kind, budget, rng_seed))
    return specs


def select_experiments(only, budget=201, rng_seed=0) -> list[ExperimentSpec]:
    specs = canonical_experiments(budget, rng_seed)
    if not only:
        return specs
    wanted = [w.strip().upper() for w in (only.split(",") if isinstance(only, str) else only) if w.strip()]
    known = {s.id for s in specs}
    unknown = [w for w in wanted if w not in known]
    if unknown:
        raise ValueError(f"unknown experiment id(s): {', '.join(unknown)}")
    return [s for s in specs if s.id in wanted]


@dataclass(frozen=True)
class SummaryRow:
    method: str
    experiment: str
    seed_kind: str
    of_evaluations: int
    running_time_s: float
    rmse_demand: float
    rmse_counts: float

    def as_strings(self) -> list[str]:
        return [self.method, self.experiment, self.seed_kind, str(self.of_evaluations),
                f"{self.running_time_s:.3f}", repr(float(self.rmse_demand)), repr(float(self.rmse_counts))]


def run_experiment(scenario, spec: ExperimentSpec, dataset=None, model_spec=None, simulator=None):
    """Run one experiment; returns ``(history, SummaryRow)``."""
    if scenario.observed_counts is None:
        raise ValueError("scenario has no observed counts")
    t0 = time.perf_counter()
    if spec.method == "M1":
        hist = run_am_method(scenario, spec.seed_kind, MethodConfig(budget=spec.budget), simulator=simulator)
    elif spec.method == "M2":
        cfg = MethodConfig(budget=spec.budget, spsa=SpsaConfig(rng_seed=spec.rng_seed))
        hist = run_spsa_method(scenario, spec.seed_kind, cfg, simulator=simulator)
    else:
        if dataset is None:
            raise ValueError(f"{spec.id} ({spec.method}) requires a dataset; run 'sample' first")
        hist = run_ml_method(scenario, MODEL_KIND[spec.method], dataset, spec.seed_kind, model_spec,
                             MlConfig(budget=spec.budget, rng_seed=spec.rng_seed), simulator=simulator)
    row = SummaryRow(spec.method, spec.id, spec.seed_kind.value, hist.of_evaluations,
                     time.perf_counter() - t0, rmse(hist.x_final, scenario.x_true),
                     rmse(hist.counts_final, scenario.observed_counts))
    return hist, row


def write_summary_csv(path, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for row in rows:
            writer.writerow(row.as_strings() if isinstance(row, SummaryRow) else row)


def read_summary_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def markdown_table(rows) -> str:
    head = ["Method", "Experiment", "Seed", "OF evaluations", "Running time (s)",
            "RMSE(x, x_true)", "RMSE(c(x), c_hat)"]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for r in rows:
        if isinstance(r, SummaryRow):
            cells = [r.method, r.experiment, r.seed_kind, str(r.of_evaluations), f"{r.running_time_s:.1f}",
                     f"{r.rmse_demand:.4f}", f"{r.rmse_counts:.4f}"]
        else:
            cells = list(r)
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def write_run_outputs(directory, scenario, history, row: SummaryRow, plots=True) -> dict:
    """History, summary, final demand and scatter data (plus PNG figures) for one run."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    history.write_csv(directory / "history.csv")
    write_summary_csv(directory / "summary.csv", [row])
    n_s = scenario.grid.n_intervals
    with (directory / "final_demand.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "origin", "destination", "interval", "x_estimate", "x_true"])
        for k, (est, true) in enumerate(zip(history.x_final, scenario.x_true)):
            i, j = scenario.od.pairs[k // n_s]
            writer.writerow([k, i, j, k % n_s, repr(float(est)), repr(float(true))])
    _write_pairs(directory / "scatter_demand.csv", ("x_true", "x_estimate"), scenario.x_true, history.x_final)
    _write_pairs(directory / "scatter_counts.csv", ("c_observed", "c_estimate"),
                 scenario.observed_counts, history.counts_final)
    (directory / "run.json").write_text(json.dumps({
        "method": history.method, "seed_kind": history.seed_kind, "stop_reason": history.stop_reason,
        "of_evaluations": history.of_evaluations, "F_final": history.F_final,
        "f1_final": history.f1_final, "f2_final": history.f2_final,
        "pearson_demand": pearson(scenario.x_true, history.x_final), "meta": history.meta,
    }, indent=1, sort_keys=True, default=_jsonable) + "\n")
    files = {}
    if plots:
        from .plotting import plot_history, plot_scatter
        label = f"{row.experiment} ({row.method}, seed {row.seed_kind})"
        files["scatter_demand"] = plot_scatter(directory / "scatter_demand.png", scenario.x_true, history.x_final,
                                               "ground-truth demand", "estimated demand", label)
        files["scatter_counts"] = plot_scatter(directory / "scatter_counts.png", scenario.observed_counts,
                                               history.counts_final, "observed counts", "simulated counts", label)
        files["history"] = plot_history(directory / "history.png", history, label)
    return files


def _write_pairs(path, names, a, b) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        writer.writerows([[repr(float(u)), repr(float(v))] for u, v in zip(a, b)])


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialise {type(v).__name__}")


def pearson(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if np.std(a) == 0 or np.std(b) == 0:
        return float("nan")
    return float(np.corrcoef(a, b)[0, 1])


def benchmark(scenario, specs, dataset=None, model_specs=None, out=None, plots=True, log=None):
    """Run ``specs`` in order; a failing experiment is reported and the rest continue.

    Returns ``(rows, errors, histories)`` where ``rows`` holds a
    :class:`SummaryRow` per successful experiment and ``errors`` maps failing
    experiment ids to messages.
    """
    model_specs = model_specs or {}
    rows, errors, histories = [], {}, {}
    for spec in specs:
        try:
            hist, row = run_experiment(scenario, spec, dataset, model_specs.get(MODEL_KIND.get(spec.method)))
        except Exception as exc:  # noqa: BLE001 - reported per row, the run continues
            errors[spec.id] = f"{type(exc).__name__}: {exc}"
            if log:
                log(f"{spec.id} failed: {errors[spec.id]}")
            continue
        rows.append(row)
        histories[spec.id] = hist
        if out is not None:
            write_run_outputs(Path(out) / spec.id, scenario, hist, row, plots)
        if log:
            log(" ".join(row.as_strings()))
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        write_summary_csv(out / "summary.csv", rows)
        (out / "summary.md").write_text(markdown_table(rows))
        (out / "errors.json").write_text(json.dumps(errors, indent=1, sort_keys=True) + "\n")
    return rows, errors, histories
