"""Command-line front end: ``dode {generate,estimate,sample,tune,benchmark}``.

Failures print a JSON object ``{"error": ..., "message": ...}`` on stderr and
exit with status 1 (2 for usage errors).
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .dta import SueConfig
from .experiments import (
    ExperimentSpec,
    benchmark,
    markdown_table,
    parse_method,
    run_experiment,
    select_experiments,
    write_run_outputs,
)
from .scenario import Scenario, ScenarioParams, build_scenario, derive_seeds
from .surrogate import Dataset, build_dataset
from .surrogate.fnn import TrainerConfig
from .surrogate.tuning import HyperGrid, KnnSpec, grid_search, spec_from_dict


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _int_list(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


def cmd_generate(args):
    params = ScenarioParams(rows=args.rows, cols=args.cols, base_length=args.base_length, speed_kmh=args.speed,
                            jitter_max=args.jitter, lanes=args.lanes, t_end=args.t_end,
                            n_intervals=args.n_intervals, demand_low=args.demand_low,
                            demand_high=args.demand_high, rng_seed=args.rng_seed,
                            origins=args.origins, destinations=args.destinations)
    sue = SueConfig(iterations=args.sue_iterations, rng_seed=derive_seeds(args.rng_seed)["sue"])
    scenario = build_scenario(params, sue)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    scenario.save(out)
    return {"scenario": str(out), "nodes": len(scenario.network.nodes), "arcs": len(scenario.network.arcs),
            "od_pairs": scenario.od.m, "intervals": scenario.grid.n_intervals, "dim": scenario.dim}


def _load_dataset(path):
    return Dataset.load(path) if path else None


def _load_model_spec(path):
    return spec_from_dict(json.loads(Path(path).read_text())) if path else None


def cmd_estimate(args):
    scenario = Scenario.load(args.scenario)
    if args.experiment:
        (spec,) = select_experiments(args.experiment, args.budget, args.rng_seed)
    else:
        if not args.method:
            raise UsageError("estimate needs --method or --experiment")
        method = parse_method(args.method)
        spec = ExperimentSpec("custom", method, args.seed_kind, args.budget, args.rng_seed)
    dataset = _load_dataset(args.dataset)
    hist, row = run_experiment(scenario, spec, dataset, _load_model_spec(args.model_spec))
    write_run_outputs(args.out, scenario, hist, row, plots=not args.no_plots)
    return {"out": str(args.out), "summary": dict(zip(("method", "experiment", "seed_kind", "of_evaluations",
                                                       "running_time_s", "rmse_demand", "rmse_counts"),
                                                      row.as_strings()))}


def cmd_sample(args):
    scenario = Scenario.load(args.scenario)
    dataset = build_dataset(scenario, n=args.n)
    dataset.save(args.out)
    return {"out": str(args.out), "n": len(dataset), "simulations": dataset.simulations}


def cmd_tune(args):
    dataset = Dataset.load(args.dataset)
    kind = {"M3": "fnn", "M4": "knn"}.get(parse_method(args.method))
    if kind is None:
        raise UsageError("tune supports the surrogate methods fnn (M3) and knn (M4)")
    if kind == "knn":
        specs = [KnnSpec(k) for k in args.k_grid] if args.k_grid else HyperGrid.default(dataset.X.shape[1]).knn
    else:
        trainer = TrainerConfig(epochs=args.epochs, rng_seed=args.rng_seed)
        specs = HyperGrid.default(dataset.X.shape[1], trainer).fnn
    result = grid_search(dataset.X, dataset.Y, specs, k=args.folds, seed=args.rng_seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "grid_scores.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["spec", *[f"fold_{i + 1}" for i in range(args.folds)], "cv_score"])
        for spec, cv in result.scores:
            writer.writerow([spec.label(), *[repr(float(e)) for e in cv.fold_errors], repr(cv.score)])
    (out / "best_spec.json").write_text(json.dumps(result.best.to_dict(), indent=1, sort_keys=True) + "\n")
    return {"out": str(out), "best": result.best.to_dict(), "cells": len(result.scores)}


def cmd_benchmark(args):
    scenario = Scenario.load(args.scenario)
    specs = select_experiments(args.only, args.budget, args.rng_seed)
    dataset = _load_dataset(args.dataset)
    model_specs = {}
    for kind, path in (("fnn", args.fnn_spec), ("knn", args.knn_spec)):
        if path:
            model_specs[kind] = _load_model_spec(path)
    rows, errors, _ = benchmark(scenario, specs, dataset, model_specs, out=args.out,
                                plots=not args.no_plots, log=_log)
    sys.stdout.write(markdown_table(rows))
    return {"out": str(args.out), "rows": len(rows), "errors": errors}


def build_parser():
    p = _Parser(prog="dode", description="Dynamic OD demand estimation on a mesoscopic simulator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="build a synthetic benchmark scenario")
    g.add_argument("--out", required=True)
    g.add_argument("--rows", type=int, default=4)
    g.add_argument("--cols", type=int, default=4)
    g.add_argument("--base-length", type=float, default=1250.0)
    g.add_argument("--speed", type=float, default=50.0, help="free-flow speed, km/h")
    g.add_argument("--jitter", type=float, default=1250.0)
    g.add_argument("--lanes", type=int, default=1)
    g.add_argument("--t-end", type=float, default=3600.0)
    g.add_argument("--n-intervals", type=int, default=4)
    g.add_argument("--demand-low", type=float, default=1.0)
    g.add_argument("--demand-high", type=float, default=20.0)
    g.add_argument("--origins", type=_int_list, default=None, help="comma-separated node ids")
    g.add_argument("--destinations", type=_int_list, default=None, help="comma-separated node ids")
    g.add_argument("--sue-iterations", type=int, default=15)
    g.add_argument("--rng-seed", "--seed", type=int, default=0)
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("estimate", help="run one method on a scenario")
    e.add_argument("--scenario", required=True)
    e.add_argument("--method")
    e.add_argument("--experiment", "--only", dest="experiment", help="canonical id E1..E12")
    e.add_argument("--seed-kind", default="None", choices=["None", "LD", "HD"])
    e.add_argument("--budget", type=int, default=201)
    e.add_argument("--dataset")
    e.add_argument("--model-spec", help="JSON from 'tune' (best_spec.json)")
    e.add_argument("--out", required=True)
    e.add_argument("--rng-seed", type=int, default=0)
    e.add_argument("--no-plots", action="store_true")
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("sample", help="simulate a Sobol dataset for surrogate training")
    s.add_argument("--scenario", required=True)
    s.add_argument("--n", type=int, default=200)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    t = sub.add_parser("tune", help="grid search with k-fold cross-validation")
    t.add_argument("--dataset", required=True)
    t.add_argument("--method", required=True, help="fnn/M3 or knn/M4")
    t.add_argument("--out", required=True)
    t.add_argument("--folds", type=int, default=5)
    t.add_argument("--k-grid", type=_int_list, default=None, help="override the kNN grid, e.g. 1,3,5")
    t.add_argument("--epochs", type=int, default=TrainerConfig().epochs)
    t.add_argument("--rng-seed", type=int, default=0)
    t.set_defaults(func=cmd_tune)

    b = sub.add_parser("benchmark", help="run the E1..E12 grid and write a summary table")
    b.add_argument("--scenario", required=True)
    b.add_argument("--dataset")
    b.add_argument("--out", required=True)
    b.add_argument("--only", help="comma-separated experiment ids")
    b.add_argument("--budget", type=int, default=201)
    b.add_argument("--fnn-spec")
    b.add_argument("--knn-spec")
    b.add_argument("--rng-seed", type=int, default=0)
    b.add_argument("--no-plots", action="store_true")
    b.set_defaults(func=cmd_benchmark)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        info = args.func(args)
    except UsageError as exc:
        print(json.dumps({"error": "UsageError", "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - every failure becomes machine-readable
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(info, sort_keys=True, default=str), file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
