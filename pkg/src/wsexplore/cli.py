"""Command-line driver for the two-stage exploration.

Typical session (all files land in ``--out-dir``)::

    wsexplore baseline --model m.json --blob m.bin --images x.idx --labels y.idx --out-dir run
    wsexplore sweep    --out-dir run --k-min 1 --k-max 32 --budget-pp 2
    wsexplore explore  --out-dir run --mode exhaustive
    wsexplore explore  --out-dir run --mode predicted --sample-fraction 0.1 --seed 0
    wsexplore report   --out-dir run

Later commands reuse the model/dataset paths recorded by ``baseline`` and
refuse to run if those files changed since. Exit codes: 0 success,
1 infeasible computation, 2 I/O or format error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io_formats as io
from .errors import FormatError, InfeasibleError, ShapeError, WSError
from .layer_explorer import SweepConfig, select_layer_candidates, sweep_model
from .model import LabeledDataset, score, score_calls
from .network_explorer import (
    DEFAULT_CAP,
    compare_fronts,
    enumerate_ktuples,
    exhaustive_explore,
    candidate_codebooks,
    pareto_front,
    predicted_explore,
    predicted_pipeline,
    valid_fraction,
)
from .predictor import RegressionSample, features_for, fit, validate

log = logging.getLogger("wsexplore")

DEFAULTS = {
    "k_min": 1,
    "k_max": 256,
    "k_stride": 1,
    "budget_pp": 1.0,
    "layer_budget_pp": None,
    "seed": 0,
    "mode": "exhaustive",
    "sample_fraction": 0.001,
    "filter_valid": False,
    "intercept": False,
    "workers": 1,
    "cap": DEFAULT_CAP,
    "test_fraction": 0.2,
    "lloyd_threshold": None,
    "out_dir": ".",
}


class UsageError(WSError):
    pass


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _resolve(args) -> dict:
    """Merge defaults < config file < explicit flags."""
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise FormatError(f"{args.config}: invalid JSON ({e})") from e
        cfg.update({k.replace("-", "_"): v for k, v in file_cfg.items()})
    cfg.update({k: v for k, v in vars(args).items() if v is not None and k not in ("config", "func")})
    if cfg["budget_pp"] is None or float(cfg["budget_pp"]) <= 0:
        raise UsageError("--budget-pp must be > 0")
    if not 0 < float(cfg["sample_fraction"]) <= 1:
        raise UsageError("--sample-fraction must lie in (0, 1]")
    if int(cfg["k_min"]) < 1:
        raise UsageError("--k-min must be >= 1")
    if int(cfg["workers"]) < 1:
        raise UsageError("--workers must be >= 1")
    cfg["out_dir"] = Path(cfg["out_dir"])
    return cfg


class RunLog:
    """Deterministic counters in ``run_log.json``; wall times go to stderr only."""

    def __init__(self, out_dir: Path):
        self.path = out_dir / "run_log.json"
        self.doc = io.read_json(self.path) if self.path.exists() else {}
        self.doc.pop("schema_version", None)

    def record(self, section: str, **values):
        self.doc[section] = values
        io.write_json(self.path, self.doc)


def _load_inputs(cfg):
    """Model, dataset and baseline accuracy, as fixed by the baseline step."""
    base_path = cfg["out_dir"] / "baseline.json"
    if not base_path.exists():
        raise FileNotFoundError(f"{base_path} not found; run 'baseline' first")
    base = io.read_json(base_path)
    inputs = base["inputs"]
    for key in ("model", "blob", "images", "labels"):
        given = cfg.get(key)
        if given is not None and str(given) != inputs[key]["path"]:
            raise UsageError(f"--{key} {given} differs from the baseline input {inputs[key]['path']}")
        if _sha256(inputs[key]["path"]) != inputs[key]["sha256"]:
            raise FormatError(f"{inputs[key]['path']} changed since the baseline was measured")
    model = io.load_model(inputs["model"]["path"], inputs["blob"]["path"])
    dataset = _dataset(model, inputs["images"]["path"], inputs["labels"]["path"])
    return model, dataset, float(base["accuracy"])


def _dataset(model, images_path, labels_path):
    images = io.load_idx_images(images_path)
    labels = io.load_idx_labels(labels_path)
    if images.shape[1:] != model.input_shape:
        raise FormatError(f"{images_path}: images are {images.shape[1:]}, model expects {model.input_shape}")
    return LabeledDataset(images, labels, model.num_classes)


def _curves_and_candidates(cfg, model):
    out = cfg["out_dir"]
    candidate_sets, sweep_cfg = io.load_candidates(out / "candidates.json")
    curves = [io.load_curve(out / f"layer_{n}_curve.csv") for n in range(1, len(candidate_sets) + 1)]
    if [c.layer_index for c in curves] != list(model.weighted_indices):
        raise FormatError("curve files do not match the model's weighted layers")
    return curves, candidate_sets, sweep_cfg


# -- commands -----------------------------------------------------------------

def cmd_baseline(cfg):
    for key in ("model", "blob", "images", "labels"):
        if not cfg.get(key):
            raise UsageError(f"baseline needs --{key}")
    out = cfg["out_dir"]
    out.mkdir(parents=True, exist_ok=True)
    model = io.load_model(cfg["model"], cfg["blob"])
    dataset = _dataset(model, cfg["images"], cfg["labels"])
    acc = score(model, dataset)
    io.write_json(out / "baseline.json", {
        "accuracy": acc,
        "n_samples": len(dataset),
        "num_classes": model.num_classes,
        "num_weighted_layers": model.num_weighted_layers,
        "inputs": {key: {"path": str(cfg[key]), "sha256": _sha256(cfg[key])}
                   for key in ("model", "blob", "images", "labels")},
    })
    RunLog(out).record("baseline", scorings=1)
    print(f"{acc:.4f}")


def cmd_sweep(cfg):
    model, dataset, base_acc = _load_inputs(cfg)
    layer_budget = cfg["layer_budget_pp"] if cfg["layer_budget_pp"] is not None else cfg["budget_pp"]
    sweep_cfg = SweepConfig(int(cfg["k_min"]), int(cfg["k_max"]), float(layer_budget), int(cfg["k_stride"]),
                            cfg["lloyd_threshold"], int(cfg["seed"]))
    before = score_calls.value
    t0 = time.perf_counter()
    curves = sweep_model(model, sweep_cfg, dataset, base_acc, int(cfg["workers"]))
    scorings = score_calls.value - before
    out = cfg["out_dir"]
    for n, curve in enumerate(curves, start=1):
        io.save_curve(curve, out / f"layer_{n}_curve.csv")
    candidate_sets, failures = [], []
    for n, curve in enumerate(curves, start=1):
        try:
            candidate_sets.append(select_layer_candidates(curve, sweep_cfg))
        except InfeasibleError as e:
            failures.append(f"layer{n} ({e})")
    RunLog(out).record("sweep", scorings=scorings, points_per_layer=[len(c.points) for c in curves],
                       infeasible_layers=failures)
    log.info("sweep: %d scorings in %.1f s", scorings, time.perf_counter() - t0)
    if failures:
        raise InfeasibleError("; ".join(failures))
    io.save_candidates(candidate_sets, sweep_cfg, out / "candidates.json")
    for n, cs in enumerate(candidate_sets, start=1):
        print(f"layer{n}: {cs.ks}")
    print(f"total scorings: {scorings}")


def _write_comparison(out, budget, truth_name, predicted_name, name="front_comparison.json"):
    truth = io.load_front(out / truth_name, budget)
    selection = io.load_front(out / predicted_name, budget)
    measured = io.load_records(out / "results_exhaustive.csv")
    cmp = compare_fronts(truth, selection, measured)
    io.save_comparison(cmp, out / name, budget)
    print(f"coverage {cmp.coverage:.3f}  mean gap {cmp.mean_gap:.4f}  hypervolume ratio {cmp.hv_ratio:.4f}")
    return cmp


def cmd_explore(cfg):
    model, dataset, base_acc = _load_inputs(cfg)
    curves, candidate_sets, _ = _curves_and_candidates(cfg, model)
    out = cfg["out_dir"]
    budget = float(cfg["budget_pp"])
    workers = int(cfg["workers"])
    space = enumerate_ktuples(candidate_sets)
    codebooks = candidate_codebooks(model, candidate_sets, cfg["lloyd_threshold"], int(cfg["seed"]))
    before = score_calls.value
    t0 = time.perf_counter()
    if cfg["mode"] == "exhaustive":
        records = exhaustive_explore(model, candidate_sets, dataset, base_acc, int(cfg["cap"]), workers, codebooks)
        front = pareto_front(records, budget)
        io.save_records(records, out / "results_exhaustive.csv")
        io.save_front(front, out / "front_exhaustive.csv")
        frac = valid_fraction(records, budget)
        RunLog(out).record("explore_exhaustive", combinations=space.count, scorings=score_calls.value - before,
                           valid_fraction=frac, front_size=len(front), al_budget_pp=budget)
        print(f"{space.count} combinations, {100 * frac:.1f}% within {budget} pp, {len(front)} Pareto-optimal")
        if (out / "front_predicted.csv").exists():
            _write_comparison(out, budget, "front_exhaustive.csv", "front_predicted.csv")
    elif cfg["mode"] == "predicted":
        measured = None
        if cfg["filter_valid"]:
            path = out / "results_exhaustive.csv"
            if not path.exists():
                raise FileNotFoundError(f"{path} not found; --filter-valid samples from exhaustive results")
            measured = io.load_records(path)
        run = predicted_pipeline(model, candidate_sets, curves, dataset, base_acc, budget,
                                 float(cfg["sample_fraction"]), int(cfg["seed"]), workers, codebooks,
                                 measured, bool(cfg["filter_valid"]), bool(cfg["intercept"]))
        io.save_records(run.sample_records, out / "sample_measured.csv")
        io.save_predictor(run.predictor, out / "predictor.json")
        io.save_records(run.predicted_records, out / "results_predicted.csv")
        io.save_front(run.predicted_front, out / "front_predicted.csv")
        io.save_front(run.rescored_front, out / "front_rescored.csv")
        RunLog(out).record("explore_predicted", combinations=space.count, subsample_size=len(run.sample_records),
                           rescored=len(run.rescored_records), scorings=run.scorings,
                           scoring_fraction=run.scorings / space.count, seed=int(cfg["seed"]),
                           sample_fraction=float(cfg["sample_fraction"]), filter_valid=bool(cfg["filter_valid"]),
                           intercept=bool(cfg["intercept"]), al_budget_pp=budget)
        print(f"{space.count} combinations predicted from {len(run.sample_records)} samples; "
              f"{run.scorings} scorings; front of {len(run.rescored_front)} after re-scoring")
        if (out / "front_exhaustive.csv").exists():
            _write_comparison(out, budget, "front_exhaustive.csv", "front_predicted.csv")
    else:
        raise UsageError(f"unknown mode {cfg['mode']!r}")
    log.info("explore (%s): %.1f s", cfg["mode"], time.perf_counter() - t0)


def cmd_fit(cfg):
    """Hold-out protocol: fit on part of the measured records, test on the rest."""
    out = cfg["out_dir"]
    model, _, _ = _load_inputs(cfg)
    curves, candidate_sets, _ = _curves_and_candidates(cfg, model)
    budget = float(cfg["budget_pp"])
    records = io.load_records(Path(cfg.get("results") or out / "results_exhaustive.csv"))
    if cfg["filter_valid"]:
        records = [r for r in records if r.al <= budget]
    samples = [RegressionSample(tuple(features_for(r.ktuple, curves)), r.al) for r in records]
    test_fraction = float(cfg["test_fraction"])
    if not 0 < test_fraction < 1:
        raise UsageError("--test-fraction must lie in (0, 1)")
    order = np.random.default_rng(int(cfg["seed"])).permutation(len(samples))
    n_test = int(round(test_fraction * len(samples)))
    if n_test < 1 or n_test >= len(samples):
        raise InfeasibleError(f"cannot split {len(samples)} records with test fraction {test_fraction}")
    test = [samples[i] for i in sorted(order[:n_test])]
    train = [samples[i] for i in sorted(order[n_test:])]
    predictor = fit(train, intercept=bool(cfg["intercept"]), seed=int(cfg["seed"]),
                    test_fraction=test_fraction, filter_valid=bool(cfg["filter_valid"]))
    stats = validate(predictor, test)
    io.save_predictor(predictor, out / "predictor_fit.json")
    io.write_json(out / "fit_validation.json", {
        "n_train": len(train), "n_test": len(test),
        "mae": stats.mae, "rmse": stats.rmse, "max_abs_error": stats.max_abs_error,
    })
    predicted = predicted_explore(candidate_sets, predictor, curves, model)
    io.save_records(predicted, out / "results_fit_predicted.csv")
    io.save_front(pareto_front(predicted, budget), out / "front_fit.csv")
    print("alphas: " + ", ".join(f"{a:.2f}" for a in predictor.alphas))
    print(f"held-out mae {stats.mae:.4f}  rmse {stats.rmse:.4f}  max {stats.max_abs_error:.4f}")
    if (out / "front_exhaustive.csv").exists():
        _write_comparison(out, budget, "front_exhaustive.csv", "front_fit.csv", "front_comparison_fit.json")


def cmd_compare(cfg):
    out = cfg["out_dir"]
    budget = float(cfg["budget_pp"])
    truth = io.load_front(Path(cfg.get("truth") or out / "front_exhaustive.csv"), budget)
    selection = io.load_front(Path(cfg.get("predicted") or out / "front_predicted.csv"), budget)
    measured = io.load_records(Path(cfg.get("measured") or out / "results_exhaustive.csv"))
    cmp = compare_fronts(truth, selection, measured)
    io.save_comparison(cmp, out / "front_comparison.json", budget)
    print(f"coverage {cmp.coverage:.3f}  mean gap {cmp.mean_gap:.4f}  max gap {cmp.max_gap:.4f}  "
          f"hypervolume ratio {cmp.hv_ratio:.4f}")


FRONT_SERIES = {
    "exhaustive": "front_exhaustive.csv",
    "predicted": "front_predicted.csv",
    "rescored": "front_rescored.csv",
    "fit": "front_fit.csv",
}


def cmd_report(cfg):
    """Collect plot-ready CSVs: sensitivity curves and Pareto fronts."""
    out = cfg["out_dir"]
    n = 1
    rows = []
    while (out / f"layer_{n}_curve.csv").exists():
        curve = io.load_curve(out / f"layer_{n}_curve.csv")
        rows += [[f"layer{n}", p.k, p.b_index, repr(p.al), repr(p.cr), repr(p.inertia), p.method]
                 for p in curve.points]
        n += 1
    io._write_csv(out / "plot_sensitivity.csv", ["layer", "k", "b_index", "al_pp", "cr", "inertia", "method"], rows)
    rows = []
    for series, name in FRONT_SERIES.items():
        if (out / name).exists():
            for r in io.load_front(out / name, cfg["budget_pp"]).points:
                rows.append([series, ";".join(map(str, r.ktuple)), repr(r.al), r.al_source, repr(r.cr)])
    io._write_csv(out / "plot_fronts.csv", ["series", "ktuple", "al_pp", "al_source", "cr"], rows)
    summary = RunLog(out).doc
    for section, values in summary.items():
        print(f"[{section}]")
        for key, value in values.items():
            print(f"  {key}: {value}")


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wsexplore", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, argument_default=None)
        p.set_defaults(func=func)
        p.add_argument("--config", help="JSON file of option values; flags override it")
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--model")
        p.add_argument("--blob")
        p.add_argument("--images")
        p.add_argument("--labels")
        p.add_argument("--budget-pp", dest="budget_pp", type=float, help="network accuracy-loss budget, in points")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        return p

    add("baseline", cmd_baseline, "score the unmodified model")
    p = add("sweep", cmd_sweep, "per-layer sensitivity sweep and candidate selection")
    p.add_argument("--k-min", dest="k_min", type=int)
    p.add_argument("--k-max", dest="k_max", type=int)
    p.add_argument("--k-stride", dest="k_stride", type=int)
    p.add_argument("--layer-budget-pp", dest="layer_budget_pp", type=float,
                   help="per-layer loss cap during selection (defaults to --budget-pp)")
    p.add_argument("--lloyd-threshold", dest="lloyd_threshold", type=int)
    p = add("explore", cmd_explore, "score candidate combinations")
    p.add_argument("--mode", choices=["exhaustive", "predicted"])
    p.add_argument("--sample-fraction", dest="sample_fraction", type=float)
    p.add_argument("--filter-valid", dest="filter_valid", action="store_true", default=None)
    p.add_argument("--intercept", action="store_true", default=None)
    p.add_argument("--cap", type=int)
    p.add_argument("--lloyd-threshold", dest="lloyd_threshold", type=int)
    p = add("fit", cmd_fit, "hold-out fit of the loss predictor on measured results")
    p.add_argument("--results")
    p.add_argument("--test-fraction", dest="test_fraction", type=float)
    p.add_argument("--filter-valid", dest="filter_valid", action="store_true", default=None)
    p.add_argument("--intercept", action="store_true", default=None)
    p = add("compare", cmd_compare, "compare a predicted front with the measured one")
    p.add_argument("--truth")
    p.add_argument("--predicted")
    p.add_argument("--measured")
    add("report", cmd_report, "write plot-ready CSVs and print the run log")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    func = args.func
    del args.verbose
    try:
        cfg = _resolve(args)
        func(cfg)
    except (OSError, FormatError, ShapeError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except InfeasibleError as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return 1
    except WSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
