"""Command-line front end.

Subcommands: simulate, estimate, crossval, experiment. One JSON config
document drives all of them; the CLI validates shape, dispatches to library
operations, and persists results. It computes nothing itself.

Exit codes: 1 config problem, 2 population solver failure, 3 malformed input
data, 4 estimation failure. All errors go to standard error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    DomainError,
    EstimationError,
    RdspillError,
    SolverError,
)
from .estimators import (
    EstimatorConfig,
    cross_validate_r,
    donut_rdd,
    local_linear_rdd,
    local_spillover_regression,
    nadaraya_watson_rdd,
    to_record,
)
from .experiments import STUDIES, VERSION, ExperimentPlan, tau_star_for_model
from .funcspace import ModelSpec
from .population import CUTOFF, solve_population, true_estimands
from .sampling import Sample, draw_sample, parse_sample_csv

TOP_LEVEL_KEYS = {"model", "estimator", "simulate", "estimate", "crossval",
                  "experiment"}
SIMULATE_KEYS = {"n", "seed", "r", "grid_n", "declared_regime", "h", "kernel"}
ESTIMATE_KEYS = {"pooling"}
CROSSVAL_KEYS = {"candidates", "folds", "seed"}
EXPERIMENT_KEYS = {"study", "plan"}
REGIME_LABELS = ("r>>h", "r<<h", "r~h")
ESTIMATOR_ALIASES = {
    "ll": "local_linear",
    "nw": "nadaraya_watson",
    "donut": "donut",
    "spillover": "spillover",
}
ALL_ESTIMATORS = ("local_linear", "nadaraya_watson", "donut", "spillover")


# ---------------------------------------------------------------- config --


def _load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON: {err}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config root must be a JSON object")
    unknown = set(doc) - TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return doc


def _section(doc: dict, name: str, allowed: set, required: set) -> dict:
    if name not in doc:
        raise ConfigError(f"config is missing the {name!r} section")
    sec = doc[name]
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be a JSON object")
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {name!r} section: {sorted(unknown)}")
    missing = required - set(sec)
    if missing:
        raise ConfigError(f"{name!r} section missing keys: {sorted(missing)}")
    return sec


def _config_hash(doc: dict) -> str:
    blob = json.dumps(doc, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _provenance(doc: dict, seed, rescale=None) -> dict:
    return {"version": VERSION, "config_hash": _config_hash(doc),
            "seed": seed, "rescale": rescale}


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


# ------------------------------------------------------------------ data --


def _parse_rescale(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(
            f"--rescale expects 'min,cutoff,max', got {text!r}")
    try:
        lo, cut, hi = (float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"--rescale values must be numbers, got {text!r}") from None
    if not lo < cut < hi:
        raise ConfigError(
            f"--rescale needs min < cutoff < max, got {lo}, {cut}, {hi}")
    return lo, cut, hi


def _load_sample(args) -> tuple[Sample, dict | None]:
    """Read --data, applying the --rescale affine map when given.

    The map is z -> (z - cutoff) / max(max - cutoff, cutoff - min): the
    cutoff lands at 0 and the declared range fits inside [-1, 1].
    """
    if args.rescale is None:
        z, y = parse_sample_csv(args.data)
        return Sample(z=z, y=y, meta={"source": args.data, "n": int(z.size)}), None
    lo, cut, hi = _parse_rescale(args.rescale)
    z, y = parse_sample_csv(args.data, require_unit_range=False)
    scale = max(hi - cut, cut - lo)
    z = (z - cut) / scale
    bad = np.nonzero((z < -1.0) | (z > 1.0))[0]
    if bad.size:
        raise DataError(
            f"{args.data}: row {int(bad[0]) + 2}, column z: value outside the "
            f"range declared by --rescale")
    info = {"min": lo, "cutoff": cut, "max": hi, "scale": scale}
    return Sample(z=z, y=y, meta={"source": args.data, "n": int(z.size),
                                  "rescale": info}), info


# ----------------------------------------------------------- subcommands --


def _sidecar_path(out: str) -> str:
    root = out[:-4] if out.endswith(".csv") else out
    return root + ".estimands.json"


def cmd_simulate(args) -> int:
    doc = _load_config(args.config)
    if "model" not in doc:
        raise ConfigError("config is missing the 'model' section")
    model = ModelSpec.from_config(doc["model"])
    sim = dict(_section(doc, "simulate", SIMULATE_KEYS, {"n", "r"}))
    if args.seed is not None:
        sim["seed"] = args.seed
    if "seed" not in sim:
        raise ConfigError("no seed: set one in the 'simulate' section or pass --seed")
    effective = dict(doc, simulate=sim)
    n = int(sim["n"])
    seed = int(sim["seed"])
    r = float(sim["r"])
    grid_n = int(sim.get("grid_n", 4001))
    declared = sim.get("declared_regime")
    if declared is not None and declared not in REGIME_LABELS:
        raise ConfigError(
            f"declared_regime must be one of {REGIME_LABELS}, got {declared!r}")
    if declared == "r~h" and "h" not in sim:
        raise ConfigError("declaring the r~h regime requires an 'h' value")
    sol = solve_population(model, r, CUTOFF, grid_n)
    sample = draw_sample(sol, model, n, seed)
    sample.to_csv(args.out)
    estimands = true_estimands(model, r, grid_n)
    sidecar = {
        "n": n,
        "r": r,
        "tau_d": estimands["tau_d"],
        "tau_tot": estimands["tau_tot"],
        "provenance": _provenance(effective, seed),
    }
    if declared is not None:
        sidecar["declared_regime"] = declared
    if declared == "r~h":
        h = float(sim["h"])
        kernel = str(sim.get("kernel", "triangular"))
        sidecar["tau_star"] = tau_star_for_model(model, 2.0 * r / h, kernel)
    _write_json(_sidecar_path(args.out), sidecar)
    print(f"wrote {args.out} ({n} rows) and {_sidecar_path(args.out)}")
    return 0


def _run_estimator(name: str, sample: Sample, cfg: EstimatorConfig,
                   pooling: str) -> dict:
    if name == "local_linear":
        return to_record(name, cfg, local_linear_rdd(sample, cfg))
    if name == "nadaraya_watson":
        return to_record(name, cfg, nadaraya_watson_rdd(sample, cfg))
    if name == "donut":
        return to_record(name, cfg, donut_rdd(sample, cfg))
    return to_record("spillover", cfg,
                     local_spillover_regression(sample, cfg, pooling))


def cmd_estimate(args) -> int:
    doc = _load_config(args.config)
    if "estimator" not in doc:
        raise ConfigError("config is missing the 'estimator' section")
    cfg = EstimatorConfig.from_config(doc["estimator"])
    pooling = "average"
    if "estimate" in doc:
        pooling = str(_section(doc, "estimate", ESTIMATE_KEYS, set())
                      .get("pooling", "average"))
    sample, rescale_info = _load_sample(args)
    names = (ALL_ESTIMATORS if args.estimator == "all"
             else (ESTIMATOR_ALIASES[args.estimator],))
    records = [_run_estimator(name, sample, cfg, pooling) for name in names]
    payload = {
        "data": args.data,
        "n": sample.n,
        "records": records,
        "provenance": _provenance(doc, None, rescale_info),
    }
    _write_json(args.out, payload)
    print(f"wrote {args.out} ({len(records)} record(s))")
    return 0


def cmd_crossval(args) -> int:
    doc = _load_config(args.config)
    if "estimator" not in doc:
        raise ConfigError("config is missing the 'estimator' section")
    cfg = EstimatorConfig.from_config(doc["estimator"])
    cv = dict(_section(doc, "crossval", CROSSVAL_KEYS, {"candidates", "folds"}))
    if args.seed is not None:
        cv["seed"] = args.seed
    if "seed" not in cv:
        raise ConfigError("no seed: set one in the 'crossval' section or pass --seed")
    effective = dict(doc, crossval=cv)
    sample, rescale_info = _load_sample(args)
    result = cross_validate_r(sample, cfg, list(cv["candidates"]),
                              folds=int(cv["folds"]), seed=int(cv["seed"]))
    print("r,feasible,mse_plus,mse_minus")
    for row in result["cv_table"]:
        feasible = "yes" if row["feasible"] else "no"
        mp = "" if row["mse_plus"] is None else "%.17g" % row["mse_plus"]
        mm = "" if row["mse_minus"] is None else "%.17g" % row["mse_minus"]
        print("%.17g,%s,%s,%s" % (row["r"], feasible, mp, mm))
    print("selected r_plus=%.17g r_minus=%.17g"
          % (result["r_plus"], result["r_minus"]))
    if args.out:
        _write_json(args.out, {
            "crossval": result,
            "provenance": _provenance(effective, int(cv["seed"]), rescale_info),
        })
    return 0


def cmd_experiment(args) -> int:
    doc = _load_config(args.config)
    sec = _section(doc, "experiment", EXPERIMENT_KEYS, {"study", "plan"})
    study = sec["study"]
    if study not in STUDIES:
        raise ConfigError(
            f"unknown study {study!r}; expected one of {sorted(STUDIES)}")
    plan_doc = dict(sec["plan"])
    if args.seed is not None:
        plan_doc["seed"] = args.seed
    plan = ExperimentPlan.from_config(plan_doc)
    report = STUDIES[study](plan)
    os.makedirs(args.out, exist_ok=True)
    json_path = os.path.join(args.out, f"{study}_report.json")
    csv_path = os.path.join(args.out, f"{study}_report.csv")
    with open(json_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_csv())
    print(f"{study}: {len(report.cells)} cells, {len(report.failures)} "
          f"failures -> {json_path}")
    return 4 if report.failures else 0


# ------------------------------------------------------------- dispatch --


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors: exit 1, not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rdspill",
                     description="Simulate, estimate, and study regression "
                                 "discontinuity designs with neighborhood "
                                 "spillovers in the running variable.")
    parser.add_argument("--version", action="version", version=f"rdspill {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[], description=(
        "Solve the population model, draw a sample, and write a z,y CSV "
        "plus a sidecar JSON of true estimands."))
    sim.add_argument("--config", required=True, help="JSON config path")
    sim.add_argument("--out", required=True, help="output CSV path")
    sim.add_argument("--seed", type=int, help="override the config seed")
    sim.set_defaults(func=cmd_simulate)

    est = sub.add_parser("estimate", description=(
        "Run the configured estimator(s) on a z,y CSV and write JSON records."))
    est.add_argument("--config", required=True)
    est.add_argument("--data", required=True, help="input CSV with header z,y")
    est.add_argument("--out", required=True, help="output JSON path")
    est.add_argument("--estimator", default="ll",
                     choices=["ll", "nw", "donut", "spillover", "all"])
    est.add_argument("--rescale", metavar="MIN,CUTOFF,MAX", help=(
        "affine map for raw data: cutoff to 0, declared range into [-1, 1]"))
    est.set_defaults(func=cmd_estimate)

    cv = sub.add_parser("crossval", description=(
        "Cross-validate the spillover neighborhood radius and print the "
        "per-candidate table."))
    cv.add_argument("--config", required=True)
    cv.add_argument("--data", required=True)
    cv.add_argument("--out", help="optional JSON output path")
    cv.add_argument("--seed", type=int, help="override the config seed")
    cv.add_argument("--rescale", metavar="MIN,CUTOFF,MAX")
    cv.set_defaults(func=cmd_crossval)

    exp = sub.add_parser("experiment", description=(
        "Run a Monte Carlo study and write report JSON + CSV into a directory."))
    exp.add_argument("--config", required=True)
    exp.add_argument("--out", required=True, help="output directory")
    exp.add_argument("--seed", type=int, help="override the plan seed")
    exp.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_err:
        return int(exit_err.code or 0)
    try:
        return args.func(args)
    except (ConfigError, DomainError) as err:
        return _fail(1, err)
    except SolverError as err:
        return _fail(2, err)
    except DataError as err:
        return _fail(3, err)
    except EstimationError as err:
        return _fail(4, err)
    except RdspillError as err:
        return _fail(1, err)


def _fail(code: int, err: Exception) -> int:
    print(f"rdspill: error: {err}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
