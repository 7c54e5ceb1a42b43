"""Monte Carlo studies at desk scale.

Four study runners share the same skeleton: lay out cells over (sample size,
radius regime), draw replicated samples from cached population solves, fit
the cell's estimator, and report mean / sd / se against a theoretical target
that is recomputed from the population solver or the limit machinery at run
time. No target number is hard-coded.

Reproducibility: every cell derives its replication seeds from one Philox
substream keyed by (plan seed, study tag, cell index), and the whole seed
vector is materialized before any drawing. Results are therefore bit-exact
across reruns and independent of the order in which cells or replications
execute.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .asymptotics import adequate_table, tau_star
from .errors import ConfigError, RdspillError
from .estimators import (
    EstimatorConfig,
    donut_rdd,
    local_linear_rdd,
    local_spillover_regression,
    nadaraya_watson_rdd,
)
from .funcspace import ModelSpec, constant, polynomial
from .kernels import KERNEL_NAMES, kernel_values
from .population import ALL_TREATED, CUTOFF, NONE_TREATED, solve_population
from .sampling import draw_sample, substream

VERSION = "0.1.0"

TARGET_KINDS = ("tau_d", "tau_tot", "tau_star")
ESTIMATOR_NAMES = ("local_linear", "nadaraya_watson", "donut", "spillover")
RADIUS_CAP = 0.9
RADIUS_FLOOR_CELLS = 8

_STUDY_TAGS = {"phase_transition": 1, "spillover_consistency": 2,
               "donut": 3, "ll_vs_nw": 4}


def benchmark_model(noise_sd: float = 0.1) -> ModelSpec:
    """The standard test model: tau_d = 1, delta(0) = 0.4, gamma(0) = 0.5.

    Linear baselines make the finite-r total effect exactly
    (tau_d + gamma(0)) / (1 - delta(0)) = 2.5 at every radius.
    """
    return ModelSpec(
        m_plus=polynomial([1.0, 0.3]),
        m_minus=polynomial([0.0, 0.2]),
        delta=constant(0.4),
        gamma=constant(0.5),
        noise_sd=constant(noise_sd),
    )


@dataclass(frozen=True)
class RegimeRule:
    """Radius rule r = factor * h * n^n_power, capped below RADIUS_CAP and
    floored at RADIUS_FLOOR_CELLS grid cells."""

    label: str
    target: str
    factor: float
    n_power: float = 0.0

    def __post_init__(self):
        if self.target not in TARGET_KINDS:
            raise ConfigError(
                f"regime target must be one of {TARGET_KINDS}, got {self.target!r}")
        if self.factor <= 0.0:
            raise ConfigError(f"regime factor must be positive, got {self.factor}")

    def radius(self, n: int, h: float, grid_n: int) -> float:
        r = self.factor * h * float(n) ** self.n_power
        floor = RADIUS_FLOOR_CELLS * 2.0 / (grid_n - 1)
        return min(max(r, floor), RADIUS_CAP)

    def to_config(self) -> dict:
        return {"label": self.label, "target": self.target,
                "factor": self.factor, "n_power": self.n_power}

    @classmethod
    def from_config(cls, doc: dict) -> "RegimeRule":
        unknown = set(doc) - {"label", "target", "factor", "n_power"}
        if unknown:
            raise ConfigError(f"unknown regime rule keys: {sorted(unknown)}")
        try:
            return cls(label=str(doc["label"]), target=str(doc["target"]),
                       factor=float(doc["factor"]),
                       n_power=float(doc.get("n_power", 0.0)))
        except KeyError as missing:
            raise ConfigError(f"regime rule missing key {missing}") from None


PHASE_REGIMES = (
    RegimeRule("r>>h", "tau_d", 1.0, 0.1),
    RegimeRule("r<<h", "tau_tot", 1.0, -0.1),
    RegimeRule("r~h", "tau_star", 0.5, 0.0),
)


@dataclass(frozen=True)
class ExperimentPlan:
    model: ModelSpec
    regime_map: tuple[RegimeRule, ...]
    n_grid: tuple[int, ...]
    replications: int
    seed: int
    h_coef: float = 1.0
    h_power: float = -0.2
    kernel: str = "triangular"
    estimators: tuple[str, ...] = ESTIMATOR_NAMES
    grid_n: int = 4001

    def __post_init__(self):
        object.__setattr__(self, "regime_map", tuple(self.regime_map))
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if self.replications < 2:
            raise ConfigError(
                f"need >= 2 replications for a standard error, got {self.replications}")
        if not self.regime_map:
            raise ConfigError("regime_map must contain at least one rule")
        if not self.n_grid or any(n < 10 for n in self.n_grid):
            raise ConfigError("n_grid must be non-empty with every n >= 10")
        if self.h_coef <= 0.0:
            raise ConfigError(f"bandwidth coefficient must be positive, got {self.h_coef}")
        if not -0.25 < self.h_power < 0.0:
            raise ConfigError(
                f"bandwidth exponent must lie in (-1/4, 0), got {self.h_power}")
        if self.kernel not in KERNEL_NAMES:
            raise ConfigError(f"unknown kernel {self.kernel!r}")
        bad = set(self.estimators) - set(ESTIMATOR_NAMES)
        if bad:
            raise ConfigError(f"unknown estimators: {sorted(bad)}")
        for n in self.n_grid:
            h = self.h_of(n)
            if not 0.0 < h <= 1.0:
                raise ConfigError(f"bandwidth rule gives h={h} at n={n}")
            for rule in self.regime_map:
                r = rule.radius(n, h, self.grid_n)
                if not 0.0 < r < 1.0:
                    raise ConfigError(
                        f"regime {rule.label!r} gives r={r} at n={n}")

    def h_of(self, n: int) -> float:
        return self.h_coef * float(n) ** self.h_power

    def to_config(self) -> dict:
        return {
            "model": self.model.to_config(),
            "regime_map": [rule.to_config() for rule in self.regime_map],
            "n_grid": list(self.n_grid),
            "replications": self.replications,
            "seed": self.seed,
            "h_coef": self.h_coef,
            "h_power": self.h_power,
            "kernel": self.kernel,
            "estimators": list(self.estimators),
            "grid_n": self.grid_n,
        }

    @classmethod
    def from_config(cls, doc: dict) -> "ExperimentPlan":
        if not isinstance(doc, dict):
            raise ConfigError("experiment plan config must be a mapping")
        known = {"model", "regime_map", "n_grid", "replications", "seed",
                 "h_coef", "h_power", "kernel", "estimators", "grid_n"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown experiment plan keys: {sorted(unknown)}")
        missing = {"model", "regime_map", "n_grid", "replications", "seed"} - set(doc)
        if missing:
            raise ConfigError(f"experiment plan missing keys: {sorted(missing)}")
        return cls(
            model=ModelSpec.from_config(doc["model"]),
            regime_map=tuple(RegimeRule.from_config(d) for d in doc["regime_map"]),
            n_grid=tuple(int(n) for n in doc["n_grid"]),
            replications=int(doc["replications"]),
            seed=int(doc["seed"]),
            h_coef=float(doc.get("h_coef", 1.0)),
            h_power=float(doc.get("h_power", -0.2)),
            kernel=str(doc.get("kernel", "triangular")),
            estimators=tuple(doc.get("estimators", ESTIMATOR_NAMES)),
            grid_n=int(doc.get("grid_n", 4001)),
        )

    def config_hash(self) -> str:
        blob = json.dumps(self.to_config(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ExperimentReport:
    study: str
    cells: list
    failures: list
    summary: dict
    provenance: dict

    CSV_COLUMNS = ("study", "regime", "estimator", "quantity", "n", "h", "r",
                   "replications", "mean", "sd", "se", "target_name",
                   "target_value", "bias", "se_distance", "status")

    def to_json(self) -> str:
        doc = {"study": self.study, "provenance": self.provenance,
               "summary": self.summary, "cells": self.cells,
               "failures": self.failures}
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return "%.17g" % v
            return str(v)

        lines = [",".join(self.CSV_COLUMNS)]
        for cell in self.cells:
            row = dict(cell, study=self.study, status="ok")
            lines.append(",".join(fmt(row.get(col)) for col in self.CSV_COLUMNS))
        for failure in self.failures:
            row = dict(failure, study=self.study, status="failed")
            lines.append(",".join(fmt(row.get(col)) for col in self.CSV_COLUMNS))
        return "\n".join(lines) + "\n"


class SolutionCache:
    """Insert-only store of population solves keyed by
    (model content hash, radius, grid size, regime)."""

    def __init__(self):
        self._store = {}

    def __len__(self):
        return len(self._store)

    def get_or_solve(self, model: ModelSpec, r: float, grid_n: int, regime=CUTOFF):
        key = (model.content_hash(), float(r), int(grid_n), regime.kind)
        if key not in self._store:
            self._store[key] = solve_population(model, r, regime, grid_n)
        return self._store[key]


shared_cache = SolutionCache()

_TABLE_CACHE: dict = {}


def _rep_seeds(seed: int, study: str, cell_index: int, replications: int) -> np.ndarray:
    gen = substream(seed, _STUDY_TAGS[study], cell_index)
    return gen.integers(0, 2**62, size=replications)


def _provenance(plan: ExperimentPlan) -> dict:
    return {"config_hash": plan.config_hash(), "seed": plan.seed,
            "version": VERSION}


def _tau_tot_target(model: ModelSpec, r: float, grid_n: int,
                    cache: SolutionCache) -> float:
    """Same contrast as population.true_estimands, served from the cache."""
    sol_all = cache.get_or_solve(model, r, grid_n, ALL_TREATED)
    sol_none = cache.get_or_solve(model, r, grid_n, NONE_TREATED)
    return float(sol_all.y[sol_all.i0] - sol_none.y[sol_none.i0])


def tau_star_for_model(model: ModelSpec, c: float, kernel: str) -> float:
    """Limit value of the cutoff contrast at c = 2r/h, built from the model's
    values at the cutoff, with the lambda table cached per (delta0, c)."""
    delta0 = float(model.delta(0.0))
    key = (delta0, round(c, 12))
    if key not in _TABLE_CACHE:
        _TABLE_CACHE[key] = adequate_table(delta0, c)
    model_at_0 = {
        "tau_d": float(model.m_plus(0.0) - model.m_minus(0.0)),
        "delta0": delta0,
        "gamma0": float(model.gamma_at(0.0)),
    }
    return tau_star(model_at_0, c, kernel, table=_TABLE_CACHE[key])


def _cell_target(plan: ExperimentPlan, rule: RegimeRule, r: float, h: float,
                 cache: SolutionCache) -> tuple[str, float]:
    model = plan.model
    if rule.target == "tau_d":
        return "tau_d", float(model.m_plus(0.0) - model.m_minus(0.0))
    if rule.target == "tau_tot":
        return "tau_tot", _tau_tot_target(model, r, plan.grid_n, cache)
    return "tau_star", tau_star_for_model(model, 2.0 * r / h, plan.kernel)


def _stats_cell(regime: str, estimator: str, quantity: str, n: int, h: float,
                r: float, values, target_name: str, target_value: float,
                extra: dict | None = None) -> dict:
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    sd = float(arr.std(ddof=1))
    se = sd / math.sqrt(arr.size)
    bias = mean - target_value
    cell = {
        "regime": regime, "estimator": estimator, "quantity": quantity,
        "n": int(n), "h": float(h), "r": float(r),
        "replications": int(arr.size),
        "mean": mean, "sd": sd, "se": se,
        "target_name": target_name, "target_value": float(target_value),
        "bias": bias,
        "se_distance": abs(bias) / se if se > 0.0 else math.inf,
    }
    if extra:
        cell.update(extra)
    return cell


def _failure(regime: str, n: int, h: float, r: float, err: Exception,
             estimator: str | None = None) -> dict:
    return {"regime": regime, "estimator": estimator, "n": int(n),
            "h": float(h), "r": float(r),
            "error": type(err).__name__, "message": str(err)}


def run_phase_transition(plan: ExperimentPlan,
                         cache: SolutionCache | None = None) -> ExperimentReport:
    """Monte Carlo mean of the local linear cutoff contrast across radius
    regimes. Wide radii target tau_d, narrow radii the finite-r total effect,
    comparable radii the limit value tau_star at c = 2r/h."""
    cache = cache if cache is not None else shared_cache
    cells, failures = [], []
    cell_index = 0
    for rule in plan.regime_map:
        for n in plan.n_grid:
            h = plan.h_of(n)
            r = rule.radius(n, h, plan.grid_n)
            try:
                sol = cache.get_or_solve(plan.model, r, plan.grid_n)
                target_name, target_value = _cell_target(plan, rule, r, h, cache)
                cfg = EstimatorConfig(kernel=plan.kernel, h=h)
                seeds = _rep_seeds(plan.seed, "phase_transition", cell_index,
                                   plan.replications)
                taus = [local_linear_rdd(
                            draw_sample(sol, plan.model, n, int(s)), cfg).tau_hat
                        for s in seeds]
                cells.append(_stats_cell(rule.label, "local_linear", "tau_hat",
                                         n, h, r, taus, target_name, target_value))
            except RdspillError as err:
                failures.append(_failure(rule.label, n, h, r, err, "local_linear"))
            cell_index += 1
    summary = {"n_cells": len(cells), "n_failures": len(failures)}
    return ExperimentReport("phase_transition", cells, failures, summary,
                            _provenance(plan))


def _trend_ok(ordered_cells: list) -> bool:
    """|bias| nonincreasing along the cells, with one combined-SE slack."""
    for a, b in zip(ordered_cells, ordered_cells[1:]):
        slack = math.hypot(a["se"], b["se"])
        if abs(b["bias"]) > abs(a["bias"]) + slack:
            return False
    return True


def run_spillover_consistency(plan: ExperimentPlan,
                              cache: SolutionCache | None = None) -> ExperimentReport:
    """Bias of the spillover regression coefficients along a sample-size
    ladder at fixed c = 2r/h < 2."""
    cache = cache if cache is not None else shared_cache
    if len(plan.regime_map) != 1:
        raise ConfigError("the consistency study takes exactly one regime rule")
    rule = plan.regime_map[0]
    if rule.n_power != 0.0 or not 0.0 < rule.factor < 1.0:
        raise ConfigError(
            "the consistency study needs r = (c/2) * h with 0 < c < 2; "
            f"got factor={rule.factor}, n_power={rule.n_power}")
    if len(plan.n_grid) < 3:
        raise ConfigError("the consistency trend needs at least three sample sizes")
    model = plan.model
    tau_d = float(model.m_plus(0.0) - model.m_minus(0.0))
    delta0 = float(model.delta(0.0))
    gamma0 = float(model.gamma_at(0.0))
    cells, failures = [], []
    for cell_index, n in enumerate(sorted(plan.n_grid)):
        h = plan.h_of(n)
        r = rule.radius(n, h, plan.grid_n)
        try:
            sol = cache.get_or_solve(model, r, plan.grid_n)
            tau_tot = _tau_tot_target(model, r, plan.grid_n, cache)
            cfg = EstimatorConfig(kernel=plan.kernel, h=h, r=r)
            seeds = _rep_seeds(plan.seed, "spillover_consistency", cell_index,
                               plan.replications)
            draws = {"tau_d": [], "delta": [], "gamma": [], "tau_tot": []}
            for s in seeds:
                est = local_spillover_regression(
                    draw_sample(sol, model, n, int(s)), cfg)
                draws["tau_d"].append(est.tau_d_hat)
                draws["delta"].append(est.delta_hat)
                draws["gamma"].append(est.gamma_hat)
                if est.tau_tot_hat is None:
                    raise ConfigError(
                        "a replication produced delta_hat = 1 exactly; "
                        "tau_tot is undefined for this cell")
                draws["tau_tot"].append(est.tau_tot_hat)
            targets = {"tau_d": ("tau_d", tau_d), "delta": ("delta0", delta0),
                       "gamma": ("gamma0", gamma0), "tau_tot": ("tau_tot", tau_tot)}
            for quantity, series in draws.items():
                name, value = targets[quantity]
                cells.append(_stats_cell(rule.label, "spillover", quantity,
                                         n, h, r, series, name, value))
        except RdspillError as err:
            failures.append(_failure(rule.label, n, h, r, err, "spillover"))
    trend = {}
    for quantity in ("tau_d", "delta", "gamma", "tau_tot"):
        ordered = sorted((c for c in cells if c["quantity"] == quantity),
                         key=lambda c: c["n"])
        trend[quantity] = _trend_ok(ordered) if len(ordered) >= 3 else False
    summary = {"n_cells": len(cells), "n_failures": len(failures), "trend": trend}
    return ExperimentReport("spillover_consistency", cells, failures, summary,
                            _provenance(plan))


def run_donut_study(plan: ExperimentPlan,
                    cache: SolutionCache | None = None) -> ExperimentReport:
    """Donut extrapolation with h_donut = r on exogenous-spillover models.

    Two sub-studies: two-sided gamma targets the finite-r total effect,
    one-sided gamma (active only at z <= 0) targets tau_d.
    """
    cache = cache if cache is not None else shared_cache
    if plan.model.delta_bar != 0.0:
        raise ConfigError(
            "the donut study requires delta identically zero; got "
            f"sup|delta| = {plan.model.delta_bar}")
    if len(plan.regime_map) != 1:
        raise ConfigError("the donut study takes exactly one regime rule")
    rule = plan.regime_map[0]
    if rule.n_power != 0.0 or not 0.0 < rule.factor < 1.0:
        raise ConfigError(
            "the donut study needs r = factor * h with 0 < factor < 1 so the "
            f"donut stays inside the bandwidth; got factor={rule.factor}, "
            f"n_power={rule.n_power}")
    variants = (
        ("two_sided", dataclasses.replace(plan.model, gamma_one_sided=False),
         "tau_tot"),
        ("one_sided", dataclasses.replace(plan.model, gamma_one_sided=True),
         "tau_d"),
    )
    cells, failures = [], []
    cell_index = 0
    for variant_label, model, target_kind in variants:
        for n in sorted(plan.n_grid):
            h = plan.h_of(n)
            r = rule.radius(n, h, plan.grid_n)
            regime_label = f"{variant_label}:{rule.label}"
            try:
                sol = cache.get_or_solve(model, r, plan.grid_n)
                if target_kind == "tau_tot":
                    target_name, target_value = "tau_tot", _tau_tot_target(
                        model, r, plan.grid_n, cache)
                else:
                    target_name = "tau_d"
                    target_value = float(model.m_plus(0.0) - model.m_minus(0.0))
                cfg = EstimatorConfig(kernel=plan.kernel, h=h, h_donut=r)
                seeds = _rep_seeds(plan.seed, "donut", cell_index,
                                   plan.replications)
                taus = [donut_rdd(draw_sample(sol, model, n, int(s)), cfg).tau_hat
                        for s in seeds]
                cells.append(_stats_cell(regime_label, "donut", "tau_hat",
                                         n, h, r, taus, target_name, target_value,
                                         extra={"h_donut": float(r)}))
            except RdspillError as err:
                failures.append(_failure(regime_label, n, h, r, err, "donut"))
            cell_index += 1
    summary = {"n_cells": len(cells), "n_failures": len(failures)}
    return ExperimentReport("donut", cells, failures, summary, _provenance(plan))


def _nw_population_value(sol, model: ModelSpec, h: float, kernel: str,
                         nodes: int = 64) -> float:
    """Population value of the kernel-mean contrast, by per-side quadrature
    of the solved outcome profile."""
    x, wq = np.polynomial.legendre.leggauss(nodes)
    means = {}
    for side in ("plus", "minus"):
        if side == "plus":
            z = 0.5 * h * (x + 1.0)
        else:
            z = -0.5 * h * (x[::-1] + 1.0)
        kw = kernel_values(kernel, z / h) * (0.5 * h * wq)
        means[side] = float(np.sum(kw * sol.interp(z)) / np.sum(kw))
    return means["plus"] - means["minus"]


def run_ll_vs_nw(plan: ExperimentPlan,
                 cache: SolutionCache | None = None) -> ExperimentReport:
    """Local linear versus local constant under exogenous spillovers with
    r >= h: the linear fit absorbs the treated-share ramp, the constant fit
    does not. The local-constant cell's target is its own population value,
    computed by quadrature; its distance from tau_d is the separation margin.
    """
    cache = cache if cache is not None else shared_cache
    model = plan.model
    if model.delta_bar != 0.0:
        raise ConfigError(
            "the comparison study requires delta identically zero; got "
            f"sup|delta| = {model.delta_bar}")
    if float(model.gamma_at(0.0)) == 0.0 and float(model.gamma_at(-1e-9)) == 0.0:
        raise ConfigError(
            "the comparison study needs a nonzero exogenous spillover gamma")
    if len(plan.regime_map) != 1:
        raise ConfigError("the comparison study takes exactly one regime rule")
    rule = plan.regime_map[0]
    estimators = [name for name in ("local_linear", "nadaraya_watson")
                  if name in plan.estimators]
    if not estimators:
        raise ConfigError(
            "plan.estimators must include local_linear or nadaraya_watson")
    tau_d = float(model.m_plus(0.0) - model.m_minus(0.0))
    cells, failures = [], []
    separation = {}
    cell_index = 0
    for n in sorted(plan.n_grid):
        h = plan.h_of(n)
        r = rule.radius(n, h, plan.grid_n)
        if r < h:
            failures.append(_failure(rule.label, n, h, r, ConfigError(
                f"comparison regime needs r >= h, got r={r} < h={h}")))
            cell_index += 1
            continue
        try:
            sol = cache.get_or_solve(model, r, plan.grid_n)
            tau_tot = _tau_tot_target(model, r, plan.grid_n, cache)
            nw_pop = _nw_population_value(sol, model, h, plan.kernel)
            cfg = EstimatorConfig(kernel=plan.kernel, h=h)
            seeds = _rep_seeds(plan.seed, "ll_vs_nw", cell_index,
                               plan.replications)
            samples = [draw_sample(sol, model, n, int(s)) for s in seeds]
            if "local_linear" in estimators:
                lls = [local_linear_rdd(s, cfg).tau_hat for s in samples]
                cells.append(_stats_cell(rule.label, "local_linear", "tau_hat",
                                         n, h, r, lls, "tau_d", tau_d))
            if "nadaraya_watson" in estimators:
                nws = [nadaraya_watson_rdd(s, cfg) for s in samples]
                cell = _stats_cell(rule.label, "nadaraya_watson", "tau_hat",
                                   n, h, r, nws, "nw_population", nw_pop,
                                   extra={"tau_d": tau_d, "tau_tot": tau_tot,
                                          "margin_from_tau_d": abs(nw_pop - tau_d)})
                cells.append(cell)
                se = cell["se"]
                separation[str(n)] = {
                    "nw_se_distance_from_tau_d":
                        abs(cell["mean"] - tau_d) / se if se > 0 else math.inf,
                    "nw_se_distance_from_tau_tot":
                        abs(cell["mean"] - tau_tot) / se if se > 0 else math.inf,
                    "predicted_margin": abs(nw_pop - tau_d),
                }
        except RdspillError as err:
            failures.append(_failure(rule.label, n, h, r, err))
        cell_index += 1
    summary = {"n_cells": len(cells), "n_failures": len(failures),
               "nw_separation": separation}
    return ExperimentReport("ll_vs_nw", cells, failures, summary,
                            _provenance(plan))


STUDIES = {
    "phase_transition": run_phase_transition,
    "spillover_consistency": run_spillover_consistency,
    "donut": run_donut_study,
    "ll_vs_nw": run_ll_vs_nw,
}
