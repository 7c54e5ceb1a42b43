"""Continuum fixed point of the spillover model on a grid.

The outcome function solves Y(z) = m_d(z) + delta(z)*mu_d(z) + gamma_d(z)*nu_d(z)
where mu_d averages Y itself over the neighborhood [z-r, z+r] clipped to
[-1, 1] (renormalized near the edges) and nu_d is the neighborhood treated
share, known in closed form. Treatment enters through the regime: assigned at
the cutoff (d(z) = 1{z >= 0}, with d(0) = 1), everyone treated, or no one.

Y inherits a single jump at the cutoff from m (and from a one-sided gamma);
its size is known from the model, so the solver carries it exactly instead of
smearing it across a grid cell: the quadrature underlying mu treats the cell
straddling 0 one-sidedly, and the jump shows up as a constant offset in the
discrete linear system. The grid stores right limits at 0 (the treated branch).
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import ConfigError, DomainError, SolverError
from .funcspace import ModelSpec, eval_func
from .quadrature import window_integrals, window_matrix

REGIME_KINDS = ("cutoff", "all-treated", "none-treated")

DENSE_TOL = 1e-10
NEUMANN_TOL = 1e-8
DEFAULT_GRID_N = 4001


@dataclass(frozen=True)
class TreatmentRegime:
    kind: str

    def __post_init__(self):
        if self.kind not in REGIME_KINDS:
            raise ConfigError(f"unknown treatment regime {self.kind!r}; expected one of {REGIME_KINDS}")

    def treated(self, z) -> np.ndarray:
        """d(z) under this regime; at the cutoff itself d(0) = 1."""
        z = np.asarray(z, dtype=float)
        if self.kind == "all-treated":
            return np.ones_like(z)
        if self.kind == "none-treated":
            return np.zeros_like(z)
        return (z >= 0.0).astype(float)


CUTOFF = TreatmentRegime("cutoff")
ALL_TREATED = TreatmentRegime("all-treated")
NONE_TREATED = TreatmentRegime("none-treated")


def nu_exact(regime: TreatmentRegime, r: float, z):
    """Treated share of the neighborhood [z-r, z+r] clipped to [-1, 1].

    Closed-form piecewise-linear expression; no quadrature. For the cutoff
    regime at interior points this is the familiar ramp: 1/2 at the cutoff,
    saturating at 0/1 once the neighborhood clears the cutoff, slope 1/(2r)
    in between.
    """
    if r <= 0.0:
        raise ConfigError("neighborhood radius must be positive")
    if r >= 2.0:
        raise ConfigError(f"r={r} degenerate: the neighborhood always covers all of [-1, 1]")
    arr = np.asarray(z, dtype=float)
    if arr.size and (arr.min() < -1.0 - 1e-12 or arr.max() > 1.0 + 1e-12):
        raise DomainError("nu_exact evaluated outside [-1, 1]")
    if regime.kind == "all-treated":
        out = np.ones_like(arr)
    elif regime.kind == "none-treated":
        out = np.zeros_like(arr)
    else:
        lo = np.maximum(arr - r, -1.0)
        hi = np.minimum(arr + r, 1.0)
        out = (np.clip(hi, 0.0, None) - np.clip(lo, 0.0, None)) / (hi - lo)
    if np.ndim(z) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class PopulationSolution:
    grid: np.ndarray
    r: float
    regime: TreatmentRegime
    y: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    solver_report: dict
    model: ModelSpec
    jump_left: float   # Y(0-) - Y(0)
    jump_right: float  # Y(0+) - Y(0)

    def __post_init__(self):
        for name in ("grid", "y", "mu", "nu"):
            getattr(self, name).flags.writeable = False

    @property
    def i0(self) -> int:
        return len(self.grid) // 2

    def interp(self, z) -> np.ndarray:
        """Linear interpolation of y, one-sided in the two cells at the cutoff."""
        z = np.asarray(z, dtype=float)
        out = np.interp(z, self.grid, self.y)
        i0 = self.i0
        dz = self.grid[1] - self.grid[0]
        if self.jump_left != 0.0:
            mask = (z >= self.grid[i0 - 1]) & (z < 0.0)
            if np.any(mask):
                t = (z[mask] - self.grid[i0 - 1]) / dz
                out[mask] = (1 - t) * self.y[i0 - 1] + t * (self.y[i0] + self.jump_left)
        if self.jump_right != 0.0:
            mask = (z > 0.0) & (z <= self.grid[i0 + 1])
            if np.any(mask):
                t = (z[mask] - self.grid[i0]) / dz
                out[mask] = (1 - t) * (self.y[i0] + self.jump_right) + t * self.y[i0 + 1]
        return out

    def to_csv(self, path_or_buf) -> None:
        header = "z,y,mu,nu"
        data = np.column_stack([self.grid, self.y, self.mu, self.nu])
        if hasattr(path_or_buf, "write"):
            np.savetxt(path_or_buf, data, delimiter=",", header=header, comments="", fmt="%.17g")
        else:
            with open(path_or_buf, "w", encoding="utf-8") as fh:
                np.savetxt(fh, data, delimiter=",", header=header, comments="", fmt="%.17g")

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def _jumps(model: ModelSpec, regime: TreatmentRegime) -> tuple[float, float]:
    """Jump of the right-hand side (hence of Y) at the cutoff.

    The grid stores the value with m on the treated branch (cutoff regime) and
    gamma active (gamma is left-continuous when one-sided). nu is continuous,
    so only m and a one-sided gamma can jump.
    """
    jump_left = 0.0
    if regime.kind == "cutoff":
        jump_left = eval_func(model.m_minus, 0.0) - eval_func(model.m_plus, 0.0)
    jump_right = 0.0
    if model.gamma_one_sided:
        # gamma switches off to the right of 0; its stored value at 0 is gamma(0)
        nu0 = {"cutoff": 0.5, "all-treated": 1.0, "none-treated": 0.0}[regime.kind]
        jump_right = -eval_func(model.gamma, 0.0) * nu0
    return jump_left, jump_right


def _model_rhs(model: ModelSpec, regime: TreatmentRegime, grid: np.ndarray, r: float):
    if regime.kind == "cutoff":
        m_vals = np.where(grid >= 0.0,
                          eval_func(model.m_plus, grid),
                          eval_func(model.m_minus, grid))
    elif regime.kind == "all-treated":
        m_vals = np.asarray(eval_func(model.m_plus, grid))
    else:
        m_vals = np.asarray(eval_func(model.m_minus, grid))
    nu_vals = np.asarray(nu_exact(regime, r, grid))
    gamma_vals = np.asarray(model.gamma_at(grid))
    return m_vals + gamma_vals * nu_vals, nu_vals


def solve_population(model: ModelSpec, r: float, regime: TreatmentRegime,
                     grid_n: int = DEFAULT_GRID_N,
                     method: Literal["dense", "neumann"] = "dense") -> PopulationSolution:
    """Solve the fixed point on a uniform grid of grid_n points over [-1, 1].

    dense: one linear solve of the discretized (I - G) system, residual
    checked against 1e-10. neumann: contraction iteration with certified
    factor delta_bar, stopped when the increment drops below
    (1 - delta_bar)*1e-8, which bounds the distance to the fixed point by 1e-8.
    """
    if grid_n % 2 == 0 or grid_n < 201:
        raise ConfigError(f"grid_n must be odd and >= 201, got {grid_n}")
    if method not in ("dense", "neumann"):
        raise ConfigError(f"unknown solver method {method!r}")
    if r <= 0 or r >= 2:
        raise ConfigError(f"radius r={r} outside (0, 2)")
    grid = np.linspace(-1.0, 1.0, grid_n)
    dz = grid[1] - grid[0]
    if r <= 4 * dz:
        raise ConfigError(
            f"grid too coarse: r={r} needs more than 4 grid spacings ({4 * dz:.6g}); increase grid_n"
        )
    i0 = grid_n // 2
    rhs, nu_vals = _model_rhs(model, regime, grid, r)
    jump_left, jump_right = _jumps(model, regime)
    delta_vals = np.asarray(eval_func(model.delta, grid))
    lo = np.maximum(grid - r, -1.0)
    hi = np.minimum(grid + r, 1.0)
    lengths = hi - lo
    delta_bar = model.delta_bar

    if method == "dense":
        W, wl0, wr0 = window_matrix(grid, lo, hi, i0)
        jump_term = (wl0 * jump_left + wr0 * jump_right) / lengths
        # turn W into (I - delta*avg) in place to keep one N x N array alive
        W /= lengths[:, None]
        W *= -delta_vals[:, None]
        W[np.diag_indices_from(W)] += 1.0
        y = np.linalg.solve(W, rhs + delta_vals * jump_term)
        del W
        mu = window_integrals(y, grid, lo, hi, i0, jump_left, jump_right) / lengths
        iterations = 1
    else:
        if delta_bar >= 1.0:
            raise SolverError("contraction factor >= 1")
        target = (1.0 - delta_bar) * NEUMANN_TOL
        if delta_bar == 0.0:
            cap = 2
        else:
            cap = math.ceil(math.log(NEUMANN_TOL * (1.0 - delta_bar)) / math.log(delta_bar)) + 10
        y = rhs.copy()
        mu = None
        iterations = 0
        for iterations in range(1, cap + 1):
            mu = window_integrals(y, grid, lo, hi, i0, jump_left, jump_right) / lengths
            y_new = rhs + delta_vals * mu
            inc = float(np.max(np.abs(y_new - y)))
            y = y_new
            if inc < target:
                break
        else:
            raise SolverError(
                f"Neumann iteration did not converge within {cap} iterations "
                f"(last increment {inc:.3e}, target {target:.3e})"
            )
        mu = window_integrals(y, grid, lo, hi, i0, jump_left, jump_right) / lengths

    residual = float(np.max(np.abs(y - rhs - delta_vals * mu)))
    tol = DENSE_TOL if method == "dense" else NEUMANN_TOL
    if residual > tol:
        raise SolverError(f"solver residual {residual:.3e} exceeds tolerance {tol:.0e}")
    report = {"method": method, "iterations": iterations, "residual_sup_norm": residual}
    return PopulationSolution(grid=grid, r=float(r), regime=regime, y=y, mu=mu,
                              nu=nu_vals, solver_report=report, model=model,
                              jump_left=jump_left, jump_right=jump_right)


def mu_at(sol: PopulationSolution, z: float):
    """F-average of the solved outcome over [z-r, z+r] clipped to [-1, 1]."""
    arr = np.atleast_1d(np.asarray(z, dtype=float))
    if arr.size and (arr.min() < -1.0 - 1e-12 or arr.max() > 1.0 + 1e-12):
        raise DomainError("mu_at evaluated outside [-1, 1]")
    lo = np.maximum(arr - sol.r, -1.0)
    hi = np.minimum(arr + sol.r, 1.0)
    vals = window_integrals(sol.y, sol.grid, lo, hi, sol.i0,
                            sol.jump_left, sol.jump_right) / (hi - lo)
    if np.ndim(z) == 0:
        return float(vals[0])
    return vals


def true_estimands(model: ModelSpec, r: float, grid_n: int = DEFAULT_GRID_N,
                   method: Literal["dense", "neumann"] = "dense") -> dict:
    """Exact tau_d and the finite-r total effect tau_tot.

    tau_d needs no solve. tau_tot compares the all-treated and none-treated
    fixed points at the cutoff; as r -> 0 it approaches
    (tau_d + gamma(0)) / (1 - delta(0)).
    """
    tau_d = eval_func(model.m_plus, 0.0) - eval_func(model.m_minus, 0.0)
    sol_all = solve_population(model, r, ALL_TREATED, grid_n, method)
    sol_none = solve_population(model, r, NONE_TREATED, grid_n, method)
    i0 = sol_all.i0
    tau_tot = float(sol_all.y[i0] - sol_none.y[i0])
    return {"tau_d": float(tau_d), "tau_tot": tau_tot}
