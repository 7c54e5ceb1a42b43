"""Limit objects of the intermediate regime r ~ h and the closed-form tau_star.

When the spillover radius and the bandwidth shrink at the same rate
(c = 2r/h fixed), the local linear estimator converges to a value strictly
between the direct effect tau_d and the total effect tau_tot. Everything
needed to compute it lives at the scale a = z/r and depends on the model only
through (tau_d, delta(0), gamma(0)):

* lambda(a): the response of the fixed point to the treatment step, solved
  from (I - delta0*G) lambda = 1{a >= 0} with G the unit-radius moving mean
  on the whole line. lambda jumps by exactly 1 at a = 0 and approaches 0 /
  1/(1-delta0) at -inf / +inf; the table solver pads with those constants and
  carries the jump exactly.
* lambda_tilde(a) = lambda(a) - 1{a >= 0}: the same response with the direct
  step removed. It is continuous and also absorbs the exogenous channel: the
  neighborhood-share ramp response equals lambda_tilde/delta0, so no separate
  table is needed.
* profile of the endogenous regressor at bandwidth scale x = z/h: the
  neighborhood average of the solved outcome moves by
      P(x) = min(1, |x|/c) * [delta0*tau_d*D_lambda(x) + gamma0*D_tilde(x)]
  where D_* are differences of window averages of the table over the gained
  and lost neighborhood pieces.
* profile of the treated-share regressor: V(x) = clip(x/c, -1/2, 1/2).

tau_star applies the one-sided local linear intercept functional to those
profiles on each side of the cutoff and adds the direct effect.
"""
from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, NumericError
from .kernels import KERNEL_NAMES, kernel_values, one_sided_moment
from .quadrature import window_integrals, window_matrix

DEFAULT_A = 12.0
DEFAULT_TABLE_N = 4801
TAIL_BOUND_LIMIT = 1e-4


def _tail_bound(delta0: float, distance: float) -> float:
    """Geometric tail of the Neumann series at `distance` inside the table."""
    d = abs(delta0)
    if d == 0.0:
        return 0.0
    if distance <= 0:
        return math.inf
    return d**distance / (1.0 - d)


@dataclass(frozen=True)
class LambdaTable:
    delta0: float
    a_grid: np.ndarray
    values: np.ndarray
    truncation_A: float
    residual: float

    def __post_init__(self):
        self.a_grid.flags.writeable = False
        self.values.flags.writeable = False

    @property
    def i0(self) -> int:
        return len(self.a_grid) // 2

    @property
    def plateau(self) -> float:
        """Asymptotic value at +inf, 1/(1 - delta0)."""
        return 1.0 / (1.0 - self.delta0)

    def tail_bound(self, a_abs: float) -> float:
        return _tail_bound(self.delta0, self.truncation_A - a_abs)

    def point(self, a):
        """lambda pointwise; right-continuous at 0, asymptotic beyond +-A."""
        arr = np.asarray(a, dtype=float)
        grid, vals, A, i0 = self.a_grid, self.values, self.truncation_A, self.i0
        out = np.interp(arr, grid, vals)
        out = np.where(arr <= -A, 0.0, out)
        out = np.where(arr >= A, self.plateau, out)
        mask = (arr >= grid[i0 - 1]) & (arr < 0.0)
        if np.any(mask):
            t = (arr[mask] - grid[i0 - 1]) / (grid[1] - grid[0])
            out = np.array(out, copy=True)
            out[mask] = (1 - t) * vals[i0 - 1] + t * (vals[i0] - 1.0)
        return out if np.ndim(a) else float(out)

    def interval_average(self, lo: float, hi: float) -> float:
        """Mean of lambda over [lo, hi]; pieces beyond +-A use the asymptotes."""
        if hi <= lo:
            raise ConfigError("interval_average requires lo < hi")
        A = self.truncation_A
        # pieces beyond +A contribute the plateau, beyond -A contribute 0
        total = max(0.0, hi - max(lo, A)) * self.plateau
        lo_in, hi_in = max(lo, -A), min(hi, A)
        if lo_in < hi_in:
            total += float(window_integrals(self.values, self.a_grid,
                                            np.array([lo_in]), np.array([hi_in]),
                                            self.i0, -1.0, 0.0)[0])
        return total / (hi - lo)

    def to_csv(self, path_or_buf) -> None:
        data = np.column_stack([self.a_grid, self.values])
        if hasattr(path_or_buf, "write"):
            np.savetxt(path_or_buf, data, delimiter=",", header="a,lambda", comments="", fmt="%.17g")
        else:
            with open(path_or_buf, "w", encoding="utf-8") as fh:
                np.savetxt(fh, data, delimiter=",", header="a,lambda", comments="", fmt="%.17g")


def build_lambda_table(delta0: float, A: float = DEFAULT_A,
                       grid_n: int = DEFAULT_TABLE_N) -> LambdaTable:
    """Solve (I - delta0*G) lambda = 1{a>=0} densely on [-A, A].

    The moving mean is over the whole line; window mass outside the table is
    replaced by the known asymptotic constants. The cutoff jump (size exactly
    1) is carried through the quadrature instead of being smeared over a cell.
    """
    if not abs(delta0) < 1.0:
        raise DomainError(f"|delta0| must be < 1, got {delta0}")
    if A < 8.0:
        raise ConfigError(f"truncation A must be >= 8, got {A}")
    if grid_n < 1601:
        raise ConfigError(f"table grid_n must be >= 1601, got {grid_n}")
    if grid_n % 2 == 0:
        raise ConfigError("table grid_n must be odd so a=0 is a grid point")
    a = np.linspace(-A, A, grid_n)
    i0 = grid_n // 2
    ind = (a >= 0.0).astype(float)
    plateau = 1.0 / (1.0 - delta0)
    lo = np.maximum(a - 1.0, -A)
    hi = np.minimum(a + 1.0, A)
    W, wl0, _ = window_matrix(a, lo, hi, i0)
    pad_right = np.maximum(a + 1.0 - A, 0.0)
    # operator value = (inside integral + jump term + right overhang * plateau)/2
    rhs = ind + delta0 * (pad_right * plateau - wl0) / 2.0
    M = W
    M *= -delta0 / 2.0
    M[np.diag_indices_from(M)] += 1.0
    lam = np.linalg.solve(M, rhs)
    del M
    smoothed = (window_integrals(lam, a, lo, hi, i0, -1.0, 0.0)
                + pad_right * plateau) / 2.0
    residual = float(np.max(np.abs(lam - ind - delta0 * smoothed)))
    if 0.0 <= delta0 < 1.0 and np.any(np.diff(lam) < -1e-8):
        warnings.warn("lambda table is not monotone nondecreasing", RuntimeWarning)
    return LambdaTable(delta0=float(delta0), a_grid=a, values=lam,
                       truncation_A=float(A), residual=residual)


def adequate_table(delta0: float, c: float, A: float = DEFAULT_A,
                   grid_n: int = DEFAULT_TABLE_N) -> LambdaTable:
    """Build a table whose truncation tail is below 1e-4 at the largest |a| used.

    The widest window for ratio c reaches |a| = 1 + 2/c; A doubles until the
    geometric tail bound clears the threshold. Node spacing is kept roughly
    constant (capped at 6401 points) so rebuilds stay affordable.
    """
    if not 0.0 < c < 2.0:
        raise ConfigError(f"c must be in (0, 2), got {c}")
    a_max = 1.0 + 2.0 / c
    da = 2 * A / (grid_n - 1)
    while _tail_bound(delta0, A - a_max) >= TAIL_BOUND_LIMIT:
        A *= 2.0
    n = int(round(2 * A / da)) + 1
    if n > 6401:
        n = 6401
    if n % 2 == 0:
        n += 1
    n = max(n, 1601)
    return build_lambda_table(delta0, A, n)


def _indicator_average(lo: float, hi: float) -> float:
    """Mean of 1{a >= 0} over [lo, hi]."""
    return (max(hi, 0.0) - max(lo, 0.0)) / (hi - lo)


def lambda_pm(x: float, c: float, table: LambdaTable) -> dict:
    """Window averages of lambda (and lambda - indicator) at bandwidth scale x.

    The neighborhood of z = xh gains [max(1, 2x/c - 1), 1 + 2x/c] and loses
    [-1, min(1, 2x/c - 1)] relative to the neighborhood of the cutoff, in
    units of a = z/r. Degenerate x = 0 follows the interval definitions:
    point evaluation at a = 1 on the gained side, the full [-1, 1] mean on
    the lost side.
    """
    if not 0.0 < c < 2.0:
        raise ConfigError(f"c must be in (0, 2), got {c}")
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        lam_plus = table.point(1.0)
        lam_minus = table.interval_average(-1.0, 1.0)
        ind_plus, ind_minus = 1.0, 0.5
    else:
        g_lo, g_hi = max(1.0, 2 * x / c - 1.0), 1.0 + 2 * x / c
        l_hi = min(1.0, 2 * x / c - 1.0)
        lam_plus = table.interval_average(g_lo, g_hi)
        lam_minus = table.interval_average(-1.0, l_hi)
        ind_plus = _indicator_average(g_lo, g_hi)
        ind_minus = _indicator_average(-1.0, l_hi)
    return {
        "lam_plus": lam_plus,
        "lam_minus": lam_minus,
        "lam_tilde_plus": lam_plus - ind_plus,
        "lam_tilde_minus": lam_minus - ind_minus,
    }


def _gained_lost(x: float, c: float) -> tuple[tuple[float, float], tuple[float, float]]:
    """Neighborhood pieces gained/lost at z = xh relative to z = 0, in a-units."""
    ctr = 2 * x / c
    if x >= 0:
        return (max(1.0, ctr - 1.0), ctr + 1.0), (-1.0, min(1.0, ctr - 1.0))
    return (ctr - 1.0, min(-1.0, ctr + 1.0)), (max(-1.0, ctr + 1.0), 1.0)


def mu_profile(x: np.ndarray, c: float, table: LambdaTable,
               tau_d: float, gamma0: float) -> np.ndarray:
    """Limit drift of the endogenous regressor, already scaled by delta0.

    Returns min(1,|x|/c) * [delta0*tau_d*D_lambda + gamma0*D_lambda_tilde];
    the delta0 factor multiplying tau_d is absorbed through
    lambda_tilde = delta0 * (ramp response), keeping delta0 = 0 regular.
    """
    delta0 = table.delta0
    out = np.zeros_like(np.asarray(x, dtype=float))
    for idx, xv in enumerate(np.atleast_1d(x)):
        if xv == 0.0:
            continue
        (g_lo, g_hi), (l_lo, l_hi) = _gained_lost(float(xv), c)
        lam_g = table.interval_average(g_lo, g_hi)
        lam_l = table.interval_average(l_lo, l_hi)
        til_g = lam_g - _indicator_average(g_lo, g_hi)
        til_l = lam_l - _indicator_average(l_lo, l_hi)
        share = min(1.0, abs(float(xv)) / c)
        out.flat[idx] = share * (delta0 * tau_d * (lam_g - lam_l)
                                 + gamma0 * (til_g - til_l))
    return out if np.ndim(x) else float(out)


def nu_profile(x, c: float) -> np.ndarray:
    """Limit drift of the treated-share regressor: clip(x/c, -1/2, 1/2)."""
    return np.clip(np.asarray(x, dtype=float) / c, -0.5, 0.5)


# ---------------------------------------------------------------- moments --

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _piecewise_gl(f, breaks: list[float], nodes: int) -> float:
    if nodes not in _GL_CACHE:
        _GL_CACHE[nodes] = np.polynomial.legendre.leggauss(nodes)
    xs, ws = _GL_CACHE[nodes]
    total = 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        if hi <= lo:
            continue
        mid, half = (lo + hi) / 2.0, (hi - lo) / 2.0
        total += half * float(np.sum(ws * f(mid + half * xs)))
    return total


def _side_breaks(c: float, side: int) -> list[float]:
    """Integration breakpoints: profile kinks at |x| = c/2 and |x| = c."""
    pts = sorted({0.0, min(c / 2.0, 1.0), min(c, 1.0), 1.0})
    if side > 0:
        return pts
    return [-p for p in reversed(pts)]


@dataclass(frozen=True)
class MomentSet:
    """One-sided kernel moments and profile moments at ratio c = 2r/h.

    gamma_ps[(p, s)]            = int_0^1 x^p K(x)^s dx
    Lambda_plus[(p, q, s)]      = int_0^1 x^p [share * D_lambda]^q K^s dx
    Lambda_minus[(p, q, s)]     = the same integral over [-1, 0]
    LambdaTilde_plus/minus      = likewise with D_lambda_tilde
    Gamma_plus/minus            = likewise with the treated-share profile V
    phi[(p, q, r, s)]           = int_0^1 x^p P(x)^q V(x)^r K^s dx, where P is
                                  the model-scaled endogenous profile (needs
                                  tau_d, gamma0; empty when not supplied)
    """

    kernel: str
    c: float
    gamma_ps: dict
    Lambda_plus: dict
    Lambda_minus: dict
    LambdaTilde_plus: dict
    LambdaTilde_minus: dict
    Gamma_plus: dict
    Gamma_minus: dict
    phi: dict

    def to_csv(self, path_or_buf) -> None:
        rows = ["map,p,q,r,s,value"]
        for (p, s), v in sorted(self.gamma_ps.items()):
            rows.append(f"gamma,{p},,,{s},{v!r}")
        named = [("Lambda_plus", self.Lambda_plus), ("Lambda_minus", self.Lambda_minus),
                 ("LambdaTilde_plus", self.LambdaTilde_plus),
                 ("LambdaTilde_minus", self.LambdaTilde_minus),
                 ("Gamma_plus", self.Gamma_plus), ("Gamma_minus", self.Gamma_minus)]
        for name, mp in named:
            for (p, q, s), v in sorted(mp.items()):
                rows.append(f"{name},{p},{q},,{s},{v!r}")
        for (p, q, r, s), v in sorted(self.phi.items()):
            rows.append(f"phi,{p},{q},{r},{s},{v!r}")
        text = "\n".join(rows) + "\n"
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w", encoding="utf-8") as fh:
                fh.write(text)


def compute_moments(table: LambdaTable, c: float, kernel: str,
                    model_at_0: dict | None = None, gl_nodes: int = 32) -> MomentSet:
    """Assemble the moment maps by piecewise Gauss-Legendre quadrature."""
    if kernel not in KERNEL_NAMES:
        raise ConfigError(f"unknown kernel {kernel!r}")
    if not 0.0 < c < 2.0:
        raise ConfigError(f"c must be in (0, 2), got {c}")
    gamma_ps = {(p, s): one_sided_moment(kernel, p, s)
                for p in range(5) for s in (1, 2)}

    def lam_diff(xs, tilde: bool):
        out = np.zeros_like(xs)
        for i, xv in enumerate(xs):
            (g_lo, g_hi), (l_lo, l_hi) = _gained_lost(float(xv), c)
            d = table.interval_average(g_lo, g_hi) - table.interval_average(l_lo, l_hi)
            if tilde:
                d -= _indicator_average(g_lo, g_hi) - _indicator_average(l_lo, l_hi)
            out[i] = min(1.0, abs(float(xv)) / c) * d
        return out

    def moment_maps(profile_fn):
        plus, minus = {}, {}
        for side, target in ((1, plus), (-1, minus)):
            breaks = _side_breaks(c, side)
            for p in range(3):
                for q in (1, 2):
                    for s in (1, 2):
                        target[(p, q, s)] = _piecewise_gl(
                            lambda xs: xs**p * profile_fn(xs)**q * kernel_values(kernel, xs)**s,
                            breaks, gl_nodes)
        return plus, minus

    Lp, Lm = moment_maps(lambda xs: lam_diff(xs, tilde=False))
    Tp, Tm = moment_maps(lambda xs: lam_diff(xs, tilde=True))
    Gp, Gm = moment_maps(lambda xs: nu_profile(xs, c))

    phi: dict = {}
    if model_at_0 is not None:
        tau_d = float(model_at_0["tau_d"])
        gamma0 = float(model_at_0["gamma0"])

        def pmu(xs):
            return mu_profile(xs, c, table, tau_d, gamma0)

        breaks = _side_breaks(c, 1)
        for p in range(3):
            for q in range(3):
                for r in range(3):
                    if q + r > 2:
                        continue
                    for s in (1,):
                        phi[(p, q, r, s)] = _piecewise_gl(
                            lambda xs: xs**p * pmu(xs)**q * nu_profile(xs, c)**r
                            * kernel_values(kernel, xs)**s,
                            breaks, gl_nodes)

    return MomentSet(kernel=kernel, c=float(c), gamma_ps=gamma_ps,
                     Lambda_plus=Lp, Lambda_minus=Lm,
                     LambdaTilde_plus=Tp, LambdaTilde_minus=Tm,
                     Gamma_plus=Gp, Gamma_minus=Gm, phi=phi)


# ---------------------------------------------------------------- tau_star --


def _intercept_combo(kernel: str, plus_0, plus_1, minus_0, minus_1) -> float:
    """Difference of the two one-sided local linear intercept functionals.

    Given the per-side integrals of (profile * K) and (x * profile * K), the
    population local linear intercept bias on the plus side is
    (g21*I0 - g11*I1)/den and on the minus side (g21*I0m + g11*I1m)/den.
    """
    g01 = one_sided_moment(kernel, 0, 1)
    g11 = one_sided_moment(kernel, 1, 1)
    g21 = one_sided_moment(kernel, 2, 1)
    den = g01 * g21 - g11 * g11
    if abs(den) < 1e-14:
        raise NumericError(f"degenerate kernel moments for {kernel!r}: g01*g21 - g11^2 = {den}")
    plus = g21 * plus_0 - g11 * plus_1
    minus = g21 * minus_0 + g11 * minus_1
    return (plus - minus) / den


def tau_star(model_at_0: dict, c: float, kernel: str,
             table: LambdaTable | None = None, gl_nodes: int = 32) -> float:
    """Intermediate-regime limit of the local linear RDD estimand.

    model_at_0 carries {tau_d, delta0, gamma0}. The table is rebuilt with a
    doubled truncation when its tail bound is too large for this c; pass a
    pre-built adequate table to skip that work.
    """
    if not 0.0 < c < 2.0:
        raise ConfigError(f"c must be in (0, 2), got {c}")
    tau_d = float(model_at_0["tau_d"])
    delta0 = float(model_at_0["delta0"])
    gamma0 = float(model_at_0["gamma0"])
    if table is None or table.delta0 != delta0 \
            or table.tail_bound(1.0 + 2.0 / c) >= TAIL_BOUND_LIMIT:
        table = adequate_table(delta0, c)

    def pmu(xs):
        return mu_profile(xs, c, table, tau_d, gamma0)

    def vprof(xs):
        return nu_profile(xs, c)

    def side_ints(profile, side):
        breaks = _side_breaks(c, side)
        i0 = _piecewise_gl(lambda xs: profile(xs) * kernel_values(kernel, xs), breaks, gl_nodes)
        i1 = _piecewise_gl(lambda xs: xs * profile(xs) * kernel_values(kernel, xs), breaks, gl_nodes)
        return i0, i1

    mu_p0, mu_p1 = side_ints(pmu, 1)
    mu_m0, mu_m1 = side_ints(pmu, -1)
    nu_p0, nu_p1 = side_ints(vprof, 1)
    nu_m0, nu_m1 = side_ints(vprof, -1)
    endo = _intercept_combo(kernel, mu_p0, mu_p1, mu_m0, mu_m1)
    exo = _intercept_combo(kernel, nu_p0, nu_p1, nu_m0, nu_m1)
    return tau_d + endo + gamma0 * exo


def corollary_bounds_check(tau_d: float, tau_star_value: float, tau_tot: float,
                           delta0: float, gamma0: float) -> str:
    """Sign-pattern ordering of the three estimands.

    With aligned signs of tau_d and gamma(0) and positive delta(0) the chain
    0 < tau_d < tau_* < tau_tot (or its negative mirror) must hold; negative
    delta(0) reverses the inner orderings. Zero signs are degenerate.
    """
    s = math.copysign(1.0, tau_d) if tau_d != 0 else 0.0
    sg = math.copysign(1.0, gamma0) if gamma0 != 0 else 0.0
    if s == 0.0 or sg == 0.0 or s != sg or delta0 == 0.0:
        return "preconditions-unmet"
    if delta0 > 0:
        if 0 < tau_d < tau_star_value < tau_tot:
            return "ordered-case-1"
        if tau_tot < tau_star_value < tau_d < 0:
            return "ordered-case-2"
    else:
        if tau_d > tau_star_value > tau_tot > 0:
            return "ordered-case-1"
        if tau_d < tau_star_value < tau_tot < 0:
            return "ordered-case-2"
    return "violated"
