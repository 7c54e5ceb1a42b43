"""Cutoff estimators: local linear, Nadaraya-Watson, donut, and the
six-regressor local spillover regression with its derived quantities.

All fits are weighted least squares computed through an orthogonalizing
solver (numpy lstsq), never through explicit normal-equation inversion.
Observations with zero kernel weight are dropped before fitting, which makes
the no-influence property exact, and every estimator canonicalizes the row
order first, so estimates are bit-for-bit invariant under permutations of
the input.

The neighbor-mean estimator follows the sample-analog definition: strict
window |Z_j - z| < r, self-exclusion of the evaluation point's own row, and
share weights w_plus(z) = |[z-r, z+r] n [0, inf)| / (2r) with
w_plus + w_minus = 1. Empty neighbor sets contribute zero to their term.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    CollinearityError,
    ConfigError,
    CrossValidationError,
    EstimationError,
    IllPosedError,
    InsufficientSupportError,
    NumericError,
)
from .kernels import KERNEL_NAMES, kernel_values
from .population import CUTOFF, nu_exact
from .sampling import Sample, substream

ILL_POSED_CONDITION = 1e10
POOLING_MODES = ("average", "plus", "minus")


@dataclass(frozen=True)
class EstimatorConfig:
    kernel: str
    h: float
    r: float | None = None
    h_donut: float = 0.0

    def __post_init__(self):
        if self.kernel not in KERNEL_NAMES:
            raise ConfigError(f"unknown kernel {self.kernel!r}; expected one of {KERNEL_NAMES}")
        if not 0.0 < self.h <= 1.0:
            raise ConfigError(f"bandwidth h must be in (0, 1], got {self.h}")
        if self.r is not None and self.r <= 0.0:
            raise ConfigError(f"spillover radius r must be positive, got {self.r}")
        if not 0.0 <= self.h_donut < self.h:
            raise ConfigError(
                f"h_donut must lie in [0, h); got h_donut={self.h_donut}, h={self.h}")

    def to_config(self) -> dict:
        doc = {"kernel": self.kernel, "h": self.h}
        if self.r is not None:
            doc["r"] = self.r
        if self.h_donut:
            doc["h_donut"] = self.h_donut
        return doc

    @classmethod
    def from_config(cls, doc: dict) -> "EstimatorConfig":
        if not isinstance(doc, dict):
            raise ConfigError("estimator config must be a mapping")
        unknown = set(doc) - {"kernel", "h", "r", "h_donut"}
        if unknown:
            raise ConfigError(f"unknown estimator config keys: {sorted(unknown)}")
        missing = {"kernel", "h"} - set(doc)
        if missing:
            raise ConfigError(f"estimator config missing keys: {sorted(missing)}")
        return cls(kernel=doc["kernel"], h=float(doc["h"]),
                   r=float(doc["r"]) if "r" in doc else None,
                   h_donut=float(doc.get("h_donut", 0.0)))


@dataclass(frozen=True)
class RddEstimate:
    beta_plus: tuple[float, float]
    beta_minus: tuple[float, float]
    tau_hat: float
    n_plus: int
    n_minus: int
    min_side_support: int


@dataclass(frozen=True)
class SpilloverEstimate:
    beta_plus: tuple[float, ...]
    beta_minus: tuple[float, ...]
    tau_d_hat: float
    delta_hat: float
    gamma_hat: float
    tau_tot_hat: float | None
    condition_numbers: dict
    mu_hat_at_0: float


def _canonical_order(sample: Sample) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((sample.y, sample.z))
    return sample.z[order], sample.y[order]


def _wls(X: np.ndarray, y: np.ndarray, w: np.ndarray, side: str):
    """Weighted least squares via lstsq on the sqrt-weighted design."""
    sw = np.sqrt(w)
    Xw = X * sw[:, None]
    yw = y * sw
    cond = float(np.linalg.cond(Xw))
    beta, _, rank, _ = np.linalg.lstsq(Xw, yw, rcond=None)
    if rank < X.shape[1]:
        raise NumericError(
            f"singular weighted design on the {side} side "
            f"(rank {rank} < {X.shape[1]}, condition number {cond:.3e})")
    return beta, cond


def _side_split(z: np.ndarray, y: np.ndarray, w: np.ndarray):
    """Positively weighted observations per side; ties at 0 are treated."""
    keep = w > 0.0
    z, y, w = z[keep], y[keep], w[keep]
    plus = z >= 0.0
    return (z[plus], y[plus], w[plus]), (z[~plus], y[~plus], w[~plus]), keep


def _require_linear_support(z_side: np.ndarray, side: str) -> None:
    if z_side.size < 3 or np.unique(z_side).size < 2:
        raise InsufficientSupportError(
            side, f"need >= 3 positively weighted observations with non-identical "
                  f"running-variable values on the {side} side, "
                  f"got {z_side.size} points")


def local_linear_rdd(sample: Sample, cfg: EstimatorConfig) -> RddEstimate:
    """Per-side weighted linear fit of Y on (1, Z); tau from the intercepts."""
    z, y = _canonical_order(sample)
    w = kernel_values(cfg.kernel, z / cfg.h)
    (zp, yp, wp), (zm, ym, wm), _ = _side_split(z, y, w)
    _require_linear_support(zp, "plus")
    _require_linear_support(zm, "minus")
    bp, _ = _wls(np.column_stack([np.ones_like(zp), zp]), yp, wp, "plus")
    bm, _ = _wls(np.column_stack([np.ones_like(zm), zm]), ym, wm, "minus")
    return RddEstimate(
        beta_plus=(float(bp[0]), float(bp[1])),
        beta_minus=(float(bm[0]), float(bm[1])),
        tau_hat=float(bp[0] - bm[0]),
        n_plus=int(zp.size), n_minus=int(zm.size),
        min_side_support=int(min(zp.size, zm.size)),
    )


def nadaraya_watson_rdd(sample: Sample, cfg: EstimatorConfig) -> float:
    """Difference of kernel-weighted outcome means across the cutoff."""
    z, y = _canonical_order(sample)
    w = kernel_values(cfg.kernel, z / cfg.h)
    (zp, yp, wp), (zm, ym, wm), _ = _side_split(z, y, w)
    if zp.size < 1:
        raise InsufficientSupportError("plus", "no positively weighted observations with Z >= 0")
    if zm.size < 1:
        raise InsufficientSupportError("minus", "no positively weighted observations with Z < 0")
    return float(np.sum(wp * yp) / np.sum(wp) - np.sum(wm * ym) / np.sum(wm))


def donut_rdd(sample: Sample, cfg: EstimatorConfig) -> RddEstimate:
    """Local linear fit restricted to h_donut <= |Z|; intercepts extrapolate to 0."""
    z, y = _canonical_order(sample)
    keep = np.abs(z) >= cfg.h_donut
    inner = Sample(z=z[keep], y=y[keep], meta=dict(sample.meta))
    return local_linear_rdd(inner, cfg)


# ------------------------------------------------------------- neighbor mean --


class _NeighborPool:
    """Sorted outcome pool supporting O(log n) window sums."""

    def __init__(self, z: np.ndarray, y: np.ndarray):
        order = np.lexsort((y, z))
        self.z = z[order]
        self.y = y[order]
        self.order = order
        self.cum = np.concatenate([[0.0], np.cumsum(self.y)])
        self.split = int(np.searchsorted(self.z, 0.0, side="left"))  # first treated

    def sorted_pos(self, original_index: np.ndarray) -> np.ndarray:
        inv = np.empty_like(self.order)
        inv[self.order] = np.arange(self.order.size)
        return inv[original_index]

    def window_means(self, targets: np.ndarray, r: float,
                     exclude_pos: np.ndarray | None = None):
        """Per-target treated/untreated neighbor means over |Z_j - t| < r."""
        a = np.searchsorted(self.z, targets - r, side="right")
        b = np.searchsorted(self.z, targets + r, side="left")
        at = np.maximum(a, self.split)
        bu = np.minimum(b, self.split)
        t_cnt = np.maximum(b - at, 0).astype(float)
        u_cnt = np.maximum(bu - a, 0).astype(float)
        t_sum = np.where(b > at, self.cum[b] - self.cum[np.minimum(at, b)], 0.0)
        u_sum = np.where(bu > a, self.cum[np.maximum(bu, a)] - self.cum[a], 0.0)
        if exclude_pos is not None:
            inside = (exclude_pos >= a) & (exclude_pos < b)
            treated = exclude_pos >= self.split
            hit_t = inside & treated
            hit_u = inside & ~treated
            t_sum[hit_t] -= self.y[exclude_pos[hit_t]]
            t_cnt[hit_t] -= 1.0
            u_sum[hit_u] -= self.y[exclude_pos[hit_u]]
            u_cnt[hit_u] -= 1.0
        t_mean = np.divide(t_sum, t_cnt, out=np.zeros_like(t_sum), where=t_cnt > 0)
        u_mean = np.divide(u_sum, u_cnt, out=np.zeros_like(u_sum), where=u_cnt > 0)
        return t_mean, u_mean, t_cnt.astype(int), u_cnt.astype(int)


def _share_weight_plus(z, r: float):
    """w_plus(z) = |[z-r, z+r] n [0, inf)| / (2r), clipped to [0, 1]."""
    return np.clip((np.asarray(z, dtype=float) + r) / (2.0 * r), 0.0, 1.0)


def _mu_values(pool: _NeighborPool, targets: np.ndarray, r: float,
               exclude_pos: np.ndarray | None = None) -> np.ndarray:
    t_mean, u_mean, _, _ = pool.window_means(targets, r, exclude_pos)
    wp = _share_weight_plus(targets, r)
    return wp * t_mean + (1.0 - wp) * u_mean


def mu_hat(sample: Sample, r: float, z: float) -> dict:
    """Share-weighted neighbor mean of Y around z.

    When z coincides with an observed running-variable value, the first such
    observation is excluded as the evaluation point's own row (with
    continuously distributed Z, exact coincidence identifies it uniquely).
    """
    if r <= 0.0:
        raise ConfigError(f"neighborhood radius must be positive, got {r}")
    pool = _NeighborPool(sample.z, sample.y)
    exclude = None
    hit = np.searchsorted(pool.z, z, side="left")
    if hit < pool.z.size and pool.z[hit] == z:
        exclude = np.array([hit])
    targets = np.array([float(z)])
    t_mean, u_mean, t_cnt, u_cnt = pool.window_means(targets, r, exclude)
    wp = float(_share_weight_plus(z, r))
    return {
        "value": float(wp * t_mean[0] + (1.0 - wp) * u_mean[0]),
        "n_plus_neighbors": int(t_cnt[0]),
        "n_minus_neighbors": int(u_cnt[0]),
    }


# --------------------------------------------------- spillover regression --


def _spillover_design(z: np.ndarray, mu_delta: np.ndarray, nu_delta: np.ndarray) -> np.ndarray:
    return np.column_stack([
        np.ones_like(z), z,
        mu_delta, z * mu_delta,
        nu_delta, z * nu_delta,
    ])


def _spillover_regressors(z: np.ndarray, pool: _NeighborPool, r: float,
                          exclude_pos: np.ndarray | None):
    mu = np.broadcast_to(np.asarray(_mu_values(pool, z, r, exclude_pos),
                                    dtype=float), z.shape)
    mu0 = float(_mu_values(pool, np.array([0.0]), r, None)[0])
    nu0 = nu_exact(CUTOFF, r, 0.0)
    nu_delta = np.broadcast_to(
        np.asarray(nu_exact(CUTOFF, r, z), dtype=float) - nu0, z.shape)
    return mu - mu0, nu_delta, mu0


def _fit_spillover_sides(z, y, w, mu_delta, nu_delta):
    """Per-side WLS on the six regressors; falls back to the nested linear
    model when every spillover column is identically zero."""
    keep = w > 0.0
    z, y, w = z[keep], y[keep], w[keep]
    mu_delta, nu_delta = mu_delta[keep], nu_delta[keep]
    out = {}
    for side, mask in (("plus", z >= 0.0), ("minus", z < 0.0)):
        zs, ys, ws = z[mask], y[mask], w[mask]
        mds, nds = mu_delta[mask], nu_delta[mask]
        X = _spillover_design(zs, mds, nds)
        degenerate = not (np.any(mds) or np.any(nds))
        if degenerate:
            _require_linear_support(zs, side)
            beta2, cond = _wls(X[:, :2], ys, ws, side)
            beta = np.concatenate([beta2, np.zeros(4)])
        else:
            if zs.size < 6:
                raise InsufficientSupportError(
                    side, f"need >= 6 positively weighted observations on the "
                          f"{side} side, got {zs.size}")
            sw = np.sqrt(ws)
            cond = float(np.linalg.cond(X * sw[:, None]))
            if not np.isfinite(cond) or cond > ILL_POSED_CONDITION:
                raise IllPosedError(
                    f"spillover design on the {side} side has condition number "
                    f"{cond:.3e}; this typically signals a near-zero direct "
                    f"effect, which makes the neighbor-mean contrast collinear "
                    f"with the running variable", condition_number=cond)
            beta, _ = _wls(X, ys, ws, side)
        out[side] = (beta, cond, int(zs.size))
    return out


def local_spillover_regression(sample: Sample, cfg: EstimatorConfig,
                               pooling: str = "average") -> SpilloverEstimate:
    """Six-regressor WLS per side: (1, Z, mu_delta, Z*mu_delta, nu_delta,
    Z*nu_delta), with the neighbor-mean contrast estimated and the treated
    share supplied in closed form.
    """
    if cfg.r is None:
        raise ConfigError("spillover regression requires cfg.r")
    if pooling not in POOLING_MODES:
        raise ConfigError(f"pooling must be one of {POOLING_MODES}, got {pooling!r}")
    c = 2.0 * cfg.r / cfg.h
    if c >= 2.0:
        raise CollinearityError(
            f"2r/h = {c:.3f} >= 2: the treated-share contrast is a linear "
            f"function of Z on the whole fit window and collinear with it")
    z, y = _canonical_order(sample)
    pool = _NeighborPool(z, y)
    exclude_pos = pool.sorted_pos(np.arange(z.size))
    mu_delta, nu_delta, mu0 = _spillover_regressors(z, pool, cfg.r, exclude_pos)
    w = kernel_values(cfg.kernel, z / cfg.h)
    fits = _fit_spillover_sides(z, y, w, mu_delta, nu_delta)
    bp, cond_p, n_p = fits["plus"]
    bm, cond_m, n_m = fits["minus"]
    tau_d_hat = float(bp[0] - bm[0])
    if pooling == "plus":
        delta_hat, gamma_hat = float(bp[2]), float(bp[4])
    elif pooling == "minus":
        delta_hat, gamma_hat = float(bm[2]), float(bm[4])
    else:
        delta_hat = float((bp[2] + bm[2]) / 2.0)
        gamma_hat = float((bp[4] + bm[4]) / 2.0)
    if abs(1.0 - delta_hat) > 1e-6:
        tau_tot_hat = float((tau_d_hat + gamma_hat) / (1.0 - delta_hat))
    else:
        tau_tot_hat = None
    return SpilloverEstimate(
        beta_plus=tuple(float(v) for v in bp),
        beta_minus=tuple(float(v) for v in bm),
        tau_d_hat=tau_d_hat, delta_hat=delta_hat, gamma_hat=gamma_hat,
        tau_tot_hat=tau_tot_hat,
        condition_numbers={"plus": cond_p, "minus": cond_m},
        mu_hat_at_0=mu0,
    )


def cross_validate_r(sample: Sample, cfg: EstimatorConfig, candidates,
                     folds: int, seed: int) -> dict:
    """K-fold selection of the neighborhood radius, per side.

    Folds are a random seed-determined partition. For each candidate radius
    the spillover regression is fit on the training part (its neighbor pool
    is the training data only) and kernel-weighted squared prediction error
    is accumulated over the held-out part, separately for each side of the
    cutoff. A candidate where any fold fails to fit is infeasible.
    """
    candidates = [float(r) for r in candidates]
    if not candidates:
        raise ConfigError("need at least one candidate radius")
    if folds < 2:
        raise ConfigError(f"cross-validation needs >= 2 folds, got {folds}")
    for r in candidates:
        if not 0.0 < r < cfg.h:
            raise ConfigError(
                f"candidate r={r} outside (0, h={cfg.h}); the fitted ratio "
                f"2r/h must stay below 2")
    z, y = _canonical_order(sample)
    n = z.size
    if folds > n:
        raise CrossValidationError(f"{folds} folds exceed the {n} observations")
    rng = substream(seed, 101)
    fold_id = rng.permutation(n) % folds
    w_all = kernel_values(cfg.kernel, z / cfg.h)

    cv_table = []
    for r in candidates:
        mse = {"plus": 0.0, "minus": 0.0}
        feasible = True
        for k in range(folds):
            test = fold_id == k
            train = ~test
            pool = _NeighborPool(z[train], y[train])
            exclude_pos = pool.sorted_pos(np.arange(int(train.sum())))
            try:
                mu_delta, nu_delta, _ = _spillover_regressors(
                    z[train], pool, r, exclude_pos)
                fits = _fit_spillover_sides(z[train], y[train], w_all[train],
                                            mu_delta, nu_delta)
            except EstimationError:
                feasible = False
                break
            mu_d_test, nu_d_test, _ = _spillover_regressors(z[test], pool, r, None)
            X_test = _spillover_design(z[test], mu_d_test, nu_d_test)
            for side, mask in (("plus", z[test] >= 0.0), ("minus", z[test] < 0.0)):
                beta = fits[side][0]
                resid = y[test][mask] - X_test[mask] @ beta
                mse[side] += float(np.sum(w_all[test][mask] * resid**2))
        cv_table.append({"r": r, "feasible": feasible,
                         "mse_plus": mse["plus"] if feasible else None,
                         "mse_minus": mse["minus"] if feasible else None})
    usable = [row for row in cv_table if row["feasible"]]
    if not usable:
        raise CrossValidationError(
            "no candidate radius admits a full cross-validation fit; "
            "fewer folds or a larger sample is needed")
    r_plus = min(usable, key=lambda row: row["mse_plus"])["r"]
    r_minus = min(usable, key=lambda row: row["mse_minus"])["r"]
    return {"r_plus": r_plus, "r_minus": r_minus, "cv_table": cv_table}


def to_record(estimator: str, cfg: EstimatorConfig, est) -> dict:
    """Uniform JSON-ready record for any estimator output."""
    record = {
        "estimator": estimator,
        "config": cfg.to_config(),
        "coefficients": None,
        "tau_d": None,
        "tau_tot": None,
        "diagnostics": {},
    }
    if isinstance(est, RddEstimate):
        record["coefficients"] = {
            "beta_plus": list(est.beta_plus), "beta_minus": list(est.beta_minus)}
        record["tau_d"] = est.tau_hat
        record["diagnostics"] = {
            "n_plus": est.n_plus, "n_minus": est.n_minus,
            "min_side_support": est.min_side_support}
    elif isinstance(est, SpilloverEstimate):
        record["coefficients"] = {
            "beta_plus": list(est.beta_plus), "beta_minus": list(est.beta_minus)}
        record["tau_d"] = est.tau_d_hat
        record["tau_tot"] = est.tau_tot_hat
        record["diagnostics"] = {
            "delta_hat": est.delta_hat, "gamma_hat": est.gamma_hat,
            "tau_tot_defined": est.tau_tot_hat is not None,
            "condition_numbers": est.condition_numbers,
            "mu_hat_at_0": est.mu_hat_at_0}
    elif isinstance(est, float):
        record["tau_d"] = est
    else:
        raise ConfigError(f"unknown estimate type {type(est).__name__}")
    return record
