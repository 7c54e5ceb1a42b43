import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdspill import asymptotics as asy
from rdspill.asymptotics import (
    adequate_table,
    build_lambda_table,
    compute_moments,
    corollary_bounds_check,
    lambda_pm,
    tau_star,
)
from rdspill.errors import ConfigError, DomainError, NumericError
from rdspill.population import CUTOFF, nu_exact

BENCH = {"tau_d": 1.0, "delta0": 0.4, "gamma0": 0.5}

# Independent anchor for the benchmark model at c = 1 (triangular kernel):
# the population fixed point solved on a fine grid, run through weighted
# local linear fits on both sides with h = 0.1 and r = h/2. The value is
# bandwidth-independent for this model because its baselines are linear.
POP_ANCHOR_C1 = 1.160983


def _riemann_avg(tab, lo, hi, n=40000):
    """Midpoint-rule average of the table, split at the jump point."""
    total = 0.0
    for a, b in ((lo, min(hi, 0.0)), (max(lo, 0.0), hi)):
        if b <= a:
            continue
        mids = np.linspace(a, b, n + 1)[:-1] + (b - a) / (2 * n)
        total += (b - a) * float(np.mean(tab.point(mids)))
    return total / (hi - lo)


@pytest.fixture(scope="module")
def tab04():
    return build_lambda_table(0.4, A=8.0, grid_n=1601)


@pytest.fixture(scope="module")
def tab0():
    return build_lambda_table(0.0, A=8.0, grid_n=1601)


@pytest.fixture(scope="module")
def tab04_c1():
    # adequate for c = 1 at delta0 = 0.4: needs A above roughly 13.6
    return adequate_table(0.4, 1.0, A=8.0, grid_n=1601)


class TestBuildLambdaTable:
    def test_validation(self):
        with pytest.raises(DomainError):
            build_lambda_table(1.0)
        with pytest.raises(DomainError):
            build_lambda_table(-1.3)
        with pytest.raises(ConfigError):
            build_lambda_table(0.4, A=7.9)
        with pytest.raises(ConfigError):
            build_lambda_table(0.4, grid_n=801)
        with pytest.raises(ConfigError):
            build_lambda_table(0.4, A=8.0, grid_n=1602)

    def test_residual_small(self, tab04):
        assert tab04.residual <= 1e-8

    def test_jump_value_at_zero(self, tab04):
        # right limit at 0 is the midpoint of the two asymptotes plus half
        # the unit jump: (1/(1-d0) + 1)/2
        assert tab04.values[tab04.i0] == pytest.approx((1 / 0.6 + 1) / 2, abs=1e-6)

    def test_delta0_zero_is_indicator(self, tab0):
        ind = (tab0.a_grid >= 0).astype(float)
        assert np.max(np.abs(tab0.values - ind)) < 1e-12
        assert tab0.residual < 1e-12

    def test_sum_identity(self, tab04):
        # lambda(a) + lambda(-a) = 1/(1 - delta0) away from the jump point
        n = tab04.i0
        s = tab04.values[n + 1:] + tab04.values[:n][::-1]
        assert np.max(np.abs(s - 1 / 0.6)) < 1e-8

    def test_monotone_for_positive_delta0(self, tab04):
        assert np.all(np.diff(tab04.values) > -1e-10)

    def test_asymptotes(self, tab04):
        assert tab04.values[0] == pytest.approx(0.0, abs=1e-4)
        assert tab04.values[-1] == pytest.approx(1 / 0.6, abs=1e-4)

    def test_tail_bound_formula(self, tab04):
        a = tab04.truncation_A - 2.0
        assert tab04.tail_bound(a) == pytest.approx(0.4**2 / 0.6)

    def test_negative_delta0_solves(self):
        tab = build_lambda_table(-0.5, A=8.0, grid_n=1601)
        assert tab.residual <= 1e-8
        assert tab.values[-1] == pytest.approx(1 / 1.5, abs=1e-4)

    def test_left_limit_at_zero(self, tab04):
        # the jump has size exactly 1, so the left limit sits 1 below
        left = tab04.point(-1e-12)
        assert left == pytest.approx(tab04.values[tab04.i0] - 1.0, abs=1e-9)

    def test_csv_roundtrip(self, tab04, tmp_path):
        path = tmp_path / "lambda.csv"
        tab04.to_csv(path)
        arr = np.loadtxt(path, delimiter=",", skiprows=1)
        assert arr.shape == (len(tab04.a_grid), 2)
        np.testing.assert_allclose(arr[:, 1], tab04.values, rtol=1e-12)


class TestIntervalAverage:
    def test_matches_fine_riemann(self, tab04):
        rng = np.random.default_rng(7)
        for _ in range(20):
            lo = rng.uniform(-9.0, 2.0)
            hi = lo + rng.uniform(0.05, 4.0)
            ref = _riemann_avg(tab04, lo, hi)
            assert tab04.interval_average(lo, hi) == pytest.approx(ref, abs=1e-5)

    @given(lo=st.floats(-20, 19), width=st.floats(0.01, 8))
    @settings(max_examples=30, deadline=None)
    def test_bounded_by_range(self, lo, width):
        tab = _SHARED["tab"]
        avg = tab.interval_average(lo, lo + width)
        assert -1e-9 <= avg <= tab.plateau + 1e-9

    def test_rejects_empty(self, tab04):
        with pytest.raises(ConfigError):
            tab04.interval_average(1.0, 1.0)


# hypothesis can't take a fixture argument; share one small table instead
_SHARED = {}


def setup_module(module):
    _SHARED["tab"] = build_lambda_table(0.4, A=8.0, grid_n=1601)


class TestLambdaPm:
    def test_x_zero_conventions(self, tab04_c1):
        out = lambda_pm(0.0, 1.0, tab04_c1)
        assert out["lam_plus"] == pytest.approx(tab04_c1.point(1.0), abs=1e-12)
        assert out["lam_minus"] == pytest.approx(
            tab04_c1.interval_average(-1.0, 1.0), abs=1e-12)
        assert out["lam_tilde_plus"] == pytest.approx(out["lam_plus"] - 1.0)

    def test_delta0_zero_plus_is_one(self, tab0):
        for x in (0.0, 0.25, 0.7, 1.0):
            out = lambda_pm(x, 1.0, tab0)
            assert out["lam_plus"] == pytest.approx(1.0, abs=1e-12)
            assert out["lam_tilde_plus"] == pytest.approx(0.0, abs=1e-12)
            assert out["lam_tilde_minus"] == pytest.approx(0.0, abs=1e-12)

    def test_validation(self, tab04):
        with pytest.raises(ConfigError):
            lambda_pm(0.5, 2.0, tab04)
        with pytest.raises(ConfigError):
            lambda_pm(0.5, 0.0, tab04)
        with pytest.raises(DomainError):
            lambda_pm(1.5, 1.0, tab04)
        with pytest.raises(DomainError):
            lambda_pm(-0.1, 1.0, tab04)

    def test_refinement_oracle(self, tab04_c1):
        # window averages recomputed by a 10x-refined midpoint rule
        for x, c in [(0.3, 1.0), (0.8, 0.5), (0.05, 1.4), (1.0, 1.0)]:
            out = lambda_pm(x, c, tab04_c1)
            g_lo, g_hi = max(1.0, 2 * x / c - 1.0), 1.0 + 2 * x / c
            l_hi = min(1.0, 2 * x / c - 1.0)
            for key, (lo, hi) in (("lam_plus", (g_lo, g_hi)),
                                  ("lam_minus", (-1.0, l_hi))):
                ref = _riemann_avg(tab04_c1, lo, hi, n=16000)
                assert out[key] == pytest.approx(ref, abs=1e-5), (key, x, c)

    def test_monotone_in_x(self, tab04_c1):
        # the gained window slides right toward the plateau, the lost window
        # is capped; for positive delta0 the plus average must not decrease
        xs = np.linspace(0.0, 1.0, 21)
        vals = [lambda_pm(float(x), 1.0, tab04_c1)["lam_plus"] for x in xs]
        assert np.all(np.diff(vals) > -1e-9)


class TestTauStar:
    def test_benchmark_anchor(self, tab04_c1):
        ts = tau_star(BENCH, 1.0, "triangular", tab04_c1)
        assert ts == pytest.approx(POP_ANCHOR_C1, abs=5e-4)

    def test_between_direct_and_total(self, tab04_c1):
        ts = tau_star(BENCH, 1.0, "triangular", tab04_c1)
        assert 1.0 < ts < 2.5

    def test_curve_monotone_decreasing_in_c(self):
        cs = [0.2, 0.4, 1.0, 1.5, 1.9]
        tab = adequate_table(0.4, min(cs), A=8.0, grid_n=1601)
        vals = [tau_star(BENCH, c, "triangular", tab) for c in cs]
        assert np.all(np.diff(vals) < 0)
        assert vals[0] < 2.5 and vals[-1] > 1.0

    def test_delta0_zero_closed_form(self, tab0):
        # triangular kernel at c = 1: the share-profile intercept combination
        # equals 1/8 exactly, so tau_star = tau_d + gamma0/8
        ts = tau_star({"tau_d": 1.0, "delta0": 0.0, "gamma0": 0.5}, 1.0,
                      "triangular", tab0)
        assert ts == pytest.approx(1.0625, abs=1e-10)

    def test_delta0_zero_wide_c_no_bias(self, tab0):
        # with c >= 2 the share profile is linear on the fit window and the
        # local linear functional annihilates it; approach c -> 2 from below
        ts = tau_star({"tau_d": 1.0, "delta0": 0.0, "gamma0": 0.5}, 1.999,
                      "triangular", tab0)
        assert ts == pytest.approx(1.0, abs=1e-4)

    def test_no_spillover_returns_tau_d(self, tab0):
        ts = tau_star({"tau_d": 1.3, "delta0": 0.0, "gamma0": 0.0}, 0.7,
                      "triangular", tab0)
        assert ts == pytest.approx(1.3, abs=1e-12)

    def test_zero_direct_zero_gamma_is_zero(self):
        tab = build_lambda_table(0.3, A=8.0, grid_n=1601)
        ts = tau_star({"tau_d": 0.0, "delta0": 0.3, "gamma0": 0.0}, 1.0,
                      "triangular", tab)
        assert ts == pytest.approx(0.0, abs=1e-12)

    def test_delta0_zero_matches_gamma_moment_combo(self, tab0):
        # with no endogenous channel the estimand reduces to the share-profile
        # term alone, reconstructable from the Gamma moment map
        c, kern, gamma0 = 0.8, "epanechnikov", 0.7
        ms = compute_moments(tab0, c, kern)
        g01, g11, g21 = (ms.gamma_ps[(p, 1)] for p in (0, 1, 2))
        den = g01 * g21 - g11**2
        combo = (g21 * (ms.Gamma_plus[(0, 1, 1)] - ms.Gamma_minus[(0, 1, 1)])
                 - g11 * (ms.Gamma_plus[(1, 1, 1)] + ms.Gamma_minus[(1, 1, 1)])) / den
        ts = tau_star({"tau_d": 2.0, "delta0": 0.0, "gamma0": gamma0}, c, kern, tab0)
        assert ts == pytest.approx(2.0 + gamma0 * combo, abs=1e-10)

    def test_kernel_agreement_rough(self, tab04_c1):
        # different kernels weight the same profiles; values stay in a band
        vals = [tau_star(BENCH, 1.0, k, tab04_c1)
                for k in ("triangular", "epanechnikov", "uniform")]
        assert max(vals) - min(vals) < 0.25
        assert all(1.0 < v < 2.5 for v in vals)

    def test_c_validation(self, tab04):
        with pytest.raises(ConfigError):
            tau_star(BENCH, 2.0, "triangular", tab04)
        with pytest.raises(ConfigError):
            tau_star(BENCH, -0.5, "triangular", tab04)

    def test_degenerate_kernel_moments(self, tab0, monkeypatch):
        monkeypatch.setattr(asy, "one_sided_moment", lambda k, p, s=1: 0.5)
        with pytest.raises(NumericError):
            tau_star({"tau_d": 1.0, "delta0": 0.0, "gamma0": 0.5}, 1.0,
                     "triangular", tab0)

    def test_table_rebuilt_when_inadequate(self, tab04):
        # A = 8 table is too short for c = 1 at delta0 = 0.4; tau_star must
        # transparently rebuild rather than use the truncated tail
        ts = tau_star(BENCH, 1.0, "triangular", tab04)
        assert ts == pytest.approx(POP_ANCHOR_C1, abs=5e-4)


class TestMoments:
    def test_kernel_moment_closed_forms(self, tab0):
        ms = compute_moments(tab0, 1.0, "triangular")
        assert ms.gamma_ps[(0, 1)] == pytest.approx(0.5, abs=1e-14)
        assert ms.gamma_ps[(1, 1)] == pytest.approx(1 / 6, abs=1e-14)
        assert ms.gamma_ps[(2, 1)] == pytest.approx(1 / 12, abs=1e-14)
        me = compute_moments(tab0, 1.0, "epanechnikov")
        assert me.gamma_ps[(1, 1)] == pytest.approx(3 / 16, abs=1e-14)
        assert me.gamma_ps[(2, 1)] == pytest.approx(0.1, abs=1e-14)
        mu = compute_moments(tab0, 1.0, "uniform")
        assert mu.gamma_ps[(1, 1)] == pytest.approx(0.25, abs=1e-14)

    def test_share_profile_moment_closed_form(self, tab0):
        # int_0^1 V(x) K(x) dx at c = 1, triangular: 7/48 = 0.1458333...
        ms = compute_moments(tab0, 1.0, "triangular")
        assert ms.Gamma_plus[(0, 1, 1)] == pytest.approx(7 / 48, abs=1e-12)

    def test_gamma_matches_nu_exact(self, tab0):
        # the share profile is the small-h limit of nu_exact differences
        c, h = 0.8, 1e-3
        xs = np.linspace(-1, 1, 41)
        prof = asy.nu_profile(xs, c)
        direct = nu_exact(CUTOFF, c * h / 2, xs * h) - 0.5
        np.testing.assert_allclose(prof, direct, atol=1e-12)

    def test_all_finite_and_positive_mass(self, tab04_c1):
        ms = compute_moments(tab04_c1, 1.0, "triangular", BENCH)
        assert ms.gamma_ps[(0, 1)] > 0
        for mp in (ms.gamma_ps, ms.Lambda_plus, ms.Lambda_minus,
                   ms.LambdaTilde_plus, ms.LambdaTilde_minus,
                   ms.Gamma_plus, ms.Gamma_minus, ms.phi):
            assert all(np.isfinite(v) for v in mp.values())
        # phi present only when the model constants are supplied
        assert compute_moments(tab04_c1, 1.0, "triangular").phi == {}

    def test_dual_resolution_agreement(self, tab04_c1):
        hi = compute_moments(tab04_c1, 1.0, "triangular", BENCH, gl_nodes=32)
        lo = compute_moments(tab04_c1, 1.0, "triangular", BENCH, gl_nodes=16)
        for mp_hi, mp_lo in ((hi.Lambda_plus, lo.Lambda_plus),
                             (hi.LambdaTilde_minus, lo.LambdaTilde_minus),
                             (hi.Gamma_plus, lo.Gamma_plus),
                             (hi.phi, lo.phi)):
            for key in mp_hi:
                assert abs(mp_hi[key] - mp_lo[key]) < 1e-6

    def test_delta0_zero_lambda_tilde_maps_vanish(self, tab0):
        ms = compute_moments(tab0, 1.0, "triangular")
        for v in ms.LambdaTilde_plus.values():
            assert abs(v) < 1e-12
        for v in ms.LambdaTilde_minus.values():
            assert abs(v) < 1e-12

    def test_csv_export(self, tab0, tmp_path):
        ms = compute_moments(tab0, 1.0, "triangular", BENCH)
        buf = io.StringIO()
        ms.to_csv(buf)
        lines = buf.getvalue().strip().split("\n")
        assert lines[0] == "map,p,q,r,s,value"
        n_rows = (len(ms.gamma_ps) + 6 * len(ms.Lambda_plus) + len(ms.phi))
        assert len(lines) == 1 + n_rows
        path = tmp_path / "moments.csv"
        ms.to_csv(path)
        assert path.read_text().strip().split("\n")[0] == "map,p,q,r,s,value"


class TestCorollaryBounds:
    def test_positive_chain(self):
        assert corollary_bounds_check(1.0, 1.16, 2.5, 0.4, 0.5) == "ordered-case-1"

    def test_negative_chain(self):
        assert corollary_bounds_check(-1.0, -1.16, -2.5, 0.4, -0.5) == "ordered-case-2"

    def test_negative_delta0_reversed(self):
        assert corollary_bounds_check(2.0, 1.5, 1.0, -0.5, 0.5) == "ordered-case-1"
        assert corollary_bounds_check(-2.0, -1.5, -1.0, -0.5, -0.5) == "ordered-case-2"

    def test_preconditions(self):
        assert corollary_bounds_check(0.0, 0.1, 0.2, 0.4, 0.5) == "preconditions-unmet"
        assert corollary_bounds_check(1.0, 1.1, 1.2, 0.4, 0.0) == "preconditions-unmet"
        assert corollary_bounds_check(1.0, 1.1, 1.2, 0.4, -0.5) == "preconditions-unmet"
        assert corollary_bounds_check(1.0, 1.1, 1.2, 0.0, 0.5) == "preconditions-unmet"

    def test_violated(self):
        assert corollary_bounds_check(1.0, 2.6, 2.5, 0.4, 0.5) == "violated"
        assert corollary_bounds_check(1.0, 0.9, 2.5, 0.4, 0.5) == "violated"
