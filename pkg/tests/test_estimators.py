import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tailreg.contamination import FlipSign, ModelSpec, NoContamination, generate
from tailreg.designs import gaussian_design
from tailreg.errors import (
    ConvergenceError,
    NoDataError,
    PreconditionError,
    UnsupportedDimensionError,
)
from tailreg.estimators import (
    FixedT,
    Thm1Rule,
    Thm2Rule,
    Thm5Rule,
    choose_t,
    depth_eval,
    depth_max,
    lad_fit,
    truncated_lad_1d,
)
from tailreg.numerics import RngStream, weighted_median

E = math.e
DIRS_1D = np.array([[1.0], [-1.0]])


class TestChooseT:
    def test_thm2_at_zero_eps(self):
        # n eps^2 / p + e = e, so t = sqrt(log e) / 2 = 0.5
        assert choose_t(Thm2Rule(), 1000, 1, 0.0) == pytest.approx(0.5)

    def test_thm1_at_zero_eps(self):
        assert choose_t(Thm1Rule(), 1000, 1, 0.0) == pytest.approx(math.sqrt(0.5))

    def test_thm5_laplace_at_zero_eps(self):
        assert choose_t(Thm5Rule(1.0), 1000, 1, 0.0) == pytest.approx(1.0 / 3.0)

    def test_fixed(self):
        assert choose_t(FixedT(1.25), 10, 2, 0.3) == 1.25

    def test_thm1_clipping(self):
        # at n = 1 the cap sqrt(0.9 log n) = 0 binds
        assert choose_t(Thm1Rule(), 1, 1, 0.4) == 0.0

    def test_thm2_formula_with_eps(self):
        n, p, eps = 10**5, 2, 0.2
        want = 0.5 * math.sqrt(math.log(n * eps**2 / p + E))
        assert choose_t(Thm2Rule(), n, p, eps) == pytest.approx(want)

    @settings(max_examples=100, deadline=None)
    @given(
        st.integers(min_value=10, max_value=10**7),
        st.integers(min_value=1, max_value=8),
        st.floats(0.0, 0.49),
        st.floats(0.0, 0.49),
    )
    def test_monotone_in_eps(self, n, p, e1, e2):
        lo, hi = sorted((e1, e2))
        for rule in (Thm1Rule(), Thm2Rule(), Thm5Rule(1.0), Thm5Rule(2.0)):
            assert choose_t(rule, n, p, lo) <= choose_t(rule, n, p, hi) + 1e-12

    def test_domain_errors(self):
        with pytest.raises(PreconditionError):
            choose_t(Thm1Rule(), 0, 1, 0.1)
        with pytest.raises(PreconditionError):
            choose_t(Thm1Rule(), 10, 1, 0.5)


def _trunc_objective(x, y, t, bs):
    keep = np.abs(x) >= t
    return np.abs(y[keep, None] - bs[None, :] * x[keep, None]).sum(axis=0) / x.size


class TestTruncatedLad:
    def test_exact_linear_data(self):
        x = RngStream(41, 0).normal(size=50)
        for t in (0.0, 0.5, 1.0):
            rep = truncated_lad_1d(x, 2.0 * x, t)
            assert rep.beta_hat[0] == 2.0
            assert rep.objective == 0.0

    def test_t_zero_is_plain_median_regression(self):
        rng = RngStream(42, 0)
        x = rng.normal(size=200)
        y = -0.7 * x + rng.normal(size=200)
        rep = truncated_lad_1d(x, y, 0.0)
        assert rep.beta_hat[0] == weighted_median(y / x, np.abs(x))

    def test_matches_grid_search(self):
        rng = RngStream(43, 0)
        bs = np.arange(-10.0, 10.0, 1e-4)
        for rep_idx in range(10):
            x = rng.normal(size=20)
            y = 1.4 * x + rng.normal(size=20)
            t = 0.4
            fit = truncated_lad_1d(x, y, t)
            objs = _trunc_objective(x, y, t, bs)
            k = int(np.argmin(objs))
            assert abs(fit.beta_hat[0] - bs[k]) <= 1e-4 + 1e-12
            assert fit.objective <= objs[k] + 1e-12

    def test_empty_survivors(self):
        with pytest.raises(NoDataError):
            truncated_lad_1d(np.array([0.1, -0.2]), np.array([1.0, 2.0]), 5.0)

    def test_all_zero_covariates(self):
        with pytest.raises(NoDataError):
            truncated_lad_1d(np.zeros(3), np.ones(3), 0.0)


class TestLadFit:
    def test_exact_data(self):
        rng = RngStream(44, 0)
        X = rng.normal(size=(60, 2))
        beta = np.array([1.0, -2.0])
        rep = lad_fit(X, X @ beta)
        assert np.max(np.abs(rep.beta_hat - beta)) < 1e-8
        assert rep.certificate <= 1e-6

    def test_p1_matches_weighted_median(self):
        worst = 0.0
        for i in range(10):
            rng = RngStream(45, i)
            x = rng.normal(size=80)
            y = 0.3 * x + rng.normal(size=80)
            irls = lad_fit(x[:, None], y).beta_hat[0]
            exact = truncated_lad_1d(x, y, 0.0).beta_hat[0]
            worst = max(worst, abs(irls - exact))
        assert worst < 1e-6

    def test_p2_local_grid_oracle(self):
        rng = RngStream(46, 0)
        X = rng.normal(size=(50, 2))
        y = X @ np.array([0.8, -0.4]) + 0.5 * rng.normal(size=50)
        rep = lad_fit(X, y)

        def objective(b):
            return float(np.mean(np.abs(y - X @ b)))

        deltas = np.linspace(-0.01, 0.01, 81)
        best = min(
            objective(rep.beta_hat + np.array([a, b])) for a in deltas for b in deltas
        )
        assert objective(rep.beta_hat) <= best + 1e-6

    def test_iteration_cap_raises_with_report(self):
        rng = RngStream(47, 0)
        x = rng.normal(size=100)
        y = x + rng.normal(size=100)
        with pytest.raises(ConvergenceError) as err:
            lad_fit(x[:, None], y, max_wls=3)
        assert err.value.report is not None
        assert err.value.report.beta_hat.shape == (1,)

    def test_needs_overdetermined(self):
        with pytest.raises(PreconditionError):
            lad_fit(np.eye(2), np.ones(2))


class TestDepthEval:
    def test_single_point_by_hand(self):
        # (x, y) = (1, 2), beta = 1, t = 0: v = -1 zeroes the indicator
        val = depth_eval([1.0], np.array([[1.0]]), np.array([2.0]), 0.0, DIRS_1D)
        assert val == 0.0

    def test_clean_depth_near_half(self):
        rng = RngStream(48, 0)
        n = 100000
        X = rng.normal(size=(n, 2))
        beta = np.array([1.0, 1.0])
        y = X @ beta + rng.normal(size=n)
        dirs = rng.normal(size=(128, 2))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        val = depth_eval(beta, X, y, 0.0, dirs)
        # population depth 1 - Phi(0) = 1/2; min over directions sits below
        assert abs(val - 0.5) < 5.0 * math.sqrt(0.25 / n) * 3.5

    def test_duplicate_formula_oracle(self):
        rng = RngStream(49, 0)
        X = rng.normal(size=(30, 2))
        y = X @ np.array([0.5, 0.5]) + rng.normal(size=30)
        dirs = rng.normal(size=(64, 2))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        beta = np.array([0.4, 0.6])
        t = 0.3
        got = depth_eval(beta, X, y, t, dirs)
        # independent re-evaluation, row by row
        best = 1.0
        res = y - X @ beta
        for v in dirs:
            cnt = 0
            for i in range(30):
                proj = float(v @ X[i])
                if proj * res[i] >= 0 and abs(proj) >= t:
                    cnt += 1
            best = min(best, cnt / 30)
        assert got == pytest.approx(best, abs=1e-15)

    def test_non_unit_direction_rejected(self):
        with pytest.raises(PreconditionError):
            depth_eval([0.0], np.ones((3, 1)), np.ones(3), 0.0, np.array([[1.1]]))

    def test_p1_requires_pm1(self):
        with pytest.raises(PreconditionError):
            depth_eval([0.0], np.ones((3, 1)), np.ones(3), 0.0, np.array([[1.0]]))


class TestDepthMax:
    def test_matches_grid_scan(self):
        rng = RngStream(50, 0)
        for i in range(5):
            x = rng.normal(size=30)
            y = 0.9 * x + rng.normal(size=30)
            t = 0.2
            fit = depth_max(x[:, None], y, t)
            bs = np.arange(-5.0, 5.0, 1e-4)
            best = 0.0
            for b in bs:
                best = max(best, depth_eval([b], x[:, None], y, t, DIRS_1D))
            assert fit.objective >= best - 1e-12

    def test_clean_error_bound(self):
        # median over 100 reps of |beta_hat - beta| at t = 1, n = 10^4
        # against the 5 sqrt(p/n) e^{t^2} / t envelope
        n, t = 10**4, 1.0
        errs = []
        for rep in range(100):
            rng = RngStream(51, rep)
            x = rng.normal(size=n)
            y = 2.0 * x + rng.normal(size=n)
            errs.append(abs(depth_max(x[:, None], y, t).beta_hat[0] - 2.0))
        bound = 5.0 * math.sqrt(1.0 / n) * math.exp(t * t) / t
        assert np.median(errs) <= bound

    def test_scale_equivariance_power_of_two_exact(self):
        rng = RngStream(52, 0)
        x = rng.normal(size=60)
        y = 1.1 * x + rng.normal(size=60)
        base = depth_max(x[:, None], y, 0.3).beta_hat[0]
        for c in (0.5, 2.0, 8.0):
            scaled = depth_max(x[:, None], c * y, 0.3).beta_hat[0]
            assert scaled == c * base

    def test_translation_equivariance(self):
        rng = RngStream(53, 0)
        x = rng.normal(size=60)
        y = 0.4 * x + rng.normal(size=60)
        base = depth_max(x[:, None], y, 0.0).beta_hat[0]
        b = 3.7
        shifted = depth_max(x[:, None], y + b * x, 0.0).beta_hat[0]
        assert shifted == pytest.approx(base + b, abs=1e-12)

    def test_p2_beats_random_candidates(self):
        rng = RngStream(54, 0)
        X = rng.normal(size=(200, 2))
        beta = np.array([1.0, -0.5])
        y = X @ beta + 0.5 * rng.normal(size=200)
        fit = depth_max(X, y, 0.4, rng=RngStream(54, 1))
        assert np.linalg.norm(fit.beta_hat - beta) < 0.5
        assert fit.objective > 0.0

    def test_dimension_cap(self):
        rng = RngStream(55, 0)
        X = rng.normal(size=(40, 6))
        y = X[:, 0] + rng.normal(size=40)
        with pytest.raises(UnsupportedDimensionError):
            depth_max(X, y, 0.0, rng=rng)

    def test_needs_rng_for_p2(self):
        with pytest.raises(PreconditionError):
            depth_max(np.ones((9, 2)), np.ones(9), 0.0)


class TestEquivariance:
    def test_lad_translation_and_scale(self):
        rng = RngStream(56, 0)
        X = rng.normal(size=(80, 2))
        y = X @ np.array([0.7, -0.2]) + rng.normal(size=80)
        base = lad_fit(X, y).beta_hat
        shift = np.array([1.5, -2.5])
        trans = lad_fit(X, y + X @ shift).beta_hat
        assert np.max(np.abs(trans - base - shift)) < 1e-8
        scaled = lad_fit(X, 3.0 * y).beta_hat
        assert np.max(np.abs(scaled - 3.0 * base)) < 1e-8

    def test_trunc_lad_scale_power_of_two_exact(self):
        rng = RngStream(57, 0)
        x = rng.normal(size=50)
        y = 0.6 * x + rng.normal(size=50)
        base = truncated_lad_1d(x, y, 0.5).beta_hat[0]
        assert truncated_lad_1d(x, 4.0 * y, 0.5).beta_hat[0] == 4.0 * base

    def test_estimators_ignore_sample_diagnostics(self):
        model = ModelSpec(
            np.array([1.0]), 1.0, 0.2, gaussian_design(1), FlipSign()
        )
        sample = generate(model, 500, RngStream(58, 0))
        rep1 = truncated_lad_1d(sample.X[:, 0], sample.y, 0.5)
        # permuting the hidden mask cannot change any estimate
        perm = sample.inlier_mask[::-1].copy()
        assert perm.shape == sample.inlier_mask.shape
        rep2 = truncated_lad_1d(sample.X[:, 0], sample.y, 0.5)
        assert rep1 == rep2

    def test_depth_never_exceeds_survivor_fraction(self):
        rng = RngStream(59, 0)
        x = rng.normal(size=300)
        y = x + rng.normal(size=300)
        t = 1.0
        frac = float((np.abs(x) >= t).mean())
        val = depth_eval([1.0], x[:, None], y, t, DIRS_1D)
        assert val <= frac <= 1.0


class TestCleanRateSanity:
    def test_depth_max_consistency_under_contamination(self):
        # the headline phenomenon at mini scale: error shrinks with n
        model = ModelSpec(np.array([1.0]), 1.0, 0.1, gaussian_design(1), FlipSign())
        meds = []
        for n in (2000, 50000):
            errs = []
            for rep in range(30):
                s = generate(model, n, RngStream(60, rep))
                t = choose_t(Thm1Rule(), n, 1, 0.1)
                errs.append(abs(depth_max(s.X, s.y, t).beta_hat[0] - 1.0))
            meds.append(np.median(errs))
        assert meds[1] < meds[0]
