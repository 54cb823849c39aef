import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matchprior.approx import (
    BN,
    LR,
    UPPER,
    bn_tail,
    credible_interval,
    evaluate_priors,
    fit_null,
    likelihood_ratio_pvalues,
    lr_tail,
    p_values,
    p_values_from_tail,
    t_statistic,
    tail_result,
)
from matchprior.inference import mle
from matchprior.model import ParamPoint
from matchprior.numerics import std_normal_cdf
from matchprior.prior import FORWARD, TraceSettings, resolve_prior

from conftest import exp_data

# 40-digit mpmath evaluations
BN_M2_M22 = 0.020296903633860649
LR_M2_M22 = 0.020295997106670659


class TestFormats:
    def test_bn_example(self):
        assert bn_tail(-2.0, -2.2) == pytest.approx(BN_M2_M22, abs=1e-15)

    def test_lr_example(self):
        assert lr_tail(-2.0, -2.2) == pytest.approx(LR_M2_M22, abs=1e-15)

    @settings(max_examples=100)
    @given(st.floats(-8, 8).filter(lambda r: abs(r) > 1e-4))
    def test_t_equal_r_is_phi(self, r):
        assert bn_tail(r, r) == std_normal_cdf(r)
        assert lr_tail(r, r) == std_normal_cdf(r)
        res = tail_result(r, r)
        assert res.p_bn == res.p_lr == std_normal_cdf(r)

    def test_zero_r(self):
        assert bn_tail(0.0, 0.3) == 0.5
        assert lr_tail(0.0, 0.3) == 0.5
        assert tail_result(0.0, 0.3).near_singular

    def test_opposite_signs_fall_back(self):
        res = tail_result(1.2, -0.4)
        assert res.near_singular
        assert res.p_bn == res.p_lr == std_normal_cdf(1.2)

    def test_lr_clamp(self):
        res = tail_result(-0.5, -5.0)
        assert res.lr_clamped
        assert res.p_lr == 0.0
        assert 0.0 <= res.p_bn <= 1.0

    @settings(max_examples=200)
    @given(st.floats(1.5, 8.0), st.floats(0.5, 2.0), st.sampled_from([1.0, -1.0]))
    def test_formats_close(self, r, ratio, sign):
        r *= sign
        assert abs(bn_tail(r, ratio * r) - lr_tail(r, ratio * r)) < 0.01

    @pytest.mark.xfail(strict=True, reason="the two formats differ by 0.021 at R=1, T/R=0.5")
    def test_formats_not_close_for_small_r(self):
        assert abs(bn_tail(1.0, 0.5) - lr_tail(1.0, 0.5)) < 0.01

    @settings(max_examples=200)
    @given(st.floats(0.2, 3.0), st.floats(-6, 6), st.floats(0.01, 1.0))
    def test_bn_monotone_in_r(self, ratio, r, dr):
        # d/dR [R + log(ratio)/R] = 1 - log(ratio)/R^2, positive while R^2 > log(ratio)
        bound = math.sqrt(max(math.log(ratio), 0.0)) + 1e-3
        lo, hi = r, r + dr
        if not (lo > bound or hi < -bound):
            return
        assert bn_tail(hi, ratio * hi) >= bn_tail(lo, ratio * lo)

    @pytest.mark.xfail(strict=True, reason="not monotone once log(T/R) exceeds R^2")
    def test_bn_not_monotone_near_zero(self):
        assert bn_tail(1.5, 4.5) >= bn_tail(0.5, 1.5)

    @settings(max_examples=200)
    @given(st.floats(-10, 10), st.floats(-10, 10))
    def test_probabilities(self, r, t):
        res = tail_result(r, t)
        for p in (res.p_bn, res.p_lr):
            assert 0.0 <= p <= 1.0
        for side in ("lower", "upper"):
            one, two = p_values_from_tail(res.p_bn, side)
            assert 0.0 <= one <= 1.0 and 0.0 <= two <= 1.0


class TestPValues:
    def test_symmetric_tail(self):
        assert p_values_from_tail(0.5) == (0.5, 1.0)

    def test_sides(self):
        lo, two = p_values_from_tail(0.01)
        up, two_up = p_values_from_tail(0.01, UPPER)
        assert (lo, up) == (0.01, 0.99)
        assert two == two_up == 0.02

    def test_lrt(self):
        one, two = likelihood_ratio_pvalues(-1.959963984540054)
        assert one == pytest.approx(0.025, abs=1e-12)
        assert two == pytest.approx(0.05, abs=1e-12)

    def test_symmetric_exp_data(self, exp10):
        # equal means put the MLE at psi = 1, so the test of psi = 1 never rejects
        data = exp_data(1.3, 1.3)
        one, two = p_values(exp10, data, 1.0, resolve_prior("default"))
        assert one == 0.5 and two == 1.0


class TestT:
    def test_zero_score_at_mle(self, exp10):
        data = exp_data(1.0, 2.0)
        psi_hat = mle(exp10, data).estimate.psi
        assert t_statistic(exp10, data, psi_hat, resolve_prior("default")) == 0.0

    @pytest.mark.parametrize("psi0", [0.6, 1.0, 3.5])
    def test_numeric_vs_analytic(self, exp10, psi0):
        data = exp_data(1.0, 2.0)
        t_num = t_statistic(exp10, data, psi0, resolve_prior("default"))
        t_an = t_statistic(exp10, data, psi0, resolve_prior("analytic-invpsi"))
        assert abs(t_num - t_an) < 1e-5 * max(1.0, abs(t_an))

    @pytest.mark.parametrize("psi0", [0.6, 3.5])
    def test_sign_follows_score(self, exp10, psi0):
        data = exp_data(1.0, 2.0)
        nf = fit_null(exp10, data, psi0)
        t = t_statistic(exp10, data, psi0, resolve_prior("default"), nf=nf)
        assert math.copysign(1, t) == math.copysign(1, nf.score_psi)

    def test_constant_shift_leaves_t_unchanged(self, logistic30):
        m, data = logistic30
        ic = resolve_prior("qfam:2")
        t0 = t_statistic(m, data, 0.5, ic)
        t1 = t_statistic(m, data, 0.5, ic.shifted(4.25))
        assert t0 == t1


class TestEvaluatePriors:
    def test_shared_trace_matches_individual(self, logistic30):
        m, data = logistic30
        names = ["default", "qfam:2", "qfam:2/5"]
        priors = [resolve_prior(n) for n in names]
        for conv in ("backward", "forward"):
            st_ = TraceSettings(convention=conv)
            _, res = evaluate_priors(m, data, 0.5, priors, st_)
            for pr in priors:
                t = t_statistic(m, data, 0.5, pr, st_)
                assert res[pr.name].T == pytest.approx(t, rel=1e-12)

    def test_forward_changes_q_rows(self, logistic30):
        m, data = logistic30
        priors = [resolve_prior("default"), resolve_prior("qfam:2")]
        _, back = evaluate_priors(m, data, 0.5, priors)
        _, fwd = evaluate_priors(m, data, 0.5, priors, TraceSettings(convention=FORWARD))
        # backward tracing from w_hat lands next to lam_hat0, so Z nearly cancels
        assert fwd["qfam:2"].T != pytest.approx(fwd["default"].T, rel=1e-6)
        assert back["qfam:2"].T == pytest.approx(back["default"].T, rel=1e-2)


class TestCredibleInterval:
    def test_contains_mle(self, exp10):
        data = exp_data(1.0, 2.0)
        lo, hi = credible_interval(exp10, data, resolve_prior("default"))
        assert lo < 2.0 < hi

    def test_endpoints_hit_levels(self, exp10):
        data = exp_data(1.0, 2.0)
        ic = resolve_prior("default")
        lo, hi = credible_interval(exp10, data, ic, level=0.9)
        from matchprior.approx import tail_at
        assert tail_at(exp10, data, lo, ic).p_bn == pytest.approx(0.95, abs=1e-8)
        assert tail_at(exp10, data, hi, ic).p_bn == pytest.approx(0.05, abs=1e-8)

    @pytest.mark.parametrize("fmt", [BN, LR])
    def test_nested(self, logistic30, fmt):
        m, data = logistic30
        ic = resolve_prior("default")
        lo90, hi90 = credible_interval(m, data, ic, 0.90, fmt)
        lo99, hi99 = credible_interval(m, data, ic, 0.99, fmt)
        assert lo99 <= lo90 < hi90 <= hi99

    def test_level_checked(self, exp10):
        with pytest.raises(ValueError):
            credible_interval(exp10, exp_data(1.0, 2.0), resolve_prior("default"), level=1.0)
