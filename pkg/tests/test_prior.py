import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matchprior.errors import NonRealPower, SingularInformation, TangencyDetected
from matchprior.model import ModelSpec, ParamPoint, exp_ratio_model, logistic_model
from matchprior.prior import (
    BACKWARD,
    FORWARD,
    InitialCondition,
    TraceSettings,
    characteristic_integral,
    log_prior_at,
    log_prior_ratio,
    parse_q,
    pde_coefficients,
    pde_residual,
    resolve_prior,
    trace_characteristic,
    z_family,
)

TIGHT = TraceSettings(rtol=1e-12, atol=1e-14)

# exact (sympy) coefficients for covariates {0, 1}
LOGIT_01_AT_ORIGIN = (2.8284271247461900976, -1.4142135623730950488, 0.0)
LOGIT_01_AT_HALF_MINUS1 = (3.0563725558320355274, -1.6641169153038292354,
                           -0.29633720338863182559)


class TestCoefficients:
    def test_exp_ratio(self, exp10):
        a, b, d = pde_coefficients(exp10, (1.0, 1.0))
        assert a == pytest.approx(math.sqrt(0.2), rel=1e-14)
        assert b == 0.0
        assert d == pytest.approx(-math.sqrt(0.2), rel=1e-12)

    @pytest.mark.parametrize("point,expected", [
        ((0.0, 0.0), LOGIT_01_AT_ORIGIN),
        ((0.5, -1.0), LOGIT_01_AT_HALF_MINUS1),
    ])
    def test_logistic_two_point(self, point, expected):
        a, b, d = pde_coefficients(logistic_model([0.0, 1.0]), point)
        assert a == pytest.approx(expected[0], rel=1e-12)
        assert b == pytest.approx(expected[1], rel=1e-12)
        assert d == pytest.approx(expected[2], abs=1e-12)

    def test_finite_difference_path(self):
        m = logistic_model([0.0, 1.0])
        no_derivs = replace(m, info_derivs=None)
        a, b, d = pde_coefficients(no_derivs, (0.5, -1.0))
        assert a == pytest.approx(LOGIT_01_AT_HALF_MINUS1[0], rel=1e-12)
        assert d == pytest.approx(LOGIT_01_AT_HALF_MINUS1[2], abs=1e-7)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.1, 10), st.floats(0.1, 10))
    def test_orthogonal_means_b_zero(self, psi, lam):
        a, b, _ = pde_coefficients(exp_ratio_model(10), (psi, lam))
        assert b == 0.0 and a > 0

    def test_singular(self):
        m = ModelSpec(name="flat", loglik=None, score=None, hessian=None,
                      expected_info=lambda p, l: np.zeros((2, 2)), sampler=None,
                      domain=((-math.inf, math.inf),) * 2)
        with pytest.raises(SingularInformation):
            pde_coefficients(m, (0.0, 0.0))


class TestTrace:
    def test_orthogonal_lambda_constant(self, exp10):
        lam_hit, _, _, _ = characteristic_integral(exp10, (3.0, 1.7), 0.8, settings=TIGHT)
        assert abs(lam_hit - 1.7) < 1e-9

    @pytest.mark.parametrize("target", [(2.0, 0.7), (0.4, 3.0)])
    def test_default_ic_is_inverse_psi(self, exp10, target):
        ic = replace(resolve_prior("default"), s0=1.0)
        sol = trace_characteristic(exp10, ic, target)
        assert sol.xi_star == pytest.approx(target[1], abs=1e-9)
        assert sol.z_value == pytest.approx(-1.0 - math.log(target[0]), abs=1e-7)

    def test_loglambda_ic_is_inverse_psi_lambda(self, exp10):
        ic = replace(resolve_prior("loglambda"), s0=1.0)
        sol = trace_characteristic(exp10, ic, (2.5, 1.3))
        assert sol.z_value == pytest.approx(-math.log(2.5) - math.log(1.3), abs=1e-7)

    def test_python_trace_keeps_path(self, exp10):
        ic = replace(resolve_prior("default"), s0=1.0)
        sol = trace_characteristic(exp10, ic, (2.0, 0.7),
                                   TraceSettings(use_kernel=False))
        assert sol.lambda_path is not None
        assert abs(sol.lambda_path(2.0) - 0.7) < 1e-7

    @pytest.mark.parametrize("c", [-0.7, 0.25, 2.0])
    def test_translation(self, logistic30, c):
        m, _ = logistic30
        base = replace(resolve_prior("qfam:2"), s0=0.3)
        moved = replace(base, Psi=c, s0=0.3 - c)
        for target in [(0.9, -0.8), (-0.2, -1.4), (1.5, 0.1)]:
            z0 = trace_characteristic(m, base, target, TIGHT).z_value
            z1 = trace_characteristic(m, moved, target, TIGHT).z_value
            assert abs(z0 - z1) < 1e-8

    def test_callable_curve_matches_constant(self, logistic30):
        m, _ = logistic30
        const = replace(resolve_prior("default"), s0=0.2)
        curve = replace(const, Psi=lambda xi: 0.0 * xi)
        a = trace_characteristic(m, const, (1.0, -0.6), TIGHT).z_value
        b = trace_characteristic(m, curve, (1.0, -0.6), TIGHT).z_value
        assert abs(a - b) < 1e-8

    def test_tangent_curve(self, exp10):
        # characteristics are horizontal; this curve is horizontal at xi = 1
        ic = InitialCondition(Psi=lambda xi: xi, Lambda=lambda xi: 1.0 + (xi - 1.0) ** 3,
                              s0=0.0)
        with pytest.raises(TangencyDetected):
            trace_characteristic(exp10, ic, (2.0, 1.0))

    def test_forward_agrees_when_orthogonal(self, exp10):
        ic = replace(resolve_prior("loglambda"), s0=1.0)
        back = trace_characteristic(exp10, ic, (2.0, 0.9)).z_value
        fwd = trace_characteristic(exp10, ic, (2.0, 0.9),
                                   TraceSettings(convention=FORWARD)).z_value
        assert abs(back - fwd) < 1e-12


class TestRatio:
    def test_same_point(self, exp10):
        assert log_prior_ratio(exp10, resolve_prior("default"), (1.0, 1.0), (1.0, 1.0)) == 0.0

    def test_inverse_psi(self, exp10):
        r = log_prior_ratio(exp10, resolve_prior("default"), (2.0, 1.3), (1.0, 1.5))
        assert abs(r + math.log(2.0)) < 1e-6

    @pytest.mark.parametrize("conv", [BACKWARD, FORWARD])
    @pytest.mark.parametrize("c", [-3.0, 0.5, 12.0])
    def test_shift_invariance(self, logistic30, conv, c):
        m, _ = logistic30
        ic = resolve_prior("qfam:2/5")
        st_ = TraceSettings(convention=conv)
        base = log_prior_ratio(m, ic, (0.9, -0.7), (0.5, -1.1), st_)
        shifted = log_prior_ratio(m, ic.shifted(c), (0.9, -0.7), (0.5, -1.1), st_)
        assert abs(base - shifted) < 1e-12

    @pytest.mark.parametrize("numeric,analytic", [
        ("default", "analytic-invpsi"),
        ("loglambda", "analytic-invpsilambda"),
    ])
    def test_numeric_matches_analytic(self, exp10, numeric, analytic):
        rng = np.random.default_rng(2024)
        ic, an = resolve_prior(numeric), resolve_prior(analytic)
        worst = 0.0
        for _ in range(100):
            w_hat = tuple(rng.uniform(0.2, 5.0, 2))
            w0 = tuple(rng.uniform(0.2, 5.0, 2))
            diff = (log_prior_ratio(exp10, ic, w_hat, w0)
                    - log_prior_ratio(exp10, an, w_hat, w0))
            worst = max(worst, abs(diff))
        assert worst < 1e-5


def _surface(m, prior, anchor_psi):
    return lambda w: log_prior_at(m, prior, w, (anchor_psi, 0.0), TIGHT)


class TestResidual:
    @pytest.mark.parametrize("n", [10, 30])
    @pytest.mark.parametrize("name", ["default", "loglambda"])
    def test_exp_numeric_surface(self, n, name):
        m = exp_ratio_model(n)
        z = _surface(m, resolve_prior(name), 0.5)
        for psi in np.linspace(0.6, 2.0, 4):
            for lam in np.linspace(0.5, 2.0, 4):
                assert abs(pde_residual(m, z, (psi, lam))) < 1e-4

    @pytest.mark.parametrize("n", [10, 30])
    @pytest.mark.parametrize("name", ["default", "qfam:2"])
    def test_logistic_numeric_surface(self, n, name):
        m = logistic_model(np.random.default_rng(n).random(n))
        z = _surface(m, resolve_prior(name), -0.5)
        for psi in np.linspace(-0.4, 1.5, 4):
            for lam in np.linspace(-1.5, 0.5, 4):
                assert abs(pde_residual(m, z, (psi, lam))) < 1e-4

    @pytest.mark.parametrize("name", ["analytic-invpsi", "analytic-invpsilambda"])
    def test_analytic(self, exp10, name):
        pr = resolve_prior(name)
        for psi in np.linspace(0.5, 2.0, 5):
            for lam in np.linspace(0.5, 2.0, 5):
                assert abs(pde_residual(exp10, lambda w: pr.log_prior(ParamPoint(*w)),
                                        (psi, lam))) < 1e-6

    def test_wrong_prior_detected(self, exp10):
        def z(w):
            return -2.0 * math.log(w[0])
        assert abs(pde_residual(exp10, z, (1.0, 1.0))) > 0.01


class TestZFamily:
    def test_examples(self):
        assert z_family(2)(-1.0) == 0.0
        assert z_family(2)(0.0) == pytest.approx(-math.log(2.0), abs=1e-15)
        assert z_family(parse_q("2/5"))(-2.0) == pytest.approx(-math.log(2.0), abs=1e-15)

    @settings(max_examples=50)
    @given(st.sampled_from(["2", "2/5", "2/11", "4"]), st.integers(0, 1280))
    def test_even_with_max_at_center(self, q, k):
        t = k / 64.0  # exact offsets from the center
        z = z_family(parse_q(q))
        assert z(-1.0 + t) == pytest.approx(z(-1.0 - t), abs=1e-14)
        assert z(-1.0 + t) <= z(-1.0)

    def test_parse_q_exact(self):
        assert parse_q("2/5") == parse_q("0.4")
        assert parse_q(" 2/11 ").denominator == 11

    def test_odd_power_not_real(self):
        with pytest.raises(NonRealPower):
            z_family(3)(-3.0)

    @pytest.mark.parametrize("name", ["default", "ic-default", "loglambda", "qfam:2/5",
                                      "qfam:2@0.5", "analytic-invpsi", "analytic-invpsilambda"])
    def test_presets_resolve(self, name):
        assert resolve_prior(name).name

    def test_unknown_preset(self):
        with pytest.raises(ValueError):
            resolve_prior("flat")
