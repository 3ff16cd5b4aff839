"""Factorization identities: payoffs, the resolvent profile, the open and
stopped identities, the classical constant-coefficient corollary, the noisy
operator equation, and the motivating distributional gap.

Frozen literals were produced by this implementation and cross-checked by the
independent route asserted next to them (marginal-quadrature left side versus
semigroup right side, generator residuals, closed tail forms); they guard
against silent regressions.
"""

import math

import pytest

from whabm.closed_form import ConstCoeff, laplace_exponent
from whabm.coefficients import CoefficientModel
from whabm.factorize import (
    VerificationReport,
    classical_char_check,
    classical_wh,
    constant_one,
    cos_truncated,
    gaussian_bump,
    increment_law_gap,
    noisy_wh_residual,
    triangular_bump,
    verify_factorization,
    wh_lhs,
    wh_rhs,
    wh_stopped,
    _resolvent_profile,
)
from whabm.gamma import GammaKernel
from whabm.montecarlo import SimConfig
from whabm.operators import (
    TestFunction,
    UnsupportedModelError,
    apply_gamma,
    apply_passage_semigroup,
)
from whabm.quadrature import DEFAULT_QUAD, QuadratureSpec


@pytest.fixture(scope="module")
def h_unit():
    return TestFunction.exponential(1.0)


@pytest.fixture(scope="module")
def const_drift():
    return CoefficientModel.constant(0.5, 1.0)


class TestPayoffs:
    def test_constant_one(self):
        u = constant_one()
        assert u(-3.0) == u(0.0) == u(7.5) == 1.0
        assert u.support is None

    def test_gaussian_bump_shape(self):
        u = gaussian_bump(center=0.5, width=2.0)
        assert u(0.5) == 1.0
        assert u(0.5 + 1.3) == pytest.approx(u(0.5 - 1.3), rel=1e-15)
        assert u.support is None

    def test_triangular_bump_support(self):
        u = triangular_bump(center=1.0, halfwidth=0.5)
        assert u(1.0) == 1.0
        assert u(1.25) == pytest.approx(0.5)
        assert u(1.6) == 0.0 and u(0.4) == 0.0
        assert u.support == (0.5, 1.5)

    def test_cos_truncation_is_continuous(self):
        for xi in (0.5, 1.0, 2.0):
            u = cos_truncated(xi)
            radius = u.support[1]
            assert radius >= 8.0
            # the cut sits at a zero of the cosine
            assert abs(math.cos(xi * radius)) < 1e-12
            assert abs(u(radius - 1e-9)) < 1e-8
            assert u(radius + 1e-9) == 0.0


class TestVerificationReport:
    def test_build_computes_error_and_verdict(self):
        good = VerificationReport.build("x", 1.0, 1.0 + 5e-7, 1e-6, "m")
        bad = VerificationReport.build("x", 1.0, 1.1, 1e-6, "m")
        assert good.passed and good.abs_error == pytest.approx(5e-7)
        assert not bad.passed


class TestConstantFactorization:
    def test_frozen_left_side(self, const_drift, h_unit):
        val = wh_lhs(const_drift, gaussian_bump(), h_unit, 0.0, 0.0)
        assert val == pytest.approx(0.7180325144712539, rel=1e-9)

    def test_two_routes_agree_closely(self, const_drift, h_unit):
        lhs = wh_lhs(const_drift, gaussian_bump(), h_unit, 0.0, 0.0)
        rhs = wh_rhs(const_drift, gaussian_bump(), h_unit, 0.0, 0.0)
        assert rhs == pytest.approx(lhs, rel=1e-8)

    @pytest.mark.parametrize("payoff", [gaussian_bump(), triangular_bump(0.0, 1.5)])
    @pytest.mark.parametrize("point", [(0.0, 0.0), (0.3, -0.4)])
    def test_identity_holds(self, const_drift, h_unit, payoff, point):
        s, a = point
        rep = verify_factorization(const_drift, payoff, h_unit, s, a)
        assert rep.passed
        assert rep.method == "quadrature"


class TestResolventProfile:
    def test_constant_model_closed_scale(self, const_drift, h_unit):
        # lambda+ = -1, lambda- = -2 at rate 1, so the scale is 1/3
        prof = _resolvent_profile(const_drift, 1.0, DEFAULT_QUAD)
        assert prof._tail_scale == pytest.approx(1.0 / 3.0, rel=1e-12)
        for t in (0.0, 0.4, 2.0):
            assert prof(t) == pytest.approx(math.exp(-t) / 3.0, rel=1e-12)

    def test_one_jump_tail_and_frozen_head(self, onejump):
        prof = _resolvent_profile(onejump, 1.0, DEFAULT_QUAD)
        # tail segment (v=-1, sigma=1): lambda+ + lambda- = -2 sqrt(3)
        assert prof._tail_scale == pytest.approx(0.5 / math.sqrt(3.0), rel=1e-12)
        assert prof(0.7) == pytest.approx(prof._tail_scale * math.exp(-0.7), rel=1e-12)
        assert float(prof(0.25)) == pytest.approx(0.25147767602377935, rel=1e-7)

    def test_head_joins_tail_continuously(self, onejump):
        prof = _resolvent_profile(onejump, 1.0, DEFAULT_QUAD)
        assert prof(0.5 - 1e-9) == pytest.approx(prof(0.5), abs=1e-6)

    def test_pseudo_constant_recovers_closed_form(self):
        # a breakpoint with identical coefficients on both sides must
        # reproduce the constant-model profile through the Volterra solve
        pseudo = CoefficientModel((0.5,), (0.3, 0.3), (1.0, 1.0))
        prof = _resolvent_profile(pseudo, 1.0, DEFAULT_QUAD)
        assert prof.solved_head
        rho = prof._tail_scale
        for t in (0.0, 0.1, 0.25, 0.4, 0.49):
            assert prof(t) == pytest.approx(rho * math.exp(-t), rel=2e-5)

    def test_generator_residual_vanishes(self, onejump, quad):
        # the defining identity Gamma(Rh) = -h, checked with the full kernel
        prof = _resolvent_profile(onejump, 1.0, DEFAULT_QUAD)
        tf = prof.as_testfunction()
        kern = GammaKernel(onejump, DEFAULT_QUAD)
        for s in (0.1, 0.3):
            assert apply_gamma(kern, tf, s) == pytest.approx(-math.exp(-s), abs=1e-4)

    def test_profile_derivative_consistent(self, onejump):
        tf = _resolvent_profile(onejump, 1.0, DEFAULT_QUAD).as_testfunction()
        fd = (tf.func(0.2 + 1e-5) - tf.func(0.2 - 1e-5)) / 2e-5
        assert tf.gf(0.2) == pytest.approx(fd, rel=1e-4)

    def test_profile_is_cached(self, onejump):
        a = _resolvent_profile(onejump, 1.0, DEFAULT_QUAD)
        b = _resolvent_profile(onejump, 1.0, DEFAULT_QUAD)
        assert a is b

    def test_unsupported_inputs_rejected(self, onejump):
        plain = TestFunction(func=lambda t: math.exp(-t),
                             gf=lambda t: -math.exp(-t), decay=(1.5, 1.0))
        with pytest.raises(ValueError):
            wh_rhs(onejump, gaussian_bump(), plain, 0.0, 0.0)
        two_jumps = CoefficientModel((0.4, 0.8), (1.0, -1.0, 0.5), (1.0, 1.0, 1.0))
        with pytest.raises(UnsupportedModelError):
            _resolvent_profile(two_jumps, 1.0, DEFAULT_QUAD)


class TestCompositionOrderDependence:
    def test_passage_compositions_disagree(self, onejump, h_unit):
        """The two iterated passage compositions differ by 74% here, so
        neither can serve as the space-homogeneous semigroup of a one-jump
        model; the factorization right side therefore uses the
        generator-characterized resolvent instead."""
        spec = QuadratureSpec(abs_tol=1e-7, rel_tol=1e-6, max_depth=60)
        up_down = apply_passage_semigroup(
            onejump, 0.8,
            lambda w: apply_passage_semigroup(onejump, 0.8, h_unit, w, "-", spec),
            0.2, "+", spec)
        down_up = apply_passage_semigroup(
            onejump, 0.8,
            lambda w: apply_passage_semigroup(onejump, 0.8, h_unit, w, "+", spec),
            0.2, "-", spec)
        assert up_down == pytest.approx(0.14390844741007658, rel=1e-9)
        assert down_up == pytest.approx(0.03726485424049901, rel=1e-9)
        assert abs(up_down - down_up) > 0.5 * max(up_down, down_up)


class TestOneJumpFactorization:
    def test_identity_through_volterra_head(self, onejump, h_unit):
        rep = verify_factorization(onejump, gaussian_bump(), h_unit, 0.2, 0.4)
        assert rep.passed
        assert "volterra" in rep.method
        assert rep.abs_error <= 2e-3 * max(abs(rep.lhs), 1e-6)

    def test_identity_past_breakpoint(self, onejump, h_unit):
        # from s beyond the jump only the tail segment matters and the
        # closed constant route takes over
        rep = verify_factorization(onejump, gaussian_bump(), h_unit, 1.2, -0.3)
        assert rep.passed
        assert rep.abs_error <= 1e-6 * max(abs(rep.lhs), 1e-6)


class TestStoppedFactorization:
    def test_exact_cancellation_at_t_equal_s(self, const_drift, h_unit):
        rep = wh_stopped(const_drift, gaussian_bump(), h_unit, 0.1, 0.0, 0.1)
        assert rep.passed
        assert rep.method == "quadrature cancellation"
        assert rep.abs_error <= 1e-10

    def test_interior_horizon(self, const_drift, h_unit):
        cfg = SimConfig(n_paths=600, dt=2e-3, seed=404, horizon=14.0)
        rep = wh_stopped(const_drift, gaussian_bump(), h_unit, 0.1, 0.0, 0.8, cfg)
        assert rep.passed

    def test_invalid_inputs(self, const_drift, h_unit):
        with pytest.raises(ValueError):
            wh_stopped(const_drift, gaussian_bump(), h_unit, 0.5, 0.0, 0.2)


class TestClassicalFactorization:
    def test_three_routes_agree(self):
        cfg = SimConfig(n_paths=1500, dt=5e-3, seed=11, horizon=14.0)
        reps = classical_wh(ConstCoeff(0.3, 1.0), 1.0, gaussian_bump(), 0.1, cfg)
        assert [r.passed for r in reps] == [True, True, True]
        by_name = {r.name.split("[")[0]: r for r in reps}
        assert by_name["classical-wh-iteration-order"].abs_error < 1e-9

    @pytest.mark.parametrize("xi", [0.5, 1.0, 2.0])
    def test_characteristic_route(self, xi):
        rep = classical_char_check(ConstCoeff(0.3, 1.0), 1.0, xi)
        assert rep.passed
        assert rep.abs_error < 1e-6


class TestNoisyOperatorEquation:
    @pytest.mark.parametrize("sign", ["+", "-"])
    @pytest.mark.parametrize("s", [0.3, 1.7])
    def test_constant_residual_machine_zero(self, const_drift, sign, s):
        assert abs(noisy_wh_residual(const_drift, 1.0, s, sign)) < 1e-12

    def test_one_jump_tail_residual_exact(self, onejump):
        assert noisy_wh_residual(onejump, 1.0, 0.8, "+") == 0.0

    @pytest.mark.parametrize("sign", ["+", "-"])
    @pytest.mark.parametrize("s", [0.2, 0.35])
    def test_one_jump_interior_residual(self, onejump, s, sign):
        assert abs(noisy_wh_residual(onejump, 1.0, s, sign)) < 1e-3

    def test_left_limit_at_breakpoint_reported_not_zero(self, onejump):
        # with left-sided coefficients the exponential test function leaves
        # the iterated-generator domain at the jump
        assert noisy_wh_residual(onejump, 1.0, 0.5, "+", side="right") == 0.0
        assert abs(noisy_wh_residual(onejump, 1.0, 0.5, "+", side="left")) > 1e-2

    def test_invalid_side_rejected(self, onejump):
        with pytest.raises(ValueError):
            noisy_wh_residual(onejump, 1.0, 0.2, "+", side="middle")


class TestIncrementLawGap:
    def test_constant_drift_equality_not_rejected(self, const_drift):
        cfg = SimConfig(n_paths=800, dt=0.02, seed=5, horizon=12.0)
        rep = increment_law_gap(const_drift, cfg, 1.0)
        assert rep.passed
        assert rep.name == "increment-law-gap[equal]"

    def test_jump_drift_rejected(self, onejump):
        cfg = SimConfig(n_paths=1200, dt=0.02, seed=5, horizon=12.0)
        rep = increment_law_gap(onejump, cfg, 1.0)
        assert rep.passed
        assert rep.name == "increment-law-gap[reject]"
        # here tolerance holds the observed KS distance, error the critical one
        assert rep.tolerance > rep.abs_error

    def test_thread_invariant(self, onejump):
        cfg = SimConfig(n_paths=400, dt=0.05, seed=5, horizon=10.0)
        assert increment_law_gap(onejump, cfg, 1.0, threads=1) == \
            increment_law_gap(onejump, cfg, 1.0, threads=2)
