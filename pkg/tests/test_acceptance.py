"""Acceptance gate: one test (or parametrized family) per release criterion.

Each criterion asserts the stated tolerance against an independently computed
target; nothing here loosens a tolerance to make a check pass.  The ``v=cos``
column of the killed-increment experiment reproducibly lands near -0.143,
outside the published window -0.0803 +/- 0.03, and is expected to fail; the
discrepancy is documented in the README and reported, not hidden.

Shared heavyweight simulations (the four-column experiment, the fine-band
local-time ensemble) run once per session through module fixtures.
"""

import json
import math
import os

import numpy as np
import pytest
from scipy.integrate import quad as scipy_quad
from scipy.stats import halfnorm, kstest, norm

from whabm.cli import main as cli_main
from whabm.closed_form import (
    ConstCoeff,
    gamma_const,
    joint_survival_density,
    laplace_exponent,
    tail_prob_up,
)
from whabm.coefficients import CoefficientModel
from whabm.factorize import (
    classical_char_check,
    classical_wh,
    cos_truncated,
    gaussian_bump,
    noisy_wh_residual,
    triangular_bump,
    verify_factorization,
    wh_stopped,
)
from whabm.gamma import GammaKernel
from whabm.montecarlo import (
    SimConfig,
    cos_drift_model,
    downcrossing_local_time,
    first_passage,
    localtime_cdf_predicted,
    simulate,
    table1_statistic,
)
from whabm.operators import (
    TestFunction,
    apply_generator_pm,
    apply_passage_semigroup,
)
from whabm.quadrature import DEFAULT_QUAD

THREADS = os.cpu_count() or 1
KILL_HORIZON = 13.815510557964274  # 1 - 1e-6 quantile of exp(1)
STEP_MODEL = CoefficientModel((0.5, 1.0, 1.5), (1.0, 0.0, -1.0, 0.0), (1.0,) * 4)


# ----------------------------------------------------------------------
# criterion 1: killed-increment experiment, four drift columns


@pytest.fixture(scope="module")
def table1_results():
    sim = SimConfig(n_paths=10_000, dt=1e-4, seed=20250823, horizon=KILL_HORIZON)
    cos_model, _ = cos_drift_model(sim.horizon)
    out = {}
    for name, model in (("v=1", CoefficientModel.constant(1.0, 1.0)),
                        ("v=-1", CoefficientModel.constant(-1.0, 1.0)),
                        ("v=step", STEP_MODEL),
                        ("v=cos", cos_model)):
        out[name] = table1_statistic(model, sim, kill_rate=1.0, threads=THREADS)
    return out


@pytest.mark.parametrize("column, target, window", [
    ("v=1", 0.0, None),
    ("v=-1", 0.0, None),
    ("v=step", -0.1475, 0.03),
    ("v=cos", -0.0803, 0.03),
])
def test_criterion_01_table1_reproduction(table1_results, column, target, window):
    est, se = table1_results[column]
    tol = 3.0 * se if window is None else window
    assert abs(est - target) <= tol, \
        f"{column}: estimate {est:.4f} not within {tol:.4f} of {target}"


# ----------------------------------------------------------------------
# criterion 2: classical constant-coefficient factorization, three routes


@pytest.fixture(scope="module")
def classical_reports():
    cfg = SimConfig(n_paths=4000, dt=1e-3, seed=20250823, horizon=KILL_HORIZON)
    payoffs = (gaussian_bump(0.0, 1.0), triangular_bump(0.0, 2.0), cos_truncated(1.0))
    return {u.name: classical_wh(ConstCoeff(1.0, 1.0), 1.0, u, 0.0, cfg)
            for u in payoffs}


def test_criterion_02_direct_vs_double_integral(classical_reports):
    for name, (direct, order, _) in classical_reports.items():
        rel = direct.abs_error / max(abs(direct.lhs), 1e-12)
        assert rel < 1e-3, f"{name}: relative gap {rel:.2e}"
        assert direct.passed and order.passed


def test_criterion_02_monte_carlo_route(classical_reports):
    for name, (_, _, mc) in classical_reports.items():
        assert mc.passed, f"{name}: MC route off by {mc.abs_error:.2e} " \
                          f"(tolerance {mc.tolerance:.2e})"


@pytest.mark.parametrize("xi", [0.5, 1.0, 2.0])
def test_criterion_02_characteristic_function(xi):
    rep = classical_char_check(ConstCoeff(1.0, 1.0), 1.0, xi)
    assert rep.abs_error < 1e-3
    assert rep.passed


# ----------------------------------------------------------------------
# criterion 3: main factorization identity


GRID_SA = [(s, a) for s in (0.0, 0.25, 0.5) for a in (-0.5, 0.0, 0.5)]


@pytest.mark.parametrize("v, sigma", [(0.0, 1.0), (1.0, 1.0), (-1.0, 2.0)])
def test_criterion_03_main_factorization_constant(v, sigma):
    model = CoefficientModel.constant(v, sigma)
    h = TestFunction.exponential(1.0)
    u = gaussian_bump()
    for s, a in GRID_SA:
        rep = verify_factorization(model, u, h, s, a)
        rel = rep.abs_error / max(abs(rep.lhs), 1e-12)
        assert rel < 1e-3, f"(v={v},sigma={sigma}) at (s={s},a={a}): rel {rel:.2e}"


def test_criterion_03_main_factorization_one_jump(onejump):
    h = TestFunction.exponential(1.0)
    u = gaussian_bump()
    for s, a in GRID_SA:
        rep = verify_factorization(onejump, u, h, s, a)
        rel = rep.abs_error / max(abs(rep.lhs), 1e-12)
        assert rel < 1e-2, f"one-jump at (s={s},a={a}): rel {rel:.2e}"


# ----------------------------------------------------------------------
# criterion 4: stopped factorization at a deterministic horizon


def test_criterion_04_stopped_factorization():
    model = CoefficientModel.constant(1.0, 1.0)
    h = TestFunction.exponential(1.0)
    cfg = SimConfig(n_paths=4000, dt=1e-3, seed=20250823, horizon=KILL_HORIZON)
    for T in (0.5, 1.0, 2.0):
        rep = wh_stopped(model, gaussian_bump(), h, 0.0, 0.0, T, cfg)
        assert rep.passed, f"T={T}: |LHS-RHS|={rep.abs_error:.2e} " \
                           f"exceeds {rep.tolerance:.2e}"


def test_criterion_04_exact_cancellation_at_T_equal_s():
    model = CoefficientModel.constant(1.0, 1.0)
    h = TestFunction.exponential(1.0)
    rep = wh_stopped(model, gaussian_bump(), h, 0.3, 0.1, 0.3)
    assert rep.passed
    assert rep.abs_error <= 1e-10


# ----------------------------------------------------------------------
# criterion 5: noisy operator equation


NOISY_COMBOS = [(0.0, 1.0, 1.0), (1.0, 1.0, 1.0), (-1.0, 2.0, 0.5),
                (2.0, 0.5, 1.0), (-1.0, 1.0, 2.0), (0.5, 1.5, 1.0)]


@pytest.mark.parametrize("v, sigma, c", NOISY_COMBOS)
def test_criterion_05_noisy_constant_segments(v, sigma, c):
    model = CoefficientModel.constant(v, sigma)
    for sign in "+-":
        res = noisy_wh_residual(model, c, 1.0, sign)
        assert abs(res) < 1e-12, f"sign {sign}: residual {res:.2e}"


@pytest.mark.parametrize("sign", ["+", "-"])
@pytest.mark.parametrize("s", [0.2, 0.35])
def test_criterion_05_noisy_one_jump_interior(onejump, s, sign):
    res = noisy_wh_residual(onejump, 1.0, s, sign)
    assert abs(res) < 1e-3, f"s={s} sign {sign}: residual {res:.2e}"


@pytest.mark.parametrize("v, sigma, c", NOISY_COMBOS)
def test_criterion_05_quadratic_root_identity(v, sigma, c):
    for sign in "+-":
        lam = laplace_exponent(ConstCoeff(v, sigma), c, sign)
        sv = v if sign == "+" else -v
        res = 0.5 * sigma * sigma * lam * lam - sv * lam - c
        assert abs(res) < 1e-12


# ----------------------------------------------------------------------
# criterion 6: crossing-rate kernel consistency


def _richardson(f, ells=(4e-3, 2e-3, 1e-3)):
    a, b, c = (f(ell) for ell in ells)
    return (4.0 * (2.0 * c - b) - (2.0 * b - a)) / 3.0


def test_criterion_06_gamma_richardson_constant():
    model = CoefficientModel.constant(0.5, 1.0)
    kernel = GammaKernel(model, DEFAULT_QUAD)
    points = [(0.0, 0.3), (0.0, 1.0), (0.2, 0.5), (0.4, 1.6), (0.1, 2.1)]
    for sign in "+-":
        cc = ConstCoeff(0.5 if sign == "+" else -0.5, 1.0)
        for s, t in points:
            est = _richardson(lambda ell: tail_prob_up(cc, ell, t - s) / ell)
            ref = kernel.gamma_pm(s, t, sign)
            assert est == pytest.approx(ref, rel=1e-3)


def _survival_across_jump(model, sign, s, t, ell):
    """Survival probability composed at the breakpoint via the joint law."""
    segs = model.segments_between(s, t)
    if sign == "-":
        segs = [(-v, sig, d) for v, sig, d in segs]
    (v0, s0, d0), (v1, s1, d1) = segs
    c0, c1 = ConstCoeff(v0, s0), ConstCoeff(v1, s1)
    lo = min(v0 * d0, ell) - 9.0 * s0 * math.sqrt(d0)
    val, _ = scipy_quad(
        lambda x: joint_survival_density(c0, ell, d0, x)
        * tail_prob_up(c1, ell - x, d1), lo, ell, limit=200)
    return val


@pytest.mark.parametrize("sign, s, t", [
    ("+", 0.0, 0.6), ("+", 0.2, 0.9), ("+", 0.45, 0.55),
    ("-", 0.1, 0.7), ("-", 0.3, 1.1), ("-", 0.4, 0.8),
])
def test_criterion_06_gamma_richardson_one_jump(onejump, sign, s, t):
    kernel = GammaKernel(onejump, DEFAULT_QUAD)
    est = _richardson(lambda ell: _survival_across_jump(onejump, sign, s, t, ell) / ell)
    assert est == pytest.approx(kernel.gamma_pm(s, t, sign), rel=1e-3)


def test_criterion_06_gamma_bounds_on_grid(onejump):
    kernel = GammaKernel(onejump, DEFAULT_QUAD)
    pairs = [(0.1 * i, 0.1 * i + 0.05 * j) for i in range(11) for j in range(1, 41)]
    for s, t in pairs:
        b = kernel.bounds_check(round(s, 10), round(t, 10))
        assert b.passed, f"bounds violated at (s={s:.2f}, t={t:.2f})"


def test_criterion_06_gamma_monotone_and_left_continuous(onejump):
    kernel = GammaKernel(onejump, DEFAULT_QUAD)
    # decreasing in t at fixed s
    for sign in "+-":
        vals = [kernel.gamma_pm(0.2, t, sign) for t in np.arange(0.35, 1.8, 0.15)]
        assert all(a > b for a, b in zip(vals, vals[1:]))
    # s-continuity approaching the breakpoint from the left
    t0, t = onejump.breakpoints[0], 1.2
    for sign in "+-":
        base = kernel.gamma_pm(t0, t, sign)
        gaps = [abs(kernel.gamma_pm(t0 - eps, t, sign) - base)
                for eps in (1e-5, 1e-7, 1e-9)]
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] <= 1e-3 * base


# ----------------------------------------------------------------------
# criterion 7: first-kind Volterra equation residuals


VOLTERRA_PAIRS = ((0.0, 0.4), (0.0, 0.8), (0.1, 0.6), (0.2, 1.0), (0.3, 0.9))


@pytest.mark.parametrize("model, tol", [
    (CoefficientModel.constant(1.0, 1.0), 1e-6),
    (CoefficientModel.constant(-1.0, 2.0), 1e-6),
    (CoefficientModel((0.5,), (1.0, -1.0), (1.0, 1.0)), 1e-4),
], ids=["const(1,1)", "const(-1,2)", "one-jump"])
def test_criterion_07_volterra_residuals(model, tol):
    kernel = GammaKernel(model, DEFAULT_QUAD)
    for s, t in VOLTERRA_PAIRS:
        res = kernel.volterra_residual(t, t - s)
        assert abs(res) < tol, f"(s={s}, t={t}): residual {res:.2e}"


# ----------------------------------------------------------------------
# criterion 8: local-time law


@pytest.mark.parametrize("r", [0.25, 0.5, 1.0, 2.0])
def test_criterion_08_localtime_closed_form(r):
    model = CoefficientModel.constant(0.0, 1.0)
    pred = localtime_cdf_predicted(model, 0.0, 1.0, r)
    assert abs(pred - (2.0 * norm.cdf(r) - 1.0)) < 1e-3


@pytest.fixture(scope="module")
def localtime_samples():
    model = CoefficientModel.constant(0.0, 1.0)
    cfg = SimConfig(n_paths=5000, dt=4e-6, seed=20250823, horizon=1.0)
    ens = simulate(model, 0.0, 0.0, cfg)
    return downcrossing_local_time(ens, 0.0, 0.01, 1.0)


def test_criterion_08_localtime_downcrossing_ks(localtime_samples):
    ks = kstest(localtime_samples, halfnorm.cdf).statistic
    assert ks < 0.05, f"KS distance {ks:.4f}"


# ----------------------------------------------------------------------
# criterion 9: semigroup and generator properties


def test_criterion_09_identity_at_zero_level(onejump):
    h = TestFunction.exponential(1.0)
    for s in (0.0, 0.3, 0.8):
        assert apply_passage_semigroup(onejump, 0.0, h, s, "+") == h.func(s)
        assert apply_passage_semigroup(onejump, 0.0, h, s, "-") == h.func(s)


def test_criterion_09_semigroup_law(onejump):
    h = TestFunction.exponential(1.0)
    s, k, ell = 0.2, 0.25, 0.3
    inner = lambda w: apply_passage_semigroup(onejump, ell, h, w, "+")
    composed = apply_passage_semigroup(onejump, k, inner, s, "+")
    direct = apply_passage_semigroup(onejump, k + ell, h, s, "+")
    assert composed == pytest.approx(direct, rel=1e-3)


def test_criterion_09_commutation_constant():
    model = CoefficientModel.constant(0.5, 1.0)
    h = TestFunction.exponential(1.0)
    k, ell, s = 0.4, 0.7, 0.2
    pm = apply_passage_semigroup(
        model, k, lambda w: apply_passage_semigroup(model, ell, h, w, "-"), s, "+")
    mp = apply_passage_semigroup(
        model, ell, lambda w: apply_passage_semigroup(model, k, h, w, "+"), s, "-")
    assert pm == pytest.approx(mp, rel=1e-3)


def test_criterion_09_contraction_and_positivity(onejump):
    h = TestFunction.exponential(1.0)
    for sign in "+-":
        for ell in (0.2, 0.5, 1.0):
            for s in (0.0, 0.3, 0.7):
                val = apply_passage_semigroup(onejump, ell, h, s, sign)
                assert 0.0 <= val <= h.func(s) * (1.0 + 1e-9)


def test_criterion_09_generator_difference_quotient(onejump):
    h = TestFunction.exponential(1.0)
    cases = [(CoefficientModel.constant(0.5, 1.0), 0.4), (onejump, 0.3)]
    for model, s in cases:
        kernel = GammaKernel(model, DEFAULT_QUAD)
        target = apply_generator_pm(kernel, h, s, "+")
        errs = []
        for ell in (4e-3, 2e-3, 1e-3):
            q = (apply_passage_semigroup(model, ell, h, s, "+") - h.func(s)) / ell
            errs.append(abs(q - target))
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] <= 1e-3 * abs(target)


# ----------------------------------------------------------------------
# criterion 10: strict and non-strict passage detection coincide


@pytest.mark.parametrize("model", [
    CoefficientModel.constant(1.0, 1.0),
    CoefficientModel.constant(0.0, 1.0),
    CoefficientModel((0.5,), (1.0, -1.0), (1.0, 1.0)),
], ids=["const(1,1)", "const(0,1)", "one-jump"])
def test_criterion_10_strict_nonstrict_equality(model):
    cfg = SimConfig(n_paths=10_000, dt=1e-3, seed=8, horizon=1.0)
    ens = simulate(model, 0.0, 0.0, cfg)
    for sign, ell in (("+", 0.5), ("-", -0.5)):
        tau = first_passage(ens, ell, sign, strict=False)
        eta = first_passage(ens, ell, sign, strict=True)
        agree = float(np.mean(tau == eta))
        assert agree == 1.0, f"sign {sign}: {agree:.4%} agreement"


# ----------------------------------------------------------------------
# criterion 11: determinism of the command-line artifacts


def test_criterion_11_reruns_byte_identical(tmp_path, capsys):
    args = ["gap", "--model", "const:v=1,sigma=1", "simulation.n_paths=600",
            "simulation.dt=0.001", "--seed", "5"]
    assert cli_main([*args, "--out", str(tmp_path / "r1")]) == 0
    assert cli_main([*args, "--out", str(tmp_path / "r2")]) == 0
    assert (tmp_path / "r1" / "gap.csv").read_bytes() == \
        (tmp_path / "r2" / "gap.csv").read_bytes()
    m1 = json.loads((tmp_path / "r1" / "manifest.json").read_text())
    m2 = json.loads((tmp_path / "r2" / "manifest.json").read_text())
    for key in ("config", "seed", "overrides", "artifacts", "all_passed"):
        assert m1[key] == m2[key]


def test_criterion_11_thread_count_invariance(tmp_path, capsys):
    for sub, extra in (("gap", ["--model", "const:v=1,sigma=1",
                                "simulation.n_paths=600", "simulation.dt=0.001"]),
                       ("table1", ["simulation.n_paths=400", "simulation.dt=0.01",
                                   "--tolerance-scale", "1e9"])):
        args = [sub, *extra, "--seed", "5"]
        assert cli_main([*args, "--threads", "1",
                         "--out", str(tmp_path / f"{sub}_t1")]) == 0
        assert cli_main([*args, "--threads", "4",
                         "--out", str(tmp_path / f"{sub}_t4")]) == 0
        assert (tmp_path / f"{sub}_t1" / f"{sub}.csv").read_bytes() == \
            (tmp_path / f"{sub}_t4" / f"{sub}.csv").read_bytes()
