"""Passage-time semigroups indexed by barrier distance, their generators, and
resolvent-type integrals.

The central objects act on functions of *time*: ``(P+_ell f)(s)`` is the
expectation of ``f`` at the up-passage time of a barrier ``ell`` above the
running process started at time ``s`` (with ``f(infinity) = 0`` for the mass
that never crosses), ``(P-_ell f)(s)`` the mirrored down-passage version, and
the generators are integral operators against the crossing-rate kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.interpolate import make_smoothing_spline

from .closed_form import (
    ConstCoeff,
    joint_survival_density,
    laplace_exponent,
    passage_density_down,
    passage_density_up,
    tail_prob_down,
)
from .coefficients import CoefficientModel
from .quadrature import DEFAULT_QUAD, TAIL_SDS, QuadratureSpec, integrate_adaptive

__all__ = [
    "TestFunction",
    "QuadratureSpec",
    "UnsupportedModelError",
    "apply_passage_semigroup",
    "apply_generator_pm",
    "apply_gamma",
    "apply_homogeneous_semigroup",
    "homogeneous_semigroup_indicator",
    "resolvent_integral",
    "composed_density_check",
]

#: semigroup recursion cap: one quadrature dimension per breakpoint crossed
MAX_CROSSED_BREAKS = 3


class UnsupportedModelError(ValueError):
    """The requested operation is only defined for a narrower model class."""


@dataclass(frozen=True)
class TestFunction:
    """A time test function ``f`` with known cadlag derivative ``g_f``.

    ``f(t) = -integral_t^inf g_f(r) dr`` and ``|g_f(t)| <= K e^{-kappa t}``,
    so every operator integral below converges.  ``jumps`` lists the
    discontinuity points of ``g_f`` (quadrature splits there), ``support_end``
    an optional time beyond which ``f`` and ``g_f`` vanish identically.
    ``rate`` is set when ``f`` is exactly ``A e^{-rate t}``, unlocking closed
    forms for constant segments.
    """

    __test__ = False  # keep pytest from collecting this as a test class

    func: Callable[[float], float]
    gf: Callable[[float], float]
    decay: tuple[float, float]
    support_end: float | None = None
    jumps: tuple[float, ...] = ()
    rate: float | None = None

    @classmethod
    def exponential(cls, rate: float, amplitude: float = 1.0) -> "TestFunction":
        if rate <= 0.0:
            raise ValueError("rate must be > 0")
        return cls(
            func=lambda t: amplitude * math.exp(-rate * t),
            gf=lambda t: -rate * amplitude * math.exp(-rate * t),
            decay=(abs(amplitude) * rate, rate),
            rate=rate,
        )

    @classmethod
    def from_samples(cls, ts, ys, *, jumps: tuple[float, ...] = (),
                     decay: tuple[float, float] | None = None) -> "TestFunction":
        """Fit a sampled function; ``g_f`` is the derivative of a smoothing spline.

        The grid must contain every declared jump so each smooth piece gets
        its own spline.  Outside the sampled range the function is taken to be
        0, so sample far enough into the decaying tail.
        """
        ts = np.asarray(ts, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if ts.ndim != 1 or ts.shape != ys.shape or ts.size < 8:
            raise ValueError("need matching 1-d arrays with at least 8 samples")
        if np.any(np.diff(ts) <= 0):
            raise ValueError("sample times must be strictly increasing")
        cuts = [float(ts[0])] + [j for j in sorted(jumps) if ts[0] < j < ts[-1]] \
            + [float(ts[-1])]
        pieces = []
        for lo, hi in zip(cuts, cuts[1:]):
            mask = (ts >= lo - 1e-12) & (ts <= hi + 1e-12)
            if mask.sum() < 5:
                raise ValueError(f"too few samples in piece [{lo}, {hi}]")
            spl = make_smoothing_spline(ts[mask], ys[mask])
            pieces.append((lo, hi, spl, spl.derivative()))
        t_end = float(ts[-1])

        def _locate(t):
            for lo, hi, spl, dspl in pieces:
                if t <= hi:
                    return spl, dspl
            return None, None

        def func(t):
            if t < ts[0] or t > t_end:
                return 0.0
            spl, _ = _locate(t)
            return float(spl(t))

        def gf(t):
            if t < ts[0] or t > t_end:
                return 0.0
            _, dspl = _locate(t)
            return float(dspl(t))

        if decay is None:
            tail = abs(ys[-1]) + 1e-300
            prev = abs(ys[-2]) + 1e-300
            kappa = max(math.log(prev / tail) / (ts[-1] - ts[-2]), 1e-3) \
                if prev > tail else 1e-3
            decay = (float(np.max(np.abs(ys))) * kappa * 3.0, kappa)
        return cls(func=func, gf=gf, decay=decay, support_end=t_end,
                   jumps=tuple(sorted(jumps)))


def _callable_of(f):
    return f.func if isinstance(f, TestFunction) else f


# ----------------------------------------------------------------------
# passage semigroups


def apply_passage_semigroup(model: CoefficientModel, ell: float, f, s: float,
                            sign: str, spec: QuadratureSpec = DEFAULT_QUAD,
                            closed_exp: bool = True) -> float:
    """``(P^sign_ell f)(s)`` for a piecewise-constant model.

    Constant stretches integrate ``f`` against the passage-time density in
    closed form under the ``r = u^2`` substitution; each breakpoint ahead of
    ``s`` contributes one conditioning quadrature splitting the mass into
    "crossed within the segment" and "survived to the breakpoint at some
    level".  ``closed_exp=False`` forces the quadrature route even where the
    exact-exponential action is known (used by consistency tests).
    """
    if ell < 0.0:
        raise ValueError("ell must be >= 0")
    if sign == "-":
        model = model.negated()
    elif sign != "+":
        raise ValueError(f"sign must be '+' or '-', got {sign!r}")
    fv = _callable_of(f)
    if ell == 0.0:
        return fv(s)
    support_end = f.support_end if isinstance(f, TestFunction) else None
    rate = f.rate if (closed_exp and isinstance(f, TestFunction)) else None
    ahead = [b for b in model.breakpoints if b > s]
    if support_end is not None:
        ahead = [b for b in ahead if b < support_end]
    if len(ahead) > MAX_CROSSED_BREAKS:
        raise UnsupportedModelError(
            f"{len(ahead)} breakpoints ahead of s={s} exceed the recursion cap "
            f"({MAX_CROSSED_BREAKS})")
    return _semigroup_up(model, ell, fv, s, spec, support_end, rate)


def _semigroup_up(model, ell, fv, s, spec, support_end, rate) -> float:
    if ell == 0.0:
        return fv(s)
    seg = model.segment_index(s)
    c = ConstCoeff(model.v[seg], model.sigma[seg])
    ahead = [b for b in model.breakpoints if b > s]
    if support_end is not None:
        ahead = [b for b in ahead if b < support_end]

    if not ahead:
        if rate is not None:
            return fv(s) * math.exp(ell * laplace_exponent(c, rate, "+"))

        def tail_integrand(u):
            r = u * u
            if r <= 0.0:
                return 0.0
            return 2.0 * u * passage_density_up(c, ell, r) * fv(s + r)

        upper = math.inf if support_end is None else math.sqrt(max(support_end - s, 0.0))
        if upper == 0.0:
            return 0.0
        return integrate_adaptive(tail_integrand, 0.0, upper, spec)

    b = ahead[0]
    delta = b - s

    def crossing_integrand(u):
        r = u * u
        if r <= 0.0:
            return 0.0
        return 2.0 * u * passage_density_up(c, ell, r) * fv(s + r)

    crossed = integrate_adaptive(crossing_integrand, 0.0, math.sqrt(delta), spec)

    sd = c.sigma * math.sqrt(delta)
    lo = min(c.v * delta, ell) - (TAIL_SDS + 0.5) * sd

    def surviving_integrand(y):
        if y >= ell:
            return 0.0
        dens = joint_survival_density(c, ell, delta, y)
        if dens == 0.0:
            return 0.0
        return dens * _semigroup_up(model, ell - y, fv, b, spec, support_end, rate)

    survived = integrate_adaptive(surviving_integrand, lo, ell, spec)
    return crossed + survived


# ----------------------------------------------------------------------
# generators


def apply_generator_pm(kernel, f: TestFunction, s: float, sign: str) -> float:
    """``(Gamma^sign f)(s) = integral_s^inf g_f(r) gamma^sign(s, r) dr``.

    The kernel blows up like ``(r - s)^{-1/2}`` at ``r = s``; the first piece
    is integrated under ``r = s + u^2``.  Later pieces split at declared
    ``g_f`` jumps and at model breakpoints, where the kernel has kinks.
    """
    spec = kernel.quad
    knots = sorted(
        {j for j in f.jumps if j > s}
        | {b for b in kernel.model.breakpoints if b > s}
    )
    upper = f.support_end if f.support_end is not None else math.inf
    knots = [k for k in knots if k < upper]

    first_hi = knots[0] if knots else upper

    def near(u):
        r = s + u * u
        if u <= 0.0 or r <= s:
            return 0.0
        return 2.0 * u * f.gf(r) * kernel.gamma_pm(s, r, sign)

    u_hi = math.sqrt(first_hi - s) if math.isfinite(first_hi) else math.inf
    total = integrate_adaptive(near, 0.0, u_hi, spec)

    edges = [*knots, upper]
    for lo, hi in zip(edges, edges[1:]):
        total += integrate_adaptive(
            lambda r: f.gf(r) * kernel.gamma_pm(s, r, sign), lo, hi, spec)
    return total


def apply_gamma(kernel, f: TestFunction, s: float) -> float:
    """``(Gamma f)(s)``: sum of the two one-sided generator applications."""
    return apply_generator_pm(kernel, f, s, "+") + apply_generator_pm(kernel, f, s, "-")


# ----------------------------------------------------------------------
# space-homogeneous semigroup and resolvent


def apply_homogeneous_semigroup(model: CoefficientModel, ell: float, f, s: float,
                                spec: QuadratureSpec = DEFAULT_QUAD,
                                closed_exp: bool = True) -> float:
    """``(P_ell f)(s)`` as the composition of up- then down-passage at ``ell``.

    Only constant-coefficient models are supported: the composition rule is
    established there and conjectural beyond (see :func:`resolvent_integral`
    for the explicitly flagged extension).
    """
    if not model.is_constant:
        raise UnsupportedModelError(
            "homogeneous semigroup composition is only available for "
            "constant-coefficient models")
    if ell == 0.0:
        return _callable_of(f)(s)
    if closed_exp and isinstance(f, TestFunction) and f.rate is not None:
        c = ConstCoeff(model.v[0], model.sigma[0])
        lam = laplace_exponent(c, f.rate, "+") + laplace_exponent(c, f.rate, "-")
        return f.func(s) * math.exp(ell * lam)

    inner = lambda w: apply_passage_semigroup(model, ell, f, w, "-", spec, closed_exp)
    return apply_passage_semigroup(model, ell, inner, s, "+", spec, closed_exp)


def homogeneous_semigroup_indicator(c: ConstCoeff, ell: float, s: float, T: float,
                                    spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``(P_ell 1_[0,T])(s)`` in closed composed form (no nested quadrature).

    The down-passage stage applied to the indicator is a passage-time
    distribution function, so only the up-passage integral remains.
    """
    if ell < 0.0:
        raise ValueError("ell must be >= 0")
    if s > T:
        return 0.0
    if ell == 0.0:
        return 1.0
    span = T - s

    def integrand(q):
        r = q * q
        rem = span - r
        if r <= 0.0 or rem <= 0.0:
            return 0.0
        return 2.0 * q * passage_density_up(c, ell, r) * (1.0 - tail_prob_down(c, ell, rem))

    return integrate_adaptive(integrand, 0.0, math.sqrt(span), spec)


def resolvent_integral(model: CoefficientModel, h: TestFunction, s: float,
                       spec: QuadratureSpec = DEFAULT_QUAD,
                       allow_conjectured: bool = False) -> float:
    """``(integral_0^inf P_y h dy)(s)``.

    Constant model with exponential ``h``: closed form
    ``h(s) / (-(lambda+ + lambda-))``.  Constant model, general ``h``: outer
    adaptive quadrature over the barrier distance.  Non-constant models have
    no proven composition rule for ``P_y``; with ``allow_conjectured=True``
    the up-then-down composition is used anyway and callers must flag the
    result as conjecture-dependent.
    """
    if model.is_constant:
        if h.rate is not None:
            c = ConstCoeff(model.v[0], model.sigma[0])
            denom = -(laplace_exponent(c, h.rate, "+") + laplace_exponent(c, h.rate, "-"))
            return h.func(s) / denom
        return integrate_adaptive(
            lambda y: apply_homogeneous_semigroup(model, y, h, s, spec),
            0.0, math.inf, spec)
    if not allow_conjectured:
        raise UnsupportedModelError(
            "resolvent for a non-constant model requires the conjectured "
            "up/down composition; pass allow_conjectured=True to opt in")

    def composed(y):
        if y <= 0.0:
            return h.func(s)
        inner = lambda w: apply_passage_semigroup(model, y, h, w, "-", spec)
        return apply_passage_semigroup(model, y, inner, s, "+", spec)

    return integrate_adaptive(composed, 0.0, math.inf, spec)


# ----------------------------------------------------------------------
# composed passage density diagnostics


class ComposedDensityCheck(NamedTuple):
    """Two evaluations of the up-then-down passage-time density at ``t``.

    ``convolution`` integrates the two single-barrier densities directly and
    is treated as ground truth.  ``alternative`` evaluates a previously
    reported closed-form expression whose normalization disagrees; it is
    returned so the discrepancy stays visible instead of being silently
    papered over.
    """

    convolution: float
    alternative: float


def composed_density_check(c: ConstCoeff, k: float, ell: float, t: float,
                           spec: QuadratureSpec = DEFAULT_QUAD) -> ComposedDensityCheck:
    if k <= 0.0 or ell <= 0.0 or t <= 0.0:
        raise ValueError("need k, ell, t > 0")

    def conv_core(r):
        rem = t - r
        if r <= 0.0 or rem <= 0.0:
            return 0.0
        return passage_density_up(c, k, r) * passage_density_down(c, ell, rem)

    half = math.sqrt(t / 2.0)
    conv = integrate_adaptive(lambda u: 2.0 * u * conv_core(u * u), 0.0, half, spec)
    conv += integrate_adaptive(lambda w: 2.0 * w * conv_core(t - w * w), 0.0, half, spec)

    sig = c.sigma
    pref = ell * ell * math.exp(-c.v * c.v * t / 2.0) / (2.0 * math.pi * sig * sig)

    def alt_core(r):
        rem = t - r
        if r <= 0.0 or rem <= 0.0:
            return 0.0
        expo = ell * ell * t / (sig * r * rem)
        if expo > 745.0:
            return 0.0
        return r ** -1.5 * rem ** -1.5 * math.exp(-expo)

    alt = integrate_adaptive(lambda u: 2.0 * u * alt_core(u * u), 0.0, half, spec)
    alt += integrate_adaptive(lambda w: 2.0 * w * alt_core(t - w * w), 0.0, half, spec)
    return ComposedDensityCheck(conv, pref * alt)
