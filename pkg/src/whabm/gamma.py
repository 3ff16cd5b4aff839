"""Vanishing-barrier crossing-rate kernels for piecewise-constant models.

``gamma_pm(s, t, sign)`` is the limit of ``ell^-1 P(no passage of the barrier
at distance ell placed at time s, up to time t)`` as ``ell -> 0+``.  Within a
single coefficient segment it has a closed form; across breakpoints it is an
integral of the already-differentiated survival weight of the first segment
against the survival probability of the remaining ones, one quadrature
dimension per interior breakpoint.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .closed_form import (
    ConstCoeff,
    gamma_const,
    joint_survival_density,
    tail_prob_up,
)
from .coefficients import CoefficientModel
from .quadrature import DEFAULT_QUAD, TAIL_SDS, QuadratureSpec, integrate_adaptive

_SQRT_2PI = math.sqrt(2.0 * math.pi)

#: recursion depth cap: one quadrature dimension per interior breakpoint
MAX_RECURSIVE_BREAKS = 3


def _segment_weight(x, v: float, sigma: float, dt: float):
    """d/d(ell) at ell=0 of the joint survival density, evaluated at ``y=-x``.

    This is the mass that survives the first segment ending at (signed)
    distance ``x`` below the vanishing barrier, already differentiated in the
    barrier level so no numerical ``ell -> 0`` limit is ever taken.
    """
    z = (x + v * dt) ** 2 / (2.0 * sigma * sigma * dt)
    return 2.0 * x / (sigma ** 3 * _SQRT_2PI * dt ** 1.5) * np.exp(-np.minimum(z, 745.0))


def _survival_up(x: float, segs: list[tuple[float, float, float]],
                 spec: QuadratureSpec) -> float:
    """``P(no up-passage of a barrier at distance x)`` across ``segs``."""
    if x <= 0.0:
        return 0.0
    v, sig, dt = segs[0]
    if len(segs) == 1:
        return tail_prob_up(ConstCoeff(v, sig), x, dt)
    lo = min(v * dt - TAIL_SDS * sig * math.sqrt(dt), x - 1e-12)

    def integrand(y):
        if y >= x:
            return 0.0
        return joint_survival_density(ConstCoeff(v, sig), x, dt, y) * _survival_up(
            x - y, segs[1:], spec)

    return integrate_adaptive(integrand, lo, x, spec.scaled(10.0 ** (3 - len(segs))))


def _survival_lattice(x: float, segs: list[tuple[float, float, float]],
                      n_grid: int = 1400) -> float:
    """Grid-propagation fallback for deep segment stacks (approximate)."""
    if x <= 0.0:
        return 0.0
    drift_span = sum(abs(v) * dt for v, _, dt in segs)
    sd_span = math.sqrt(sum(sig * sig * dt for _, sig, dt in segs))
    lo = x - (drift_span + TAIL_SDS * sd_span + x)
    ys = np.linspace(lo, x, n_grid)
    h = ys[1] - ys[0]
    v, sig, dt = segs[0]
    dens = joint_survival_density(ConstCoeff(v, sig), x, dt, np.minimum(ys, x - 1e-12))
    dens[-1] = 0.0
    for v, sig, dt in segs[1:]:
        c = ConstCoeff(v, sig)
        barrier = np.maximum(x - ys, 1e-12)  # distance to the barrier from y_j
        new = np.zeros_like(dens)
        for i, z in enumerate(ys[:-1]):
            incr = np.minimum(z - ys, barrier - 1e-13)
            new[i] = h * np.dot(joint_survival_density(c, barrier, dt, incr), dens)
        dens = new
    return float(h * np.sum(dens))


@dataclass(frozen=True)
class GammaBounds:
    """Envelope check result at one ``(s, t)``; failures are reported, not raised."""

    s: float
    t: float
    lower: float
    upper: float
    gamma_plus: float
    gamma_minus: float
    tol: float
    passed: bool


@dataclass(frozen=True)
class GammaKernel:
    model: CoefficientModel
    quad: QuadratureSpec = field(default_factory=QuadratureSpec)

    def _segments(self, s: float, t: float) -> list[tuple[float, float, float]]:
        return self.model.segments_between(s, t)

    def gamma_pm(self, s: float, t: float, sign: str) -> float:
        """Crossing-rate kernel for the upper (+) or lower (-) barrier."""
        if not 0.0 <= s < t:
            raise ValueError(f"need 0 <= s < t, got s={s} t={t}")
        segs = self._segments(s, t)
        if sign == "-":
            segs = [(-v, sig, dt) for v, sig, dt in segs]
        elif sign != "+":
            raise ValueError(f"sign must be '+' or '-', got {sign!r}")
        if len(segs) == 1:
            v, sig, dt = segs[0]
            return gamma_const(ConstCoeff(v, sig), dt, "+")
        v0, sig0, dt0 = segs[0]
        rest = segs[1:]
        if len(rest) > MAX_RECURSIVE_BREAKS:
            warnings.warn(
                f"{len(rest)} interior breakpoints exceed the recursion cap "
                f"({MAX_RECURSIVE_BREAKS}); using the approximate lattice fallback",
                stacklevel=2,
            )
            return self._gamma_lattice(v0, sig0, dt0, rest)

        cutoff = abs(v0) * dt0 + (TAIL_SDS + 0.5) * sig0 * math.sqrt(dt0)

        def integrand(x):
            if x <= 0.0:
                return 0.0
            return _segment_weight(x, v0, sig0, dt0) * _survival_up(x, rest, self.quad)

        return integrate_adaptive(integrand, 0.0, cutoff, self.quad)

    def _gamma_lattice(self, v0, sig0, dt0, rest) -> float:
        def gamma_at(ell):
            # finite difference of the full survival probability in the level
            segs = [(v0, sig0, dt0), *rest]
            return _survival_lattice(ell, segs) / ell

        g0, g1, g2 = gamma_at(4e-3), gamma_at(2e-3), gamma_at(1e-3)
        r1, r2 = 2 * g1 - g0, 2 * g2 - g1
        return (4 * r2 - r1) / 3.0

    def gamma_total(self, s: float, t: float) -> float:
        return self.gamma_pm(s, t, "+") + self.gamma_pm(s, t, "-")

    def bounds_check(self, s: float, t: float) -> GammaBounds:
        """Evaluate the constant-envelope bounds and test both kernels against them."""
        v_inf, sig_lo, sig_hi = self.model.envelope()
        dt = t - s
        rate = v_inf / (sig_lo * sig_lo)
        lower = gamma_const(ConstCoeff(rate, 1.0), sig_hi * sig_hi * dt, "+")
        upper = gamma_const(ConstCoeff(-rate, 1.0), sig_lo * sig_lo * dt, "+")
        gp = self.gamma_pm(s, t, "+")
        gm = self.gamma_pm(s, t, "-")
        tol = 10.0 * self.quad.abs_tol + self.quad.rel_tol * upper
        ok = (lower - tol <= gp <= upper + tol) and (lower - tol <= gm <= upper + tol)
        return GammaBounds(s, t, lower, upper, gp, gm, tol, ok)

    # ------------------------------------------------------------------
    # Volterra residual

    def _marginal_density_at_zero(self, s: float, t: float) -> float:
        m = self.model.integrated_drift(s, t)
        var = self.model.integrated_variance(s, t)
        return math.exp(-m * m / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)

    def volterra_residual(self, r: float, q: float) -> float:
        """Defect of the first-kind integral identity tying gamma to the marginal.

        ``integral_0^q gamma(r-z, r) * rho_0(r-q, r-z) * sigma^2(r-z) dz`` should
        equal 2, where ``rho_0`` is the process density at the origin.  Both
        endpoints carry inverse-square-root singularities, removed by splitting
        at ``q/2`` and substituting ``z = u^2`` and ``q - z = w^2``.
        """
        if not 0.0 < q <= r:
            raise ValueError(f"need 0 < q <= r, got r={r} q={q}")

        def core(z):
            sig = self.model.sigma_at(r - z)
            return (self.gamma_total(r - z, r)
                    * self._marginal_density_at_zero(r - q, r - z) * sig * sig)

        def left(u):  # z = u^2 near the gamma singularity at z = 0
            z = u * u
            if z <= 0.0 or z >= q:
                return 0.0
            return 2.0 * u * core(z)

        def right(w):  # q - z = w^2 near the density singularity at z = q
            z = q - w * w
            if z <= 0.0 or z >= q:
                return 0.0
            return 2.0 * w * core(z)

        half = math.sqrt(q / 2.0)
        pts = [math.sqrt(b) for b in (r - b2 for b2 in self.model.breakpoints)
               if 0.0 < b < q / 2.0]
        total = integrate_adaptive(left, 0.0, half, self.quad, points=pts or None)
        pts2 = [math.sqrt(q - zz) for zz in (r - b for b in self.model.breakpoints)
                if q / 2.0 < zz < q]
        total += integrate_adaptive(right, 0.0, half, self.quad, points=pts2 or None)
        return total - 2.0
