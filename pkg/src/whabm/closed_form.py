"""Closed-form passage laws for constant coefficients.

Everything here is for the process ``a + v t + sigma W_t`` and an upper
barrier at distance ``ell`` (down-passage quantities are obtained by the
mirror ``v -> -v``).  These are the building blocks for the piecewise-constant
kernels, semigroups and the factorization checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtr

from .quadrature import DEFAULT_QUAD, QuadratureSpec, integrate_adaptive

_SQRT_2PI = math.sqrt(2.0 * math.pi)
#: exp underflows to 0 below this exponent; we cut there explicitly so the
#: surrounding arithmetic never sees denormals.
_EXP_UNDERFLOW = 745.0


@dataclass(frozen=True)
class ConstCoeff:
    """A single coefficient pair ``(v, sigma)`` with ``sigma > 0``."""

    v: float
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.v) and math.isfinite(self.sigma)):
            raise ValueError("coefficients must be finite")
        if self.sigma <= 0.0:
            raise ValueError("sigma must be > 0")

    def mirrored(self) -> "ConstCoeff":
        return ConstCoeff(-self.v, self.sigma)


def _maybe_scalar(x, scalar: bool):
    return float(x) if scalar else x


def tail_prob_up(c: ConstCoeff, ell, dt):
    """``P(no up-passage over an upper barrier at distance ell within dt)``.

    Accepts scalars or arrays for ``ell``/``dt`` (broadcasting).  ``ell < 0``
    means the barrier was already reached at the start, so the probability is
    0.  The reflection term ``exp(2 v ell / sigma^2) * Phi(-z2)`` is assembled
    in log space: each factor can overflow/underflow on its own while the
    product stays in ``[0, 1]``.
    """
    ell_a, dt_a = np.asarray(ell, dtype=float), np.asarray(dt, dtype=float)
    scalar = ell_a.ndim == 0 and dt_a.ndim == 0
    if np.any(dt_a <= 0.0):
        raise ValueError("dt must be > 0")
    v, sig = c.v, c.sigma
    sd = sig * np.sqrt(dt_a)
    with np.errstate(over="ignore", under="ignore"):
        z1 = (ell_a - v * dt_a) / sd
        z2 = (ell_a + v * dt_a) / sd
        log_refl = 2.0 * v * ell_a / (sig * sig) + log_ndtr(-z2)
        p = ndtr(z1) - np.where(log_refl < -_EXP_UNDERFLOW, 0.0, np.exp(log_refl))
    p = np.clip(p, 0.0, 1.0)
    p = np.where(ell_a < 0.0, 0.0, p)
    return _maybe_scalar(p, scalar)


def tail_prob_down(c: ConstCoeff, ell, dt):
    """Down-passage analogue of :func:`tail_prob_up` (barrier ``ell`` below)."""
    return tail_prob_up(c.mirrored(), ell, dt)


def passage_density_up(c: ConstCoeff, ell, r):
    """First-passage-time density at elapsed time ``r`` for barrier ``ell > 0``."""
    ell_a, r_a = np.asarray(ell, dtype=float), np.asarray(r, dtype=float)
    scalar = ell_a.ndim == 0 and r_a.ndim == 0
    if np.any(ell_a <= 0.0):
        raise ValueError("ell must be > 0")
    if np.any(r_a <= 0.0):
        raise ValueError("r must be > 0")
    v, sig = c.v, c.sigma
    expo = (ell_a - v * r_a) ** 2 / (2.0 * sig * sig * r_a)
    pref = ell_a / (sig * _SQRT_2PI * r_a ** 1.5)
    out = np.where(expo > _EXP_UNDERFLOW, 0.0, pref * np.exp(-np.minimum(expo, _EXP_UNDERFLOW)))
    return _maybe_scalar(out, scalar)


def passage_density_down(c: ConstCoeff, ell, r):
    return passage_density_up(c.mirrored(), ell, r)


def total_passage_prob_up(c: ConstCoeff, ell: float) -> float:
    """``P(up-passage ever happens)``: 1 if drift >= 0, else exp(2 v ell / sigma^2)."""
    if ell <= 0.0:
        return 1.0
    if c.v >= 0.0:
        return 1.0
    return math.exp(2.0 * c.v * ell / (c.sigma * c.sigma))


def joint_survival_density(c: ConstCoeff, ell, dt, y):
    """Density in ``y`` of {position = y at time dt, no up-passage of ell yet}.

    Reflection form: free Gaussian minus the image mass re-weighted by
    ``exp(2 v ell / sigma^2)``; nonnegative for ``y < ell`` and vanishing at
    ``y = ell``.
    """
    ell_a = np.asarray(ell, dtype=float)
    dt_a = np.asarray(dt, dtype=float)
    y_a = np.asarray(y, dtype=float)
    scalar = ell_a.ndim == 0 and dt_a.ndim == 0 and y_a.ndim == 0
    if np.any(dt_a <= 0.0):
        raise ValueError("dt must be > 0")
    if np.any(y_a >= ell_a):
        raise ValueError("need y < ell")
    v, sig = c.v, c.sigma
    var = sig * sig * dt_a
    e1 = -((y_a - v * dt_a) ** 2) / (2.0 * var)
    e2 = 2.0 * v * ell_a / (sig * sig) - (2.0 * ell_a - y_a + v * dt_a) ** 2 / (2.0 * var)
    with np.errstate(under="ignore"):
        t1 = np.where(e1 < -_EXP_UNDERFLOW, 0.0, np.exp(np.maximum(e1, -_EXP_UNDERFLOW)))
        t2 = np.where(e2 < -_EXP_UNDERFLOW, 0.0, np.exp(np.maximum(e2, -_EXP_UNDERFLOW)))
    out = np.clip((t1 - t2) / np.sqrt(2.0 * math.pi * var), 0.0, None)
    return _maybe_scalar(out, scalar)


def gamma_const(c: ConstCoeff, dt, sign: str):
    """Vanishing-barrier crossing rate ``lim ell^-1 P(no passage of +-ell by dt)``.

    ``sign`` is ``'+'`` for the upper barrier, ``'-'`` for the lower one
    (equivalent to flipping the drift).
    """
    sv = _signed_drift(c.v, sign)
    dt_a = np.asarray(dt, dtype=float)
    scalar = dt_a.ndim == 0
    if np.any(dt_a <= 0.0):
        raise ValueError("dt must be > 0")
    sig = c.sigma
    sig2 = sig * sig
    out = (
        math.sqrt(2.0 / math.pi) / (sig * np.sqrt(dt_a)) * np.exp(-sv * sv * dt_a / (2.0 * sig2))
        - (2.0 * sv / sig2) * ndtr(-(sv / sig) * np.sqrt(dt_a))
    )
    return _maybe_scalar(out, scalar)


def _signed_drift(v: float, sign: str) -> float:
    if sign == "+":
        return v
    if sign == "-":
        return -v
    raise ValueError(f"sign must be '+' or '-', got {sign!r}")


def tail_envelope_bounds(v_inf: float, sigma_lo: float, sigma_hi: float, ell, dt):
    """Two-sided envelope for the up-passage tail of a varying-coefficient model.

    The bounds are tails of unit-volatility drifted Brownian motions: the
    lower one pushes toward the barrier with drift ``+v_inf / sigma_lo^2``
    over the stretched clock ``sigma_hi^2 dt``, the upper one pushes away with
    the mirrored drift over the slowed clock ``sigma_lo^2 dt``.
    """
    if not (0.0 < sigma_lo <= sigma_hi):
        raise ValueError("need 0 < sigma_lo <= sigma_hi")
    if v_inf < 0.0:
        raise ValueError("v_inf is a sup-norm, must be >= 0")
    rate = v_inf / (sigma_lo * sigma_lo)
    lower = tail_prob_up(ConstCoeff(rate, 1.0), ell, sigma_hi * sigma_hi * np.asarray(dt, float))
    upper = tail_prob_up(ConstCoeff(-rate, 1.0), ell, sigma_lo * sigma_lo * np.asarray(dt, float))
    return lower, upper


def laplace_exponent(c: ConstCoeff, rate: float, sign: str) -> float:
    """Exponential-decay rate of the passage semigroup acting on ``e^{-rate t}``.

    Returns the nonpositive root ``lambda`` of
    ``sigma^2 lambda^2 / 2 -+ v lambda - rate = 0``; the semigroup at barrier
    distance ``ell`` scales ``e^{-rate t}`` by ``e^{ell lambda}``.
    """
    if rate <= 0.0:
        raise ValueError("rate must be > 0")
    sv = _signed_drift(c.v, sign)
    sig2 = c.sigma * c.sigma
    return sv / sig2 - math.sqrt(sv * sv / (sig2 * sig2) + 2.0 * rate / sig2)


def total_passage_time_transform(c: ConstCoeff, rate: float, ell: float, sign: str) -> float:
    """``E exp(-rate * passage time)`` for a barrier at distance ``ell >= 0``."""
    if ell < 0.0:
        raise ValueError("ell must be >= 0")
    return math.exp(ell * laplace_exponent(c, rate, sign))


def passage_tail_integral(c: ConstCoeff, ell: float, t_end: float,
                          spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``integral_0^t_end`` of the passage density, via the ``r = u^2`` substitution.

    Convenience used by cross-checks; equals ``1 - tail_prob_up(ell, t_end)``.
    """
    if ell <= 0.0 or t_end <= 0.0:
        raise ValueError("need ell > 0 and t_end > 0")

    def integrand(u):
        r = u * u
        if r <= 0.0:
            return 0.0
        return 2.0 * u * passage_density_up(c, ell, r)

    return integrate_adaptive(integrand, 0.0, math.sqrt(t_end), spec)
