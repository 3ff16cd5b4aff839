"""Piecewise-constant drift/volatility models on the half-line.

A model is a finite list of breakpoints ``0 < t_1 < ... < t_m`` together with
``m + 1`` values for the drift and the volatility; value ``i`` applies on the
right-closed segment ``[t_i, t_{i+1})`` (with ``t_0 = 0`` and
``t_{m+1} = +inf``), so both coefficient paths are right-continuous with left
limits.
"""

from __future__ import annotations

import math
import re
from bisect import bisect_left, bisect_right
from dataclasses import dataclass


class ModelError(ValueError):
    """Raised for invalid model construction or serialization input."""


def _as_float_tuple(xs) -> tuple[float, ...]:
    return tuple(float(x) for x in xs)


@dataclass(frozen=True)
class CoefficientModel:
    """Deterministic piecewise-constant coefficients ``(v, sigma)``.

    Parameters
    ----------
    breakpoints:
        Strictly increasing, strictly positive, finite jump times.  A
        breakpoint at 0 is rejected: it would only relabel the first segment.
    v, sigma:
        Segment values; one more entry than ``breakpoints``.  ``sigma`` must
        be strictly positive.
    """

    breakpoints: tuple[float, ...]
    v: tuple[float, ...]
    sigma: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "breakpoints", _as_float_tuple(self.breakpoints))
        object.__setattr__(self, "v", _as_float_tuple(self.v))
        object.__setattr__(self, "sigma", _as_float_tuple(self.sigma))
        bp, v, sig = self.breakpoints, self.v, self.sigma
        if len(v) != len(bp) + 1 or len(sig) != len(bp) + 1:
            raise ModelError(
                f"need {len(bp) + 1} segment values for {len(bp)} breakpoints, "
                f"got v:{len(v)} sigma:{len(sig)}"
            )
        for t in bp:
            if not math.isfinite(t):
                raise ModelError("breakpoints must be finite")
            if t <= 0.0:
                raise ModelError("breakpoints must be strictly positive")
        if any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
            raise ModelError("breakpoints must be strictly increasing")
        if not all(math.isfinite(x) for x in v):
            raise ModelError("drift values must be finite")
        for s in sig:
            if not (math.isfinite(s) and s > 0.0):
                raise ModelError("sigma values must be finite and > 0")

    # ------------------------------------------------------------------
    # pointwise access

    @classmethod
    def constant(cls, v: float, sigma: float) -> "CoefficientModel":
        return cls((), (v,), (sigma,))

    @property
    def is_constant(self) -> bool:
        return not self.breakpoints

    @property
    def last_breakpoint(self) -> float:
        return self.breakpoints[-1] if self.breakpoints else 0.0

    def segment_index(self, t: float) -> int:
        """Index of the segment whose value applies at time ``t`` (cadlag)."""
        if t < 0.0:
            raise ModelError(f"time {t} < 0")
        return bisect_right(self.breakpoints, t)

    def drift_at(self, t: float) -> float:
        return self.v[self.segment_index(t)]

    def sigma_at(self, t: float) -> float:
        return self.sigma[self.segment_index(t)]

    def drift_before(self, t: float) -> float:
        """Left limit ``v(t-)``; at ``t = 0`` this is just ``v(0)``."""
        if t <= 0.0:
            return self.drift_at(0.0)
        return self.v[bisect_left(self.breakpoints, t)]

    def sigma_before(self, t: float) -> float:
        if t <= 0.0:
            return self.sigma_at(0.0)
        return self.sigma[bisect_left(self.breakpoints, t)]

    # ------------------------------------------------------------------
    # segment iteration and integrals

    def breakpoints_between(self, s: float, t: float) -> tuple[float, ...]:
        """Breakpoints strictly inside the open interval ``(s, t)``."""
        return tuple(b for b in self.breakpoints if s < b < t)

    def segments_between(self, s: float, t: float) -> list[tuple[float, float, float]]:
        """Ordered ``(v_i, sigma_i, duration_i)`` triples covering ``[s, t)``."""
        if t < s:
            raise ModelError(f"need s <= t, got s={s} t={t}")
        if t == s:
            return []
        cuts = [s, *self.breakpoints_between(s, t), t]
        return [
            (self.v[self.segment_index(lo)], self.sigma[self.segment_index(lo)], hi - lo)
            for lo, hi in zip(cuts, cuts[1:])
        ]

    def integrated_drift(self, s: float, t: float) -> float:
        return math.fsum(v * d for v, _, d in self.segments_between(s, t))

    def integrated_variance(self, s: float, t: float) -> float:
        return math.fsum(sig * sig * d for _, sig, d in self.segments_between(s, t))

    def envelope(self) -> tuple[float, float, float]:
        """Global bounds ``(sup |v|, inf sigma, sup sigma)`` over all segments."""
        return (max(abs(x) for x in self.v), min(self.sigma), max(self.sigma))

    def negated(self) -> "CoefficientModel":
        """Model with every drift flipped; used for down-passage mirroring."""
        return CoefficientModel(self.breakpoints, tuple(-x for x in self.v), self.sigma)

    # ------------------------------------------------------------------
    # serialization: ``breakpoints=[...], v=[...], sigma=[...]``

    def to_config(self) -> str:
        def fmt(xs):
            return "[" + ", ".join(repr(x) for x in xs) + "]"

        return (
            f"breakpoints={fmt(self.breakpoints)}, "
            f"v={fmt(self.v)}, sigma={fmt(self.sigma)}"
        )

    @classmethod
    def from_config(cls, text: str) -> "CoefficientModel":
        fields = {}
        for key in ("breakpoints", "v", "sigma"):
            m = re.search(rf"\b{key}\s*=\s*\[([^\]]*)\]", text)
            if m is None:
                raise ModelError(f"missing '{key}=[...]' in model block: {text!r}")
            body = m.group(1).strip()
            try:
                fields[key] = tuple(float(x) for x in body.split(",")) if body else ()
            except ValueError as exc:
                raise ModelError(f"bad number in '{key}': {body!r}") from exc
        return cls(fields["breakpoints"], fields["v"], fields["sigma"])
