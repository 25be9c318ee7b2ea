"""Closed-loop construction and the mean-square input-output stability test.

Sign convention: the plant input is ``v + u_d`` and ``u = K y``, so the
nominal loop gain is ``H K P`` with positive feedback, ``G = KP/(1 - HKP)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .channel import ChannelSpec, ChannelStats, channel_stats, mean_channel
from .errors import CancellationError, ValidationError
from .linalg_ss import h2_norm_sq
from .ratfun import CANCEL_TOL, Poly, RatFn, roots_in_z

__all__ = [
    "LoopModel",
    "StabilityReport",
    "check_cancellation",
    "shared_unstable_roots",
    "characteristic_poly",
    "nominal_G",
    "comp_sensitivity_T",
    "internal_stability",
    "ms_stability",
]

MS_STABLE = "mean-square stable"
MS_UNSTABLE = "not mean-square stable"
NOMINALLY_UNSTABLE = "nominally unstable"


def _outside(p: Poly) -> list[complex]:
    if p.is_zero():
        return []
    rs = roots_in_z(p)
    return [r for r, c in zip(rs.roots, rs.classification) if c == "outside"]


def shared_unstable_roots(a: Poly, b: Poly, tol: float = CANCEL_TOL) -> list[complex]:
    """Roots outside the unit circle common to ``a`` and ``b``."""
    ra, rb = _outside(a), _outside(b)
    return [r for r in ra if any(abs(r - s) <= tol * max(1.0, abs(r)) for s in rb)]


def check_cancellation(H: RatFn, P: RatFn) -> None:
    """Raise if the mean channel and the plant share an unstable pole/zero."""
    bad = shared_unstable_roots(H.num, P.den) + shared_unstable_roots(H.den, P.num)
    if bad:
        where = ", ".join(f"{complex(r):.6g}" for r in bad)
        raise CancellationError(
            f"unstable pole-zero cancellation between mean channel and plant at z = {where}"
        )


@dataclass(frozen=True, eq=False)
class LoopModel:
    """Plant, optional controller and channel of the networked loop."""

    P: RatFn
    spec: ChannelSpec
    K: Optional[RatFn] = None
    check: bool = True
    stats: ChannelStats = field(init=False)

    def __post_init__(self):
        if self.P.is_zero():
            raise ValidationError("plant is identically zero")
        if self.P.relative_degree < 1:
            raise ValidationError(
                f"plant must be strictly proper (relative degree {self.P.relative_degree})"
            )
        if self.K is not None and not self.K.is_proper():
            raise ValidationError("controller must be proper")
        if self.check:
            check_cancellation(mean_channel(self.spec), self.P)
        # a unit-circle zero of Phi is harmless for the margin, only W^{-1} needs it inside
        object.__setattr__(self, "stats", channel_stats(self.spec, allow_marginal=True))

    @property
    def H(self) -> RatFn:
        return self.stats.H

    @property
    def HP(self) -> RatFn:
        """``H P`` without root-level reduction."""
        return self.H.mul(self.P, reduce=False)

    def with_controller(self, K: RatFn) -> "LoopModel":
        return LoopModel(self.P, self.spec, K, self.check)

    def _K(self) -> RatFn:
        if self.K is None:
            raise ValidationError("loop model has no controller")
        return self.K


def characteristic_poly(m: LoopModel) -> Poly:
    """``d_HP d_K - n_HP n_K``, formed before any cancellation."""
    K = m._K()
    HP = m.HP
    return HP.den * K.den - HP.num * K.num


def nominal_G(m: LoopModel, reduce: bool = True) -> RatFn:
    K = m._K()
    if K.is_zero():
        return RatFn.const(0.0)
    char = characteristic_poly(m)
    if char.is_zero():
        raise ZeroDivisionError("1 - HKP is identically zero")
    G = RatFn(m.H.den * K.num * m.P.num, char)
    return G.reduce() if reduce else G


def comp_sensitivity_T(m: LoopModel, reduce: bool = True) -> RatFn:
    K = m._K()
    if K.is_zero():
        return RatFn.const(0.0)
    char = characteristic_poly(m)
    if char.is_zero():
        raise ZeroDivisionError("1 - HKP is identically zero")
    T = RatFn(m.H.num * K.num * m.P.num, char)
    return T.reduce() if reduce else T


def internal_stability(m: LoopModel) -> bool:
    K = m._K()
    char = characteristic_poly(m)
    if char.is_zero():
        return False
    if any(c != "inside" for c in roots_in_z(char).classification):
        return False
    HP = m.HP
    if shared_unstable_roots(K.den, HP.num) or shared_unstable_roots(K.num, HP.den):
        return False
    return True


@dataclass(frozen=True)
class StabilityReport:
    internally_stable: bool
    ms_margin: float
    verdict: str
    predicted_power_gain: float
    g_norm_sq: float

    @property
    def stable(self) -> bool:
        return self.verdict == MS_STABLE


def ms_stability(m: LoopModel) -> StabilityReport:
    """Mean-square verdict: nominal internal stability and ``||W T||_2^2 < 1``.

    ``predicted_power_gain`` is ``||G||^2 / (1 - margin)``, the control power per
    unit-variance white external input; ``inf`` when unbounded.
    """
    if not internal_stability(m):
        return StabilityReport(False, math.inf, NOMINALLY_UNSTABLE, math.inf, math.inf)
    G = nominal_G(m, reduce=False)
    g2 = h2_norm_sq(G)
    # W T = Phi G exactly (H cancels), so no division by H is needed
    margin = h2_norm_sq(RatFn(m.stats.phi * G.num, G.den)) if not m.stats.phi.is_zero() else 0.0
    if margin < 1.0:
        return StabilityReport(True, margin, MS_STABLE, g2 / (1.0 - margin), g2)
    return StabilityReport(True, margin, MS_UNSTABLE, math.inf, g2)
