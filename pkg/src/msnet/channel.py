"""First- and second-order statistics of the random-delay channel.

The transmission block (random delays plus weighted receiver) splits into a
deterministic FIR mean channel ``H`` and a zero-mean uncertainty whose impulse
response autocorrelation ``r(l)`` depends only on the delay PMF and the
receiver weights.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import MarginalError, ValidationError
from .ratfun import Poly, RatFn, roots_in_z

__all__ = [
    "ChannelSpec",
    "ChannelStats",
    "ChannelConventionWarning",
    "mean_channel",
    "autocorrelation",
    "spectral_density",
    "spectral_density_double_sum",
    "spectral_factorize",
    "frv",
    "snr_profile",
    "channel_stats",
]

PMF_TOL = 1e-12
MARGINAL_TOL = 1e-6


class ChannelConventionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ChannelSpec:
    """Delay PMF ``p_0..p_T`` and receiver weights ``a_0..a_T``."""

    pmf: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        pmf = tuple(float(p) for p in self.pmf)
        weights = tuple(float(a) for a in self.weights)
        if not pmf:
            raise ValidationError("pmf must have at least one entry")
        if len(pmf) != len(weights):
            raise ValidationError(
                f"pmf has {len(pmf)} entries but weights has {len(weights)}"
            )
        for i, p in enumerate(pmf):
            if not (0.0 <= p <= 1.0) or not math.isfinite(p):
                raise ValidationError(f"pmf[{i}] = {p!r} is not a probability")
        for i, a in enumerate(weights):
            if not math.isfinite(a):
                raise ValidationError(f"weights[{i}] = {a!r} is not finite")
        total = math.fsum(pmf)
        if abs(total - 1.0) > PMF_TOL:
            raise ValidationError(f"pmf sums to {total!r}, not 1")
        pmf = tuple(p / total for p in pmf)
        if len(weights) > 1 and weights[-1] != 0.0:
            warnings.warn(
                "last receiver weight is nonzero: packets at the delay bound are "
                "used instead of being treated as dropped",
                ChannelConventionWarning,
                stacklevel=3,
            )
        object.__setattr__(self, "pmf", pmf)
        object.__setattr__(self, "weights", weights)

    @property
    def delay_bound(self) -> int:
        return len(self.pmf) - 1

    @classmethod
    def dropout(cls, p: float, weight: float = 1.0) -> "ChannelSpec":
        """Packet-dropout channel: delivered instantly with prob ``1 - p``."""
        return cls((1.0 - p, p), (weight, 0.0))

    @classmethod
    def perfect(cls) -> "ChannelSpec":
        return cls((1.0,), (1.0,))


@dataclass(frozen=True, eq=False)
class ChannelStats:
    H: RatFn
    r: np.ndarray
    S: np.ndarray
    phi: Poly
    W: RatFn


def mean_channel(spec: ChannelSpec) -> RatFn:
    taps = [a * p for a, p in zip(spec.weights, spec.pmf)]
    if not any(taps):
        raise ValidationError("zero mean channel: every weighted delay probability is 0")
    return RatFn(taps, [1.0])


def autocorrelation(spec: ChannelSpec) -> np.ndarray:
    """``r(0..T)`` of the uncertainty impulse response."""
    a = np.asarray(spec.weights)
    p = np.asarray(spec.pmf)
    T = spec.delay_bound
    r = np.zeros(T + 1)
    r[0] = np.sum(a * a * p * (1.0 - p))
    for l in range(1, T + 1):
        r[l] = -np.sum(a[: T + 1 - l] * a[l:] * p[: T + 1 - l] * p[l:])
    return r


def spectral_density(spec: ChannelSpec) -> np.ndarray:
    """Laurent coefficients of the energy spectral density.

    Entry ``T + l`` holds the coefficient of ``z^{-l}`` for ``l = -T..T``.
    """
    r = autocorrelation(spec)
    return np.concatenate([r[:0:-1], r])


def spectral_density_double_sum(spec: ChannelSpec) -> np.ndarray:
    """Same coefficients via the pairwise-difference double sum.

    Each pair contributes ``(a1 z^i1 - a2 z^i2)(a1 z^-i1 - a2 z^-i2) p1 p2 / 2``.
    """
    T = spec.delay_bound
    S = np.zeros(2 * T + 1)
    for i1, (a1, p1) in enumerate(zip(spec.weights, spec.pmf)):
        for i2, (a2, p2) in enumerate(zip(spec.weights, spec.pmf)):
            w = 0.5 * p1 * p2
            S[T] += w * (a1 * a1 + a2 * a2)
            # z^{i1-i2} is z^{-l} with l = i2 - i1, and symmetrically
            S[T + i2 - i1] -= w * a1 * a2
            S[T + i1 - i2] -= w * a1 * a2
    return S


def spectral_factorize(S: np.ndarray, marginal_tol: float = MARGINAL_TOL,
                       allow_marginal: bool = False) -> Poly:
    """Minimum-phase ``Phi`` with ``Phi(z^{-1}) Phi(z) = S(z)``.

    Roots of ``z^L S(z)`` come in reciprocal pairs; the inside member of each
    pair goes to ``Phi`` and the gain is fixed by the zero-lag coefficient.
    Unit-circle pairs raise unless ``allow_marginal`` is set, in which case one
    member of each pair is kept.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 1 or len(S) % 2 != 1:
        raise ValidationError("spectral density must have an odd number of coefficients")
    T = len(S) // 2
    if not np.allclose(S, S[::-1], rtol=0, atol=1e-14 * (1 + np.abs(S).max())):
        raise ValidationError("spectral density coefficients are not symmetric")
    theta = np.linspace(0.0, np.pi, 1024)
    l = np.arange(1, T + 1)
    samples = S[T] + 2.0 * np.cos(np.outer(theta, l)) @ S[T + 1:]
    if samples.min() < -1e-10:
        raise ValidationError(f"spectral density is negative ({samples.min():.3g}) on the unit circle")
    scale = np.abs(S).max()
    if scale == 0.0:
        return Poly()
    L = T
    while L > 0 and abs(S[T + L]) <= 1e-14 * scale:
        L -= 1
    if L == 0:
        return Poly([math.sqrt(S[T])])
    rs = roots_in_z(Poly(S[T - L: T + L + 1]), cluster_tol=0.0)
    roots = sorted(rs.expanded(), key=abs)
    inside = roots[:L]
    worst = max(abs(r) for r in inside)
    if worst >= 1.0 - marginal_tol and not allow_marginal:
        raise MarginalError(
            f"marginal spectral factor: root of modulus {worst:.12g} on the unit circle"
        )
    g = Poly.from_roots(inside).array
    c = math.sqrt(S[T] / float(g @ g))
    phi = Poly(c * g)
    rebuilt = np.correlate(phi.array, phi.array, mode="full")
    rebuilt = np.pad(rebuilt, (T - L, T - L))
    err = np.abs(rebuilt - S).max()
    if err > 1e-9 * (1.0 + scale):
        raise ArithmeticError(f"spectral factor reconstruction error {err:.3g}")
    return phi


def frv(spec: ChannelSpec, allow_marginal: bool = False) -> RatFn:
    """Frequency response of variation ``W = Phi / H``."""
    H = mean_channel(spec)
    zeros = H.zeros()
    if "on" in zeros.classification:
        raise MarginalError("marginal mean channel: H has a zero on the unit circle")
    phi = spectral_factorize(spectral_density(spec), allow_marginal=allow_marginal)
    if phi.is_zero():
        return RatFn.const(0.0)
    return RatFn(phi, H.num).reduce()


def snr_profile(spec: ChannelSpec, angles: int = 64) -> list[tuple[float, float]]:
    """Samples ``(theta, 1/|W(e^{j theta})|^2)`` on ``[0, pi]``; ``inf`` where ``W`` vanishes."""
    W = frv(spec)
    theta = np.linspace(0.0, np.pi, angles)
    mag2 = np.abs(W(np.exp(1j * theta))) ** 2
    out = []
    for t, m in zip(theta, mag2):
        out.append((float(t), math.inf if m == 0.0 else float(1.0 / m)))
    return out


def channel_stats(spec: ChannelSpec, allow_marginal: bool = False) -> ChannelStats:
    """All channel statistics; ``allow_marginal`` admits a unit-circle zero in ``Phi``."""
    S = spectral_density(spec)
    return ChannelStats(
        H=mean_channel(spec),
        r=autocorrelation(spec),
        S=S,
        phi=spectral_factorize(S, allow_marginal=allow_marginal),
        W=frv(spec, allow_marginal=allow_marginal),
    )
