"""Mean-square stabilizability index and H2-optimal controller synthesis.

The plant-channel product ``HP`` is factored as ``N M^{-1}`` with ``M`` inner,
the Youla parameter ``Q`` sweeps all stabilizing controllers, and the optimal
``Q`` minimises ``||W T||_2^2``.  The minimum is the squared norm of the
anti-causal part ``Z2`` of ``W z^tau (M^{-1} - Mhat)``, where ``Mhat`` is the
first ``tau`` Markov parameters of ``M^{-1}``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .analysis import LoopModel, ms_stability
from .channel import ChannelSpec, frv
from .errors import (
    CancellationError,
    InfeasibleError,
    MarginalError,
    NotStabilizableError,
    ValidationError,
)
from .linalg_ss import (
    StateSpace,
    balanced_inner,
    h2_norm_sq,
    inverse_realization,
    ratfn_of_matrix,
    solve,
)
from .ratfun import (
    CANCEL_TOL,
    Poly,
    RatFn,
    RootSet,
    _exact_quotient,
    impulse_prefix,
    roots_in_z,
)

__all__ = [
    "CoprimePair",
    "StabilizabilityReport",
    "SynthesisResult",
    "coprime_factorize",
    "inner_truncation",
    "stabilizability_index",
    "stabilizability_report",
    "z2_coefficients",
    "corollary_dropout",
    "corollary_single_pole",
    "synthesize",
    "youla_controller",
    "perturbed_margin",
]

BEZOUT_TOL = 1e-8
INNER_TOL = 1e-9
SAMPLES = 64


def _circle(count: int = SAMPLES) -> np.ndarray:
    return np.exp(1j * (2 * np.pi * (np.arange(count) + 0.5) / count))


def _solve_full_pivot(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, float]:
    """Gaussian elimination with complete pivoting; returns (x, pivot ratio)."""
    A = np.array(A, dtype=complex)
    b = np.array(b, dtype=complex)
    n = A.shape[0]
    cols = np.arange(n)
    piv = []
    for k in range(n):
        sub = np.abs(A[k:, k:])
        i, j = np.unravel_index(int(np.argmax(sub)), sub.shape)
        i += k
        j += k
        A[[k, i]] = A[[i, k]]
        b[[k, i]] = b[[i, k]]
        A[:, [k, j]] = A[:, [j, k]]
        cols[[k, j]] = cols[[j, k]]
        piv.append(abs(A[k, k]))
        if A[k, k] == 0:
            raise np.linalg.LinAlgError("singular interpolation system")
        f = A[k + 1:, k] / A[k, k]
        A[k + 1:, k:] -= np.outer(f, A[k, k:])
        b[k + 1:] -= f * b[k]
    x = np.zeros(n, dtype=complex)
    for k in range(n - 1, -1, -1):
        x[k] = (b[k] - A[k, k + 1:] @ x[k + 1:]) / A[k, k]
    out = np.zeros(n, dtype=complex)
    out[cols] = x
    ratio = min(piv) / max(piv) if piv else 1.0
    return out, ratio


def _taylor(p: Poly, at: complex, order: int) -> np.ndarray:
    """Coefficients of ``p(at + t)`` in powers of ``t`` up to ``t^(order-1)``."""
    c = p.array.astype(complex)
    out = np.zeros(order, dtype=complex)
    for j in range(order):
        k = np.arange(j, len(c))
        if len(k):
            binom = np.array([math.comb(int(kk), j) for kk in k], dtype=float)
            out[j] = np.sum(c[j:] * binom * at ** (k - j))
    return out


def _series_div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros(len(a), dtype=complex)
    for k in range(len(a)):
        out[k] = (a[k] - np.dot(b[1:k + 1], out[k - 1::-1][:k])) / b[0]
    return out


# --------------------------------------------------------------------------
# coprime factorization


@dataclass(frozen=True, eq=False)
class CoprimePair:
    """``HP = N M^{-1}`` with ``M X + N Y = 1``.

    The polynomial pieces are kept so later stages can cancel common factors
    structurally: ``d_u = prod (1 - l w)``, ``e = prod (w - conj l)`` and
    ``d_s`` the stable part of the ``HP`` denominator (``w = z^{-1}``).
    """

    N: RatFn
    M: RatFn
    X: RatFn
    Y: RatFn
    unstable_poles: RootSet
    d_u: Poly
    d_s: Poly
    e: Poly
    q: Poly
    bezout_residual: float
    interpolation_pivot_ratio: float = 1.0

    @property
    def tau(self) -> int:
        return self.N.relative_degree


def _split_denominator(den: Poly) -> tuple[RootSet, Poly, Poly, Poly]:
    rs = roots_in_z(den)
    if "on" in rs.classification:
        raise MarginalError("HP has a pole on the unit circle")
    unstable = rs.select("outside")
    lam = unstable.expanded()
    d_u = Poly.from_roots(lam)
    # prod (w - conj l) is real because the poles are conjugate-closed
    e = Poly(np.real(_poly_from_w_roots([np.conj(l) for l in lam])))
    d0 = den.order
    base = Poly(den.coeffs[d0:])
    d_s = _exact_quotient(base, d_u) if lam else base
    return unstable, d_u, d_s, e


def _poly_from_w_roots(roots) -> np.ndarray:
    """Ascending coefficients of ``prod (w - r)``."""
    c = np.array([1.0 + 0j])
    for r in roots:
        c = np.convolve(c, [-complex(r), 1.0])
    return c


def coprime_factorize(HP: RatFn) -> CoprimePair:
    """Inner coprime factorization of a strictly proper ``HP``.

    ``Y`` is the polynomial in ``z^{-1}`` of degree ``n - 1`` (``n`` unstable
    poles with multiplicity) that interpolates ``1/N`` at every unstable pole,
    with derivative conditions for repeated poles; ``X`` follows by exact
    division.
    """
    if HP.is_zero():
        raise ValidationError("HP is identically zero")
    if HP.relative_degree < 1:
        raise ValidationError("HP must be strictly proper")
    unstable, d_u, d_s, e = _split_denominator(HP.den)
    nN = HP.num
    dN = d_s * e
    n = unstable.degree
    M = RatFn(d_u, e)
    N = RatFn(nN, dN)
    ratio = 1.0
    if n == 0:
        Y = Poly()
        q = dN
    else:
        rows, rhs = [], []
        for lam, mult in zip(unstable.roots, unstable.multiplicities):
            w0 = 1.0 / complex(lam)
            tn = _taylor(nN, w0, mult)
            if abs(tn[0]) <= CANCEL_TOL * max(1.0, float(np.abs(nN.array).max())):
                raise CancellationError(
                    f"plant-channel zero coincides with unstable pole {complex(lam):.6g}"
                )
            inv_n = _series_div(_taylor(dN, w0, mult), tn)
            for j in range(mult):
                k = np.arange(n)
                row = np.array(
                    [math.comb(int(kk), j) * w0 ** (kk - j) if kk >= j else 0.0 for kk in k],
                    dtype=complex,
                )
                rows.append(row)
                rhs.append(inv_n[j])
        try:
            y, ratio = _solve_full_pivot(np.array(rows), np.array(rhs))
        except np.linalg.LinAlgError as exc:
            raise InfeasibleError(f"interpolation system is singular: {exc}") from None
        if ratio < 1e-13:
            raise InfeasibleError(f"interpolation system is ill-conditioned (pivot ratio {ratio:.3g})")
        Y = Poly(y.real)
        q = _exact_quotient(dN - nN * Y, d_u)
    X = RatFn(q, d_s)
    Yf = RatFn(Y, [1.0])
    z = _circle()
    res = float(np.max(np.abs(M(z) * X(z) + N(z) * Yf(z) - 1.0)))
    if res > BEZOUT_TOL:
        raise ArithmeticError(f"Bezout residual {res:.3g} exceeds {BEZOUT_TOL:g}")
    inner = float(np.max(np.abs(np.abs(M(z)) - 1.0)))
    if inner > INNER_TOL:
        raise ArithmeticError(f"M is not inner (deviation {inner:.3g})")
    return CoprimePair(N, M, X, Yf, unstable, d_u, d_s, e, q, res, ratio)


def _chop(p: Poly, rel: float = 1e-12) -> Poly:
    """Drop trailing coefficients below ``rel`` of the largest (roots near ``z = 0``)."""
    c = list(p.coeffs)
    if not c:
        return p
    cut = rel * max(abs(x) for x in c)
    while len(c) > 1 and abs(c[-1]) <= cut:
        c.pop()
    return Poly(c)


def youla_controller(pair: CoprimePair, Q: RatFn) -> RatFn:
    """``K = -(Y + M Q) / (X - N Q)``."""
    num = pair.Y + pair.M * Q
    den = pair.X - pair.N * Q
    if den.is_zero():
        raise ZeroDivisionError("X - N Q is identically zero")
    K = -(num / den)
    if K.is_zero():
        return K
    return RatFn(_chop(K.num), _chop(K.den))


# --------------------------------------------------------------------------
# index


def inner_truncation(M_in: StateSpace, tau: int) -> Poly:
    """First ``tau`` Markov parameters of ``M_in^{-1}`` as a polynomial in ``z^{-1}``."""
    if tau < 1:
        raise ValidationError("tau must be at least 1")
    return Poly(inverse_realization(M_in).markov(tau))


def _check_poles(unstable_poles: RootSet) -> list[complex]:
    lam = unstable_poles.expanded()
    for l in lam:
        if abs(l) <= 1.0 + 1e-9:
            raise ValidationError(f"pole {l} is not strictly outside the unit circle")
    return lam


def _check_W(W: RatFn, lam: list[complex]) -> None:
    if W.is_zero():
        return
    if not W.is_proper():
        raise ValidationError("W must be proper")
    for p in W.den_roots_expanded():
        for l in lam:
            if abs(p - l) <= CANCEL_TOL * max(1.0, abs(l)):
                raise ValidationError(
                    f"W has a pole at the unstable plant pole {complex(l):.6g}"
                )


def stabilizability_index(unstable_poles: RootSet, W: RatFn, tau: int) -> float:
    """``|| W(A^{-1}) A^{-(tau-1)} C^T / D ||^2`` for the balanced inner ``(A, B, C, D)``."""
    if tau < 1:
        raise ValidationError("tau must be at least 1")
    lam = _check_poles(unstable_poles)
    if not lam or W.is_zero():
        return 0.0
    _check_W(W, lam)
    s = balanced_inner(unstable_poles)
    Ainv = solve(s.A, np.eye(s.n))
    x = np.linalg.matrix_power(Ainv, tau - 1) @ s.C.T / s.D
    x = ratfn_of_matrix(W, Ainv) @ x
    return float((x.T @ x).item())


def z2_coefficients(unstable_poles: RootSet, W: RatFn, tau: int, rel_tol: float = 1e-12,
                    max_terms: int = 100000) -> np.ndarray:
    """Coefficients ``z2(k), k >= 1`` of the anti-causal part, by direct summation.

    ``z2(k) = C W(A^{-T}) A^{-T(tau-1-k)} B / D^2``; for ``k >= tau`` the power
    is a nonnegative power of ``A^T`` so the tail decays geometrically.
    """
    lam = _check_poles(unstable_poles)
    if not lam or W.is_zero():
        return np.zeros(0)
    _check_W(W, lam)
    s = balanced_inner(unstable_poles)
    AinvT = solve(s.A, np.eye(s.n)).T
    left = (s.C @ ratfn_of_matrix(W, solve(s.A, np.eye(s.n))).T) / s.D**2
    out = []
    total = 0.0
    # start at power A^{-T(tau-2)} and walk down
    vec = np.linalg.matrix_power(AinvT, tau - 1) @ s.B if tau >= 1 else s.B
    for k in range(1, max_terms + 1):
        if tau - 1 - k >= 0:
            vec_k = np.linalg.matrix_power(AinvT, tau - 1 - k) @ s.B
        else:
            vec_k = np.linalg.matrix_power(s.A.T, k - tau + 1) @ s.B
        c = float((left @ vec_k).item())
        out.append(c)
        total += c * c
        if k > tau and c * c <= rel_tol * total:
            break
    return np.array(out)


# --------------------------------------------------------------------------
# corollaries


def corollary_dropout(p: float, unstable_poles: RootSet) -> dict:
    """Dropout-only channel with ``tau = 1``: stabilizable iff ``p < prod |l|^{-2}``."""
    if not 0.0 <= p < 1.0:
        raise ValidationError(f"dropout probability {p!r} outside [0, 1)")
    lam = _check_poles(unstable_poles)
    threshold = float(np.prod([abs(l) ** -2 for l in lam])) if lam else 1.0
    return {"stabilizable": p < threshold, "threshold": threshold}


def corollary_single_pole(lam: float, W: RatFn) -> dict:
    """One real unstable pole with ``tau = 1``: ``(l^2 - 1) W(l)^2 < 1``."""
    if abs(lam) <= 1.0:
        raise ValidationError(f"|lambda| = {abs(lam)} is not greater than 1")
    w = 0.0 if W.is_zero() else complex(W(lam)).real
    lhs = (lam * lam - 1.0) * w * w
    return {"stabilizable": lhs < 1.0, "lhs": float(lhs)}


@dataclass(frozen=True, eq=False)
class StabilizabilityReport:
    index: float
    stabilizable: bool
    unstable_poles: RootSet
    relative_degree_tau: int
    corollary_checks: dict = field(default_factory=dict)
    notes: tuple[str, ...] = ()


def _is_dropout(spec: ChannelSpec) -> bool:
    return len(spec.pmf) == 2 and spec.weights[1] == 0.0


def stabilizability_report(m: LoopModel) -> StabilizabilityReport:
    HP = m.HP
    tau = HP.relative_degree
    notes = []
    if tau != m.P.relative_degree:
        warnings.warn("mean channel has leading zero taps; relative degree taken from H P")
        notes.append("relative degree taken from H P (mean channel not biproper)")
    rs = roots_in_z(HP.den)
    if "on" in rs.classification:
        raise MarginalError("H P has a pole on the unit circle")
    unstable = rs.select("outside")
    W = m.stats.W
    idx = stabilizability_index(unstable, W, tau)
    checks: dict = {}
    lam = unstable.expanded()
    if any(abs(l.imag) > 0 for l in lam):
        notes.append("complex unstable poles: beyond the real-pole worked cases")
    if tau == 1:
        if _is_dropout(m.spec):
            checks["dropout"] = corollary_dropout(m.spec.pmf[1], unstable)
        if len(lam) == 1:
            checks["single_pole"] = corollary_single_pole(lam[0].real, W)
    return StabilizabilityReport(idx, idx < 1.0, unstable, tau, checks, tuple(notes))


# --------------------------------------------------------------------------
# synthesis


@dataclass(frozen=True, eq=False)
class SynthesisResult:
    Q_opt: RatFn
    K_opt: RatFn
    achieved_margin: float
    Z2_norm_sq: float
    index: float
    pair: CoprimePair
    Z1: RatFn
    Z2: RatFn
    Mhat: Poly
    tau: int


def _partial_fractions(num: Poly, a_den: Poly, b_den: Poly) -> tuple[Poly, Poly]:
    """``num / (a_den b_den) = A / a_den + B / b_den`` with ``deg B < deg b_den``."""
    n = b_den.degree
    p = max(num.degree, 0)
    m = max(p - n, a_den.degree - 1)
    size = m + 1 + n
    L = np.zeros((size, size))
    for j in range(m + 1):
        seg = b_den.array
        L[j:j + len(seg), j] = seg
    for j in range(n):
        seg = a_den.array
        L[j:j + len(seg), m + 1 + j] = seg
    rhs = np.zeros(size)
    rhs[: len(num.coeffs)] = num.array
    sol = solve(L, rhs)
    return Poly(sol[: m + 1]), Poly(sol[m + 1:])


def synthesize(m: LoopModel, check_index: Optional[float] = None) -> SynthesisResult:
    """H2-optimal Youla parameter and controller for the plant and channel in ``m``."""
    HP = m.HP
    tau = HP.relative_degree
    zeros = roots_in_z(HP.num) if HP.num.z_degree else RootSet()
    if any(c != "inside" for c in zeros.classification):
        raise ValidationError("plant and mean channel must be minimum phase for synthesis")
    W = m.stats.W
    if not W.is_zero():
        if any(c != "inside" for c in W.zeros().classification):
            raise MarginalError("spectral factor is not strictly minimum phase (W^{-1} unstable)")
    report = stabilizability_report(m)
    if not report.stabilizable:
        raise NotStabilizableError(
            f"not mean-square input-output stabilizable: index {report.index:.6g} >= 1"
        )
    pair = coprime_factorize(HP)
    n = pair.unstable_poles.degree
    if n:
        Minv = inverse_realization(balanced_inner(pair.unstable_poles))
        Mhat = Poly(Minv.markov(tau))
        series = impulse_prefix(RatFn(pair.e, pair.d_u), tau)
        if np.max(np.abs(np.array(series) - np.pad(Mhat.array, (0, tau - len(Mhat.coeffs))))) > 1e-8 * max(1.0, np.abs(series).max()):
            raise ArithmeticError("Markov parameters of M^{-1} disagree with long division")
        # z^tau (M^{-1} - Mhat) = g0n / d_u
        diff = (pair.e - Mhat * pair.d_u).array
        diff = np.pad(diff, (0, max(0, tau - len(diff))))
        head = np.abs(diff[:tau]).max()
        if head > 1e-8 * max(1.0, np.abs(pair.e.array).max()):
            raise ArithmeticError(f"truncated inverse does not match (residual {head:.3g})")
        g0n = Poly(diff[tau:])
    else:
        Mhat = Poly([1.0] + [0.0] * (tau - 1))
        g0n = Poly()
    if W.is_zero() or g0n.is_zero():
        Z1 = RatFn.const(0.0)
        Z2 = RatFn.const(0.0)
        A_poly = Poly()
        nW = Poly([1.0])
        z2 = 0.0
    else:
        nW, dW = W.num, W.den
        if dW.order != 0:
            raise ValidationError("W must have a nonzero leading denominator coefficient")
        A_poly, B_poly = _partial_fractions(nW * g0n, dW, pair.d_u)
        Z1 = RatFn(A_poly, dW)
        Z2 = RatFn(B_poly, pair.d_u)
        # Z2 has its poles outside; its norm equals that of Z2(1/z)
        rev_num = Poly([0.0] + list(np.pad(B_poly.array, (0, n - len(B_poly.coeffs)))[::-1]))
        rev_den = Poly(pair.d_u.array[::-1])
        z2 = h2_norm_sq(RatFn(rev_num, rev_den))
    # Q = (X - Mhat - z^{-tau} Z1 / W) / N = S e / (nW nHP)
    S = pair.q * nW - Mhat * pair.d_s * nW
    if not A_poly.is_zero():
        S = S - (A_poly * pair.d_s).shift(tau)
    s_arr = np.pad(S.array, (0, max(0, tau - len(S.coeffs))))
    lead = np.abs(s_arr[:tau]).max() if tau else 0.0
    if lead > 1e-7 * max(1.0, np.abs(s_arr).max()):
        raise ArithmeticError(f"Youla parameter is not causal (leading residual {lead:.3g})")
    S_red = Poly(s_arr[tau:])
    nHPs = Poly(HP.num.coeffs[tau:])
    Q = RatFn(S_red * pair.e, nW * nHPs).reduce()
    K = youla_controller(pair, Q)
    loop = m.with_controller(K)
    rep = ms_stability(loop)
    if not rep.internally_stable:
        raise ArithmeticError("synthesized controller does not stabilize the nominal loop")
    return SynthesisResult(Q, K, rep.ms_margin, z2, report.index, pair, Z1, Z2, Mhat, tau)


def perturbed_margin(result: SynthesisResult, m: LoopModel, Qtilde: RatFn, kappa: float) -> tuple[RatFn, float]:
    """Controller and margin for ``Q = Q_opt + kappa Qtilde``."""
    Q = result.Q_opt + Qtilde.scale(kappa) if kappa else result.Q_opt
    K = youla_controller(result.pair, Q)
    return K, ms_stability(m.with_controller(K)).ms_margin
