"""Real polynomials and rational functions in the backward-shift variable.

Everything here is stored in powers of ``w = z^{-1}``: ``coeffs[k]`` multiplies
``z^{-k}``.  Pure delays therefore live in leading zero coefficients and never
produce roots at ``z = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Poly",
    "RatFn",
    "RootSet",
    "Classification",
    "RootFindingError",
    "roots_in_z",
    "ratfn_arith",
    "relative_degree",
    "classify",
    "impulse_prefix",
    "CANCEL_TOL",
    "CIRCLE_TOL",
]

CIRCLE_TOL = 1e-9
CANCEL_TOL = 1e-8
CLUSTER_TOL = 1e-5
MAX_ITER = 200
STEP_TOL = 1e-13
BACKWARD_FACTOR = 1e3


class RootFindingError(ArithmeticError):
    pass


def _as_float_tuple(values: Iterable[float]) -> tuple[float, ...]:
    out = tuple(float(v) for v in values)
    for v in out:
        if not math.isfinite(v):
            raise ValueError(f"non-finite coefficient in {out!r}")
    return out


@dataclass(frozen=True)
class Poly:
    """Polynomial ``sum_k coeffs[k] z^{-k}`` with trailing zeros trimmed."""

    coeffs: tuple[float, ...]

    def __init__(self, coeffs: Iterable[float] = ()):
        c = list(_as_float_tuple(coeffs))
        while c and c[-1] == 0.0:
            c.pop()
        object.__setattr__(self, "coeffs", tuple(c))

    @classmethod
    def from_roots(cls, roots: Sequence[complex], gain: float = 1.0) -> "Poly":
        """``gain * prod (1 - r z^{-1})``; ``roots`` must be conjugate-closed."""
        c = np.array([1.0 + 0j])
        for r in roots:
            c = np.convolve(c, [1.0, -complex(r)])
        return cls(gain * c.real)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.coeffs, dtype=float)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return not self.coeffs

    @property
    def order(self) -> int:
        """Index of the first nonzero coefficient (number of pure delays)."""
        for k, c in enumerate(self.coeffs):
            if c != 0.0:
                return k
        return 0

    @property
    def z_degree(self) -> int:
        if self.is_zero():
            return 0
        return self.degree - self.order

    def z_coeffs(self) -> np.ndarray:
        """Coefficients of the z-polynomial ``z^degree p``, highest power first."""
        return self.array[self.order:]

    def shift(self, k: int) -> "Poly":
        """Multiply by ``z^{-k}`` (``k >= 0``)."""
        if k < 0:
            raise ValueError("negative shift would make a Laurent polynomial")
        if self.is_zero():
            return self
        return Poly((0.0,) * k + self.coeffs)

    def __call__(self, z):
        w = 1.0 / np.asarray(z, dtype=complex)
        return np.polynomial.polynomial.polyval(w, self.array) if self.coeffs else 0 * w

    def __add__(self, other: "Poly") -> "Poly":
        a, b = self.array, other.array
        n = max(len(a), len(b))
        return Poly(np.pad(a, (0, n - len(a))) + np.pad(b, (0, n - len(b))))

    def __neg__(self) -> "Poly":
        return Poly(-self.array)

    def __sub__(self, other: "Poly") -> "Poly":
        return self + (-other)

    def __mul__(self, other) -> "Poly":
        if isinstance(other, Poly):
            if self.is_zero() or other.is_zero():
                return Poly()
            return Poly(np.convolve(self.array, other.array))
        return Poly(self.array * float(other))

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"Poly({list(self.coeffs)!r})"


def _exact_quotient(p: Poly, f: Poly) -> Poly:
    """Least-squares solution of ``p = f * q``; used when ``f`` divides ``p``."""
    if f.is_zero():
        raise ZeroDivisionError("division by the zero polynomial")
    if p.is_zero():
        return Poly()
    nq = len(p.coeffs) - len(f.coeffs) + 1
    if nq <= 0:
        raise ValueError("divisor degree exceeds dividend degree")
    T = np.zeros((len(p.coeffs), nq))
    for j in range(nq):
        T[j:j + len(f.coeffs), j] = f.array
    q, *_ = np.linalg.lstsq(T, p.array, rcond=None)
    return Poly(q)


# --------------------------------------------------------------------------
# roots


@dataclass(frozen=True)
class RootSet:
    roots: tuple[complex, ...] = ()
    multiplicities: tuple[int, ...] = ()
    tol: float = CIRCLE_TOL

    @property
    def classification(self) -> tuple[str, ...]:
        out = []
        for r in self.roots:
            m = abs(r)
            out.append("outside" if m > 1 + self.tol else "inside" if m < 1 - self.tol else "on")
        return tuple(out)

    @property
    def degree(self) -> int:
        return sum(self.multiplicities)

    def expanded(self) -> list[complex]:
        out: list[complex] = []
        for r, m in zip(self.roots, self.multiplicities):
            out.extend([r] * m)
        return out

    def select(self, kind: str) -> "RootSet":
        keep = [i for i, c in enumerate(self.classification) if c == kind]
        return RootSet(
            tuple(self.roots[i] for i in keep),
            tuple(self.multiplicities[i] for i in keep),
            self.tol,
        )

    def __len__(self) -> int:
        return len(self.roots)


def _cauchy_radius(a: np.ndarray) -> float:
    """Unique positive root of ``x^n - sum |a_k| x^{n-k}`` for monic ``a``."""
    b = np.abs(a[1:])
    n = len(b)
    if not b.any():
        return 1.0
    x = 1.0 + b.max()
    for _ in range(100):
        powers = x ** np.arange(n - 1, -1, -1)
        f = x**n - b @ powers
        df = n * x ** (n - 1) - b[:-1] @ (np.arange(n - 1, 0, -1) * x ** np.arange(n - 2, -1, -1)) if n > 1 else 1.0
        step = f / df
        x -= step
        if abs(step) <= 1e-12 * x:
            break
    return x


def _aberth(a: np.ndarray, label: str) -> np.ndarray:
    """Aberth-Ehrlich iteration on the monic z-polynomial ``a`` (descending)."""
    n = len(a) - 1
    R = _cauchy_radius(a)
    # scale z = R y so every root sits in the closed unit disc
    b = a / R ** np.arange(n + 1)
    babs = np.abs(b)
    db = b[:-1] * np.arange(n, 0, -1)
    y = np.exp(1j * (2 * np.pi * np.arange(n) / n + 0.4))
    active = np.ones(n, dtype=bool)
    last = np.full(n, np.inf)
    eps = np.finfo(float).eps
    for _ in range(MAX_ITER):
        # Gauss-Seidel sweep: each correction sees the already-updated roots
        for i in np.flatnonzero(active):
            yi = y[i]
            p = np.polyval(b, yi)
            if p == 0:
                active[i] = False
                continue
            ratio = p / np.polyval(db, yi)
            d = yi - np.delete(y, i)
            s = np.sum(1.0 / d) if d.all() else np.inf
            step = ratio / (1.0 - ratio * s)
            if not np.isfinite(step):
                continue
            y[i] = yi - step
            scale = max(1.0, abs(y[i]))
            # small steps that stop shrinking sit on the rounding floor
            if abs(step) <= STEP_TOL * scale or (abs(step) <= 1e-9 * scale and abs(step) >= last[i]):
                active[i] = False
            last[i] = abs(step)
        if not active.any():
            break
    else:
        p = np.polyval(b, y)
        bound = 4 * n * eps * np.polyval(babs, np.abs(y))
        if np.any(np.abs(p) > BACKWARD_FACTOR * bound):
            raise RootFindingError(f"root iteration did not converge for polynomial {label}")
    return R * y


def _symmetrize(z: np.ndarray) -> np.ndarray:
    z = z.astype(complex).copy()
    small = np.abs(z.imag) <= 1e-12 * np.maximum(1.0, np.abs(z))
    z[small] = z[small].real
    pos = [i for i in range(len(z)) if z[i].imag > 0]
    neg = [i for i in range(len(z)) if z[i].imag < 0]
    if len(pos) != len(neg):
        return z
    for i in pos:
        j = min(neg, key=lambda k: abs(z[k] - np.conj(z[i])))
        neg.remove(j)
        m = 0.5 * (z[i] + np.conj(z[j]))
        z[i], z[j] = m, np.conj(m)
    return z


def _cluster(z: np.ndarray, tol: float) -> tuple[tuple[complex, ...], tuple[int, ...]]:
    order = np.lexsort((z.imag, z.real))
    z = z[order]
    groups: list[list[complex]] = []
    for r in z:
        for g in groups:
            c = np.mean(g)
            if abs(r - c) <= tol * max(1.0, abs(c)):
                g.append(r)
                break
        else:
            groups.append([r])
    roots = []
    for g in groups:
        c = complex(np.mean(g))
        # a conjugate pair closer than tol would already share this cluster
        if abs(c.imag) <= max(tol, 1e-12) * max(1.0, abs(c)):
            c = complex(c.real, 0.0)
        roots.append(c)
    return tuple(roots), tuple(len(g) for g in groups)


def roots_in_z(p: Poly, tol: float = CIRCLE_TOL, cluster_tol: float = CLUSTER_TOL) -> RootSet:
    """Nonzero z-roots of ``p`` with multiplicities and unit-circle classification.

    Raises
    ------
    ValueError
        For the zero polynomial.
    RootFindingError
        If the iteration does not converge within the iteration cap.
    """
    if p.is_zero():
        raise ValueError("roots of the zero polynomial are undefined")
    c = p.z_coeffs()
    n = len(c) - 1
    if n == 0:
        return RootSet(tol=tol)
    a = c / c[0]
    if n == 1:
        z = np.array([-a[1] + 0j])
    else:
        z = _aberth(a, repr(p))
    z = _symmetrize(z)
    roots, mult = _cluster(z, cluster_tol)
    return RootSet(roots, mult, tol)


def root_residual(p: Poly, rho: complex) -> float:
    """``|p|`` at ``rho`` in whichever of z / z^{-1} scaling keeps powers bounded."""
    c = p.z_coeffs()
    n = len(c) - 1
    if abs(rho) <= 1:
        return float(abs(np.polyval(c, rho)))
    return float(abs(np.polyval(c[::-1], 1.0 / rho)))


# --------------------------------------------------------------------------
# rational functions


@dataclass(frozen=True)
class RatFn:
    """``num(z^{-1}) / den(z^{-1})``.

    Normalized so that common pure delays are stripped and the first nonzero
    denominator coefficient is 1 (for proper functions that is ``den[0]``).
    Root-level cancellation only happens in :meth:`reduce`.
    """

    num: Poly
    den: Poly

    def __init__(self, num=(1.0,), den=(1.0,)):
        n = num if isinstance(num, Poly) else Poly(num)
        d = den if isinstance(den, Poly) else Poly(den)
        if d.is_zero():
            raise ZeroDivisionError("rational function with zero denominator")
        if n.is_zero():
            n, d = Poly(), Poly([1.0])
        else:
            k = min(n.order, d.order)
            if k:
                n, d = Poly(n.coeffs[k:]), Poly(d.coeffs[k:])
            lead = d.coeffs[d.order]
            n, d = n * (1.0 / lead), d * (1.0 / lead)
        object.__setattr__(self, "num", n)
        object.__setattr__(self, "den", d)

    # constructors -----------------------------------------------------------
    @classmethod
    def const(cls, c: float) -> "RatFn":
        return cls([c], [1.0])

    @classmethod
    def delay(cls, k: int, gain: float = 1.0) -> "RatFn":
        """``gain * z^{-k}``; negative ``k`` gives a pure advance."""
        if k >= 0:
            return cls([0.0] * k + [gain], [1.0])
        return cls([gain], [0.0] * (-k) + [1.0])

    @classmethod
    def from_z(cls, num_desc: Sequence[float], den_desc: Sequence[float]) -> "RatFn":
        """Build from coefficient lists in descending powers of ``z``."""
        num_desc = list(num_desc)
        den_desc = list(den_desc)
        while num_desc and num_desc[0] == 0:
            num_desc.pop(0)
        while den_desc and den_desc[0] == 0:
            den_desc.pop(0)
        if not den_desc:
            raise ZeroDivisionError("zero denominator")
        if not num_desc:
            return cls([0.0], [1.0])
        L = max(len(num_desc), len(den_desc))
        n = [0.0] * (L - len(num_desc)) + num_desc
        d = [0.0] * (L - len(den_desc)) + den_desc
        return cls(n, d)

    def to_z(self) -> tuple[list[float], list[float]]:
        """Inverse of :meth:`from_z`: descending-z coefficient lists."""
        if self.is_zero():
            return [0.0], [1.0]
        L = max(len(self.num.coeffs), len(self.den.coeffs))
        n = list(self.num.coeffs) + [0.0] * (L - len(self.num.coeffs))
        d = list(self.den.coeffs) + [0.0] * (L - len(self.den.coeffs))
        while n and n[0] == 0.0:
            n.pop(0)
        while d and d[0] == 0.0:
            d.pop(0)
        return n, d

    def z_polys(self) -> tuple[np.ndarray, np.ndarray]:
        """Numerator and denominator as z-polynomials over a common power."""
        L = max(len(self.num.coeffs), len(self.den.coeffs))
        n = np.pad(self.num.array, (0, L - len(self.num.coeffs)))
        d = np.pad(self.den.array, (0, L - len(self.den.coeffs)))
        return n, d

    # queries --------------------------------------------------------------
    def is_zero(self) -> bool:
        return self.num.is_zero()

    @property
    def relative_degree(self) -> int:
        return relative_degree(self)

    def is_proper(self) -> bool:
        return self.is_zero() or self.relative_degree >= 0

    def poles(self) -> RootSet:
        return roots_in_z(self.den)

    def zeros(self) -> RootSet:
        if self.is_zero():
            return RootSet()
        return roots_in_z(self.num)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return self.num(z) / self.den(z)

    def at_infinity(self) -> float:
        if self.is_zero() or self.relative_degree > 0:
            return 0.0
        if self.relative_degree < 0:
            return math.inf
        return self.num.coeffs[self.num.order] / self.den.coeffs[self.den.order]

    # arithmetic without reduction -----------------------------------------
    def add(self, other: "RatFn", reduce: bool = True) -> "RatFn":
        if self.den == other.den:
            r = RatFn(self.num + other.num, self.den)
        else:
            r = RatFn(self.num * other.den + other.num * self.den, self.den * other.den)
        return r.reduce() if reduce else r

    def mul(self, other: "RatFn", reduce: bool = True) -> "RatFn":
        r = RatFn(self.num * other.num, self.den * other.den)
        return r.reduce() if reduce else r

    def inv(self) -> "RatFn":
        if self.is_zero():
            raise ZeroDivisionError("inverse of the zero rational function")
        return RatFn(self.den, self.num)

    def shift(self, k: int) -> "RatFn":
        """Multiply by ``z^{-k}``; negative ``k`` multiplies by ``z^{|k|}``."""
        if self.is_zero():
            return self
        if k >= 0:
            return RatFn(self.num.shift(k), self.den)
        return RatFn(self.num, self.den.shift(-k))

    def scale(self, c: float) -> "RatFn":
        return RatFn(self.num * c, self.den)

    # operators (reduce) ---------------------------------------------------
    @staticmethod
    def _coerce(x) -> "RatFn":
        return x if isinstance(x, RatFn) else RatFn.const(float(x))

    def __add__(self, other):
        return ratfn_arith(self, self._coerce(other), "add")

    __radd__ = __add__

    def __sub__(self, other):
        return ratfn_arith(self, self._coerce(other), "sub")

    def __rsub__(self, other):
        return ratfn_arith(self._coerce(other), self, "sub")

    def __mul__(self, other):
        if not isinstance(other, RatFn):
            return self.scale(float(other))
        return ratfn_arith(self, other, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, RatFn):
            return self.scale(1.0 / float(other))
        return ratfn_arith(self, other, "div")

    def __rtruediv__(self, other):
        return ratfn_arith(self._coerce(other), self, "div")

    def __neg__(self):
        return self.scale(-1.0)

    # reduction ------------------------------------------------------------
    def reduce(self, tol: float = CANCEL_TOL) -> "RatFn":
        """Cancel common roots of numerator and denominator.

        Two roots cancel when their distance is at most ``tol * max(1, |r|)``.
        Roots on the unit circle are never cancelled.
        """
        if self.is_zero() or self.num.z_degree == 0 or self.den.z_degree == 0:
            return self
        # clustered roots: a multiple root is located far better by its cluster
        # mean than by any single member
        zn = roots_in_z(self.num)
        zd = roots_in_z(self.den)
        avail = list(zn.multiplicities)
        common: list[complex] = []

        def nearest(target: complex) -> int:
            d = [abs(target - s) if avail[i] else np.inf for i, s in enumerate(zn.roots)]
            return int(np.argmin(d)) if d else -1

        for r, md in zip(zd.roots, zd.multiplicities):
            if r.imag < 0 or abs(abs(r) - 1.0) <= CIRCLE_TOL:
                continue
            j = nearest(r)
            if j < 0 or abs(r - zn.roots[j]) > tol * max(1.0, abs(r)) or not avail[j]:
                continue
            m = 0.5 * (r + zn.roots[j])
            k = min(md, avail[j])
            if r.imag > 0:
                avail[j] -= k
                jc = nearest(np.conj(m))
                if jc < 0 or abs(np.conj(m) - zn.roots[jc]) > tol * max(1.0, abs(r)):
                    avail[j] += k
                    continue
                k2 = min(k, avail[jc])
                avail[j] += k - k2
                avail[jc] -= k2
                common.extend([m, np.conj(m)] * k2)
            else:
                avail[j] -= k
                common.extend([complex(m.real, 0.0)] * k)
        if not common:
            return self
        f = Poly.from_roots(common)
        n0, d0 = self.num.order, self.den.order
        num = _exact_quotient(Poly(self.num.coeffs[n0:]), f).shift(n0)
        den = _exact_quotient(Poly(self.den.coeffs[d0:]), f).shift(d0)
        return RatFn(num, den)

    def num_roots_expanded(self) -> list[complex]:
        return list(roots_in_z(self.num, cluster_tol=0.0).expanded())

    def den_roots_expanded(self) -> list[complex]:
        return list(roots_in_z(self.den, cluster_tol=0.0).expanded())

    def __repr__(self) -> str:
        return f"RatFn(num={list(self.num.coeffs)!r}, den={list(self.den.coeffs)!r})"


def ratfn_arith(a: RatFn, b: RatFn, op: str, reduce: bool = True) -> RatFn:
    if op == "add":
        return a.add(b, reduce)
    if op == "sub":
        return a.add(-b if not b.is_zero() else b, reduce)
    if op == "mul":
        return a.mul(b, reduce)
    if op == "div":
        if b.is_zero():
            raise ZeroDivisionError("division by the zero rational function")
        return a.mul(b.inv(), reduce)
    raise ValueError(f"unknown operation {op!r}")


def relative_degree(f: RatFn) -> int:
    """z-degree of the denominator minus that of the numerator."""
    if f.is_zero():
        raise ValueError("relative degree of the zero function is undefined")
    return f.num.order - f.den.order


@dataclass(frozen=True)
class Classification:
    stable: bool
    minimum_phase: bool
    proper: bool
    marginal_poles: bool = False
    marginal_zeros: bool = False

    @property
    def marginal(self) -> bool:
        return self.marginal_poles or self.marginal_zeros


def classify(f: RatFn, tol: float = CIRCLE_TOL) -> Classification:
    proper = f.is_proper()
    poles = roots_in_z(f.den, tol=tol).classification
    zeros = () if f.is_zero() else roots_in_z(f.num, tol=tol).classification
    return Classification(
        stable=proper and all(c == "inside" for c in poles),
        minimum_phase=all(c == "inside" for c in zeros),
        proper=proper,
        marginal_poles="on" in poles,
        marginal_zeros="on" in zeros,
    )


def impulse_prefix(f: RatFn, count: int) -> list[float]:
    """First ``count`` impulse-response samples of ``f`` by long division."""
    if count < 1:
        raise ValueError("count must be positive")
    if not f.is_proper():
        raise ValueError("impulse response of an improper function is not causal")
    n = np.pad(f.num.array, (0, max(0, count - len(f.num.coeffs))))
    d = f.den.array
    h = np.zeros(count)
    for k in range(count):
        acc = n[k]
        for j in range(1, min(k, len(d) - 1) + 1):
            acc -= d[j] * h[k - j]
        h[k] = acc / d[0]
    return h.tolist()
