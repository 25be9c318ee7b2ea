"""State-space realizations, Stein equations, H2 norms and balanced inner functions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ratfun import RatFn, RootSet, classify, CIRCLE_TOL

__all__ = [
    "StateSpace",
    "IllConditionedError",
    "realize",
    "stein_solve",
    "h2_norm_sq",
    "balanced_inner",
    "inverse_realization",
    "ratfn_of_matrix",
    "solve",
    "cascade",
]

COND_LIMIT = 1e12


class IllConditionedError(np.linalg.LinAlgError):
    pass


def solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """LU solve (partial pivoting) that refuses badly conditioned systems."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return np.asarray(B, dtype=float)
    c = np.linalg.cond(A, 1)
    if not np.isfinite(c) or c > COND_LIMIT:
        raise IllConditionedError(f"matrix condition estimate {c:.3g} exceeds {COND_LIMIT:g}")
    return np.linalg.solve(A, B)


@dataclass(frozen=True, eq=False)
class StateSpace:
    """SISO realization ``C (zI - A)^{-1} B + D``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = 0 if A.size == 0 else A.shape[0]
        A = A.reshape(n, n)
        B = np.asarray(self.B, dtype=float).reshape(n, 1)
        C = np.asarray(self.C, dtype=float).reshape(1, n)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", float(self.D))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def system_matrix(self) -> np.ndarray:
        return np.block([[self.A, self.B], [self.C, np.array([[self.D]])]])

    def __call__(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        out = np.full(z.shape, self.D, dtype=complex)
        if self.n:
            I = np.eye(self.n)
            for k, zk in enumerate(z):
                out[k] += (self.C @ np.linalg.solve(zk * I - self.A, self.B)).item()
        return out

    def markov(self, count: int) -> list[float]:
        """Impulse response ``D, CB, CAB, ...``."""
        h = [self.D]
        x = self.B
        for _ in range(count - 1):
            h.append((self.C @ x).item())
            x = self.A @ x
        return h


def cascade(first: StateSpace, second: StateSpace) -> StateSpace:
    """Series connection: input -> first -> second."""
    n1, n2 = first.n, second.n
    A = np.block([
        [first.A, np.zeros((n1, n2))],
        [second.B @ first.C, second.A],
    ])
    B = np.vstack([first.B, second.B * first.D])
    C = np.hstack([second.D * first.C, second.C])
    return StateSpace(A, B, C, second.D * first.D)


def realize(f: RatFn) -> StateSpace:
    """Controllable canonical realization of a proper rational function."""
    if not f.is_proper():
        raise ValueError("cannot realize an improper rational function")
    if f.is_zero():
        return StateSpace(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), 0.0)
    n = max(len(f.num.coeffs), len(f.den.coeffs)) - 1
    d = np.pad(f.den.array, (0, n + 1 - len(f.den.coeffs)))
    num = np.pad(f.num.array, (0, n + 1 - len(f.num.coeffs)))
    d0 = d[0]
    a = d / d0
    b = num / d0
    D = b[0]
    if n == 0:
        return StateSpace(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), D)
    A = np.zeros((n, n))
    A[0, :] = -a[1:]
    A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = (b[1:n + 1] - D * a[1:]).reshape(1, n)
    return StateSpace(A, B, C, D)


def stein_solve(A: np.ndarray, Q: np.ndarray, max_doublings: int = 64) -> np.ndarray:
    """Solve ``X = A X A^T + Q`` by the squaring (doubling) iteration.

    Raises
    ------
    np.linalg.LinAlgError
        If the spectral radius of ``A`` is not below ``1 - 1e-9``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if A.size == 0:
        return Q.copy()
    X = Q.copy()
    Ak = A.copy()
    for k in range(max_doublings):
        norm = np.linalg.norm(Ak, 2)
        if norm == 0.0:
            return X
        # ||A^(2^k)||^(1/2^k) bounds the spectral radius from above
        rho_est = np.exp(np.log(norm) / 2.0**k)
        if k >= 40 and rho_est >= 1 - 1e-9:
            raise np.linalg.LinAlgError("marginally stable A: spectral radius >= 1 - 1e-9")
        if norm > 1e150:
            raise np.linalg.LinAlgError("marginally stable A: spectral radius >= 1 - 1e-9")
        update = Ak @ X @ Ak.T
        X = X + update
        if np.linalg.norm(update) < 1e-14 * max(1.0, np.linalg.norm(X)) and norm < 1.0:
            return 0.5 * (X + X.T)
        Ak = Ak @ Ak
    raise np.linalg.LinAlgError("marginally stable A: spectral radius >= 1 - 1e-9")


def h2_norm_sq(f: RatFn) -> float:
    """Squared H2 norm of a stable proper rational function."""
    if f.is_zero():
        return 0.0
    cls = classify(f)
    if not cls.proper:
        raise ValueError("H2 norm of an improper function is infinite")
    if cls.marginal_poles:
        raise ValueError("H2 norm undefined: pole on the unit circle")
    if not cls.stable:
        raise ValueError("H2 norm undefined: unstable function")
    return h2_norm_sq_ss(realize(f))


def h2_norm_sq_ss(s: StateSpace) -> float:
    if s.n == 0:
        return s.D**2
    X = stein_solve(s.A, s.B @ s.B.T)
    return float((s.C @ X @ s.C.T).item() + s.D**2)


def _first_order_section(lam: float) -> StateSpace:
    s = np.sqrt(lam * lam - 1.0)
    return StateSpace([[1.0 / lam]], [[s / lam]], [[s / lam]], -1.0 / lam)


def _second_order_section(lam: complex) -> StateSpace:
    # (z-l)(z-l*) / ((1-l* z)(1-l z)), real coefficients
    s = 2 * lam.real
    m = abs(lam) ** 2
    f = RatFn.from_z([1.0, -s, m], [m, -s, 1.0])
    r = realize(f)
    P = stein_solve(r.A, r.B @ r.B.T)
    Qo = stein_solve(r.A.T, r.C.T @ r.C)
    # square-root balancing: P = L L^T, L^T Qo L = U S^2 U^T, T = L U S^{-1/2}
    L = np.linalg.cholesky(P)
    U, sig2, _ = np.linalg.svd(L.T @ Qo @ L)
    sig = np.sqrt(sig2)
    T = L @ U @ np.diag(sig ** -0.5)
    Ti = np.diag(sig ** 0.5) @ U.T @ solve(L, np.eye(2))
    return StateSpace(Ti @ r.A @ T, Ti @ r.B, r.C @ T, r.D)


def balanced_inner(unstable_poles: RootSet) -> StateSpace:
    """Balanced real realization of ``prod (z - l) / (1 - l* z)`` over the poles.

    Built as a cascade of first-order sections (real poles) and Gramian-balanced
    second-order sections (conjugate pairs); the system matrix is orthogonal.
    """
    poles = unstable_poles.expanded()
    for lam in poles:
        if abs(lam) <= 1 + CIRCLE_TOL:
            raise ValueError(f"pole {lam} is not strictly outside the unit circle")
    s = StateSpace(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), 1.0)
    pending = list(poles)
    while pending:
        lam = complex(pending.pop(0))
        if lam.imag == 0.0:
            sec = _first_order_section(lam.real)
        else:
            gaps = [abs(p - lam.conjugate()) for p in pending]
            if not gaps or min(gaps) > 1e-6 * abs(lam):
                raise ValueError(f"complex pole {lam} has no conjugate partner")
            pending.pop(int(np.argmin(gaps)))
            sec = _second_order_section(lam)
        s = cascade(s, sec)
    return s


def inverse_realization(s: StateSpace) -> StateSpace:
    if s.D == 0.0:
        raise ZeroDivisionError("realization with D = 0 has no proper inverse")
    Di = 1.0 / s.D
    return StateSpace(s.A - s.B @ s.C * Di, -s.B * Di, s.C * Di, Di)


def _polyval_matrix(coeffs_desc: np.ndarray, M: np.ndarray) -> np.ndarray:
    I = np.eye(M.shape[0])
    out = np.zeros_like(M)
    for c in coeffs_desc:
        out = out @ M + c * I
    return out


def ratfn_of_matrix(f: RatFn, M: np.ndarray) -> np.ndarray:
    """``num(M) den(M)^{-1}`` with ``num``/``den`` the z-polynomials of ``f``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return M.copy()
    n, d = f.z_polys()
    N = _polyval_matrix(n, M)
    Dm = _polyval_matrix(d, M)
    try:
        # N D^{-1} = (D^{-T} N^T)^T
        return solve(Dm.T, N.T).T
    except IllConditionedError as exc:
        raise IllConditionedError(
            f"denominator of f is numerically singular at the matrix argument: {exc}"
        ) from None
