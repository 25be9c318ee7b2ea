"""Seeded Monte Carlo simulation of the loop with a random-delay channel.

All runs are advanced together as numpy vectors.  Each run owns an
xorshift64* stream seeded from the master seed and its run index through a
splitmix64 mix, so results do not depend on the platform generator.

Per step ``k`` and per run, three uniforms are drawn in this order: two feed a
Box-Muller normal (cosine branch) for the external input and the third picks
the delay ``tau_k`` by inverse CDF over the PMF.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .analysis import LoopModel, ms_stability
from .channel import ChannelSpec
from .errors import ValidationError
from .linalg_ss import realize
from .ratfun import RatFn

__all__ = [
    "SimConfig",
    "SimResult",
    "ProbeResult",
    "KappaRow",
    "XorShift64Star",
    "simulate",
    "open_loop_channel_probe",
    "kappa_sweep",
    "OVERFLOW",
]

OVERFLOW = 1e12
MASK64 = (1 << 64) - 1
_MUL = np.uint64(0x2545F4914F6CDD1D)
_INV53 = 2.0**-53


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def run_seed(seed: int, index: int) -> int:
    """State for run ``index``: ``splitmix64(seed ^ splitmix64(index))``, never zero."""
    s = splitmix64((seed & MASK64) ^ splitmix64(index))
    return s or 0x9E3779B97F4A7C15


class XorShift64Star:
    """Vector of independent xorshift64* generators (shifts 12, 25, 27)."""

    def __init__(self, seed: int, runs: int):
        self.state = np.array([run_seed(seed, r) for r in range(runs)], dtype=np.uint64)

    def next_u64(self) -> np.ndarray:
        x = self.state
        x ^= x >> np.uint64(12)
        x ^= x << np.uint64(25)
        x ^= x >> np.uint64(27)
        self.state = x
        return x * _MUL

    def uniform(self) -> np.ndarray:
        """Doubles in ``(0, 1)`` from the top 53 bits."""
        return ((self.next_u64() >> np.uint64(11)).astype(np.float64) + 0.5) * _INV53

    def normal(self) -> np.ndarray:
        u1 = self.uniform()
        u2 = self.uniform()
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


@dataclass(frozen=True)
class SimConfig:
    horizon: int = 20000
    runs: int = 200
    burn_in: Optional[int] = None
    noise_std: float = 1.0
    seed: int = 0
    check_packets: bool = True

    def __post_init__(self):
        if self.horizon < 1:
            raise ValidationError(f"horizon must be positive, got {self.horizon}")
        if self.runs < 1:
            raise ValidationError(f"runs must be positive, got {self.runs}")
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", self.horizon // 10)
        if self.burn_in < 0 or self.burn_in >= self.horizon:
            raise ValidationError(f"burn_in must lie in [0, horizon), got {self.burn_in}")
        if not (self.noise_std >= 0.0) or not math.isfinite(self.noise_std):
            raise ValidationError(f"noise_std must be nonnegative, got {self.noise_std}")
        if not 0 <= self.seed <= MASK64:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


@dataclass(frozen=True)
class SimResult:
    power_u: float
    power_u_stderr: float
    power_d: float
    power_d_stderr: float
    empirical_rd: tuple[float, ...]
    diverged: bool
    diverged_runs: int
    runs: int
    samples: int
    tau_u_corr: float = math.nan
    tau_u_corr_stderr: float = math.nan


@dataclass(frozen=True)
class ProbeResult:
    mean_d: float
    mean_d_stderr: float
    rd: tuple[float, ...]
    rd_stderr: tuple[float, ...]
    power_u: float
    samples: int


def _mean_stderr(per_run: np.ndarray) -> tuple[float, float]:
    n = len(per_run)
    mean = math.fsum(per_run.tolist()) / n
    if n < 2:
        return mean, math.nan
    var = math.fsum(((per_run - mean) ** 2).tolist()) / (n - 1)
    return mean, math.sqrt(var / n)


class _Kahan:
    """Compensated per-run accumulator."""

    def __init__(self, shape):
        self.s = np.zeros(shape)
        self.c = np.zeros(shape)

    def add(self, x: np.ndarray) -> None:
        y = x - self.c
        t = self.s + y
        self.c = (t - self.s) - y
        self.s = t


class _Channel:
    """Delay sampler plus weighted receiver over ring buffers.

    The sampler only sees the generator, never the loop signals.
    """

    def __init__(self, spec: ChannelSpec, runs: int, check_packets: bool):
        self.alpha = np.asarray(spec.weights)
        self.p = np.asarray(spec.pmf)
        self.mean_taps = self.alpha * self.p
        self.T = spec.delay_bound
        self.L = self.T + 1
        cdf = np.cumsum(self.p)
        cdf[-1] = 1.0
        self.cdf = cdf
        self.u = np.zeros((runs, self.L))
        self.tau = np.full((runs, self.L), -1, dtype=np.int64)
        self.uses = np.zeros((runs, self.L), dtype=np.int64) if check_packets else None
        self.runs = runs

    def draw(self, uniform: np.ndarray) -> np.ndarray:
        return np.minimum(np.searchsorted(self.cdf, uniform, side="right"), self.T)

    def step(self, k: int, u: np.ndarray, tau: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Push ``u(k)``, ``tau_k`` and return ``(u_d(k), d(k))``."""
        slot = k % self.L
        if self.uses is not None:
            if np.any(self.uses[:, slot] > 1):
                raise AssertionError("a packet was used more than once")
            self.uses[:, slot] = 0
        self.u[:, slot] = u
        self.tau[:, slot] = tau
        ud = np.zeros(self.runs)
        hu = np.zeros(self.runs)
        for i in range(min(k, self.T) + 1):
            j = (k - i) % self.L
            hit = self.tau[:, j] == i
            ud += np.where(hit, self.alpha[i] * self.u[:, j], 0.0)
            hu += self.mean_taps[i] * self.u[:, j]
            if self.uses is not None:
                self.uses[:, j] += hit
        return ud, ud - hu


def _ss(f: RatFn):
    s = realize(f)
    return s.A, s.B[:, 0], s.C[0], s.D


def simulate(m: LoopModel, cfg: SimConfig) -> SimResult:
    """Ensemble-and-time average of ``u^2`` and ``d^2`` after burn-in.

    A run whose ``|u|`` exceeds the overflow guard is frozen and flagged; its
    averages then cover only the steps it completed and are lower bounds.
    """
    if m.K is None:
        raise ValidationError("simulation needs a controller")
    Ap, Bp, Cp, Dp = _ss(m.P)
    Ak, Bk, Ck, Dk = _ss(m.K)
    R = cfg.runs
    rng = XorShift64Star(cfg.seed, R)
    ch = _Channel(m.spec, R, cfg.check_packets)
    T = ch.T
    xp = np.zeros((R, len(Bp)))
    xk = np.zeros((R, len(Bk)))
    alive = np.ones(R, dtype=bool)
    su, sd = _Kahan(R), _Kahan(R)
    srd = _Kahan((R, T + 1))
    count = np.zeros(R)
    dring = np.zeros((R, T + 1))
    # moments for the sample correlation between tau_k and u(k)
    mom = _Kahan((5, R))
    for k in range(cfg.horizon):
        y = xp @ Cp
        u = xk @ Ck + Dk * y
        v = cfg.noise_std * rng.normal()
        tau = ch.draw(rng.uniform())
        blown = alive & ~(np.abs(u) <= OVERFLOW)
        if blown.any():
            alive &= ~blown
        u = np.where(alive, u, 0.0)
        ud, d = ch.step(k, u, tau)
        e = v + ud
        xp = xp @ Ap.T + np.outer(e, Bp)
        xk = xk @ Ak.T + np.outer(y, Bk)
        xp[~alive] = 0.0
        xk[~alive] = 0.0
        dring[:, k % (T + 1)] = d
        if k >= cfg.burn_in:
            w = alive.astype(float)
            su.add(w * u * u)
            sd.add(w * d * d)
            lagged = dring[:, [(k - l) % (T + 1) for l in range(T + 1)]]
            srd.add(w[:, None] * d[:, None] * lagged)
            tf = tau.astype(float)
            mom.add(w * np.stack([tf, u, tf * u, tf * tf, u * u]))
            count += w
    safe = np.maximum(count, 1.0)
    pu, pu_se = _mean_stderr(su.s / safe)
    pd, pd_se = _mean_stderr(sd.s / safe)
    rd = tuple(_mean_stderr(srd.s[:, l] / safe)[0] for l in range(T + 1))
    n_div = int((~alive).sum())
    mt, mu, mtu, mtt, muu = mom.s / safe
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = (mtu - mt * mu) / np.sqrt((mtt - mt * mt) * (muu - mu * mu))
    corr = corr[alive & np.isfinite(corr)]
    c, c_se = _mean_stderr(corr) if len(corr) else (math.nan, math.nan)
    return SimResult(pu, pu_se, pd, pd_se, rd, n_div > 0, n_div, R, int(count.sum()), c, c_se)


def open_loop_channel_probe(spec: ChannelSpec, input_power: float, cfg: SimConfig) -> ProbeResult:
    """Drive the channel with white Gaussian input and measure its uncertainty output."""
    if input_power < 0:
        raise ValidationError(f"input power must be nonnegative, got {input_power}")
    R = cfg.runs
    rng = XorShift64Star(cfg.seed, R)
    ch = _Channel(spec, R, cfg.check_packets)
    T = ch.T
    amp = math.sqrt(input_power)
    sm, su = _Kahan(R), _Kahan(R)
    srd = _Kahan((R, T + 1))
    dring = np.zeros((R, T + 1))
    count = 0
    for k in range(cfg.horizon):
        u = amp * rng.normal()
        tau = ch.draw(rng.uniform())
        _, d = ch.step(k, u, tau)
        dring[:, k % (T + 1)] = d
        if k >= cfg.burn_in:
            sm.add(d)
            su.add(u * u)
            lagged = dring[:, [(k - l) % (T + 1) for l in range(T + 1)]]
            srd.add(d[:, None] * lagged)
            count += 1
    mean_d, mean_se = _mean_stderr(sm.s / count)
    rd, rd_se = zip(*(_mean_stderr(srd.s[:, l] / count) for l in range(T + 1)))
    pu, _ = _mean_stderr(su.s / count)
    return ProbeResult(mean_d, mean_se, tuple(rd), tuple(rd_se), pu, count * R)


@dataclass(frozen=True)
class KappaRow:
    kappa: float
    margin: float
    power_theory: float
    power_sim: float
    power_sim_stderr: float
    diverged: bool


def kappa_sweep(m: LoopModel, Qtilde: RatFn, kappas: Sequence[float], cfg: Optional[SimConfig],
                synthesis=None) -> list[KappaRow]:
    """Margin and control power along ``Q = Q_opt + kappa Qtilde``.

    With ``cfg`` set to ``None`` only the theoretical columns are filled.
    """
    from .synth import synthesize, youla_controller

    if any(k < 0 for k in kappas):
        raise ValidationError("kappa values must be nonnegative")
    res = synthesis if synthesis is not None else synthesize(m)
    rows = []
    for kappa in kappas:
        Q = res.Q_opt + Qtilde.scale(kappa) if kappa else res.Q_opt
        K = youla_controller(res.pair, Q)
        loop = m.with_controller(K)
        rep = ms_stability(loop)
        sigma2 = 1.0 if cfg is None else cfg.noise_std**2
        theory = rep.predicted_power_gain * sigma2
        if cfg is None:
            rows.append(KappaRow(float(kappa), rep.ms_margin, theory, math.nan, math.nan, False))
            continue
        sim = simulate(loop, cfg)
        rows.append(KappaRow(float(kappa), rep.ms_margin, theory, sim.power_u,
                             sim.power_u_stderr, sim.diverged))
    rows.sort(key=lambda r: r.margin)
    return rows
