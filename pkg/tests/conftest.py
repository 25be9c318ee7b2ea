import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from msnet import ChannelSpec, LoopModel, RatFn

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

# two-step delay channel with a dropout slot, weights zero at the bound
PMF2 = (0.6, 0.3, 0.1)
WEIGHTS2 = (0.6, 0.4, 0.0)


def delay2_spec() -> ChannelSpec:
    return ChannelSpec(PMF2, WEIGHTS2)


def two_pole_plant(extra_delay: int = 0) -> RatFn:
    """(z - 0.2) / (z^r (z - 1.1)(z - 1.2))."""
    den = np.polymul([1.0] + [0.0] * extra_delay, np.polymul([1, -1.1], [1, -1.2]))
    return RatFn.from_z([1.0, -0.2], den)


@pytest.fixture
def spec2():
    return delay2_spec()


@pytest.fixture
def model2():
    return LoopModel(two_pole_plant(), delay2_spec())


def circle(n: int = 64) -> np.ndarray:
    return np.exp(2j * np.pi * (np.arange(n) + 0.5) / n)


# ---- strategies -----------------------------------------------------------

def _roots_strategy(rmin, rmax, max_pairs=2, max_real=3):
    real = st.lists(
        st.floats(rmin, rmax).flatmap(lambda m: st.sampled_from([m, -m])),
        max_size=max_real,
    )
    pair = st.tuples(st.floats(rmin, rmax), st.floats(0.2, 2.9))
    pairs = st.lists(pair, max_size=max_pairs)

    def build(args):
        r, ps = args
        out = list(r)
        for mod, ang in ps:
            z = mod * np.exp(1j * ang)
            out += [z, np.conj(z)]
        return out

    return st.tuples(real, pairs).map(build)


stable_roots = _roots_strategy(0.05, 0.9)
unstable_roots = _roots_strategy(1.05, 2.0, max_pairs=1, max_real=2)


def poly_from(roots, gain=1.0):
    return np.real(np.poly(roots)) * gain if len(roots) else np.array([gain])


@st.composite
def stable_ratfn(draw, strictly_proper=False):
    """Random stable proper rational function, built in descending z powers."""
    p = draw(stable_roots)
    z = draw(st.lists(st.floats(-2, 2), max_size=max(len(p) - int(strictly_proper), 0)))
    gain = draw(st.floats(0.2, 3.0))
    num = poly_from([], gain) if not z else poly_from(z, gain)
    den = poly_from(p)
    if len(num) > len(den) - int(strictly_proper):
        num = num[: len(den) - int(strictly_proper)] if len(den) - int(strictly_proper) > 0 else np.array([0.0])
    if not np.any(num):
        num = np.array([gain])
        if strictly_proper:
            den = np.polymul(den, [1.0, 0.0])
    return RatFn.from_z(num.tolist(), den.tolist())


@st.composite
def channel_specs(draw, max_bound=3):
    T = draw(st.integers(0, max_bound))
    raw = draw(st.lists(st.floats(0.01, 1.0), min_size=T + 1, max_size=T + 1))
    pmf = np.array(raw) / sum(raw)
    pmf[-1] = 1.0 - pmf[:-1].sum()
    weights = draw(st.lists(st.floats(0.1, 1.0), min_size=T + 1, max_size=T + 1))
    if T > 0:
        weights[-1] = 0.0
    return ChannelSpec(tuple(pmf), tuple(weights))
