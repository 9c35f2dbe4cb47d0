import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spreadlab import benchmarks
from spreadlab.benchmarks import NoTradableWindows, TooShort, abdi_ranaldo, agk1, corwin_schultz, cs_intermediates, roll
from spreadlab.series import OhlcSeries, aggregate_bars
from spreadlab.simkit import SimConfig, simulate_day
from spreadlab.spreads import s2_standard, truncate


def _flat_bars(n, level=1.0):
    x = np.full(n, level)
    return OhlcSeries(x, x, x, x)


def test_roll_constant():
    assert roll(np.full(10, 3.0)).s_squared == 0.0


def test_roll_bounce():
    s = 0.01
    p = 4.0 + 0.5 * s * np.array([1, -1] * 10, dtype=float)
    est = roll(p)
    assert est.s_squared == pytest.approx(4 * s * s, rel=1e-12)
    assert est.s == pytest.approx(2 * s, rel=1e-12)


def test_roll_ramp():
    c = 0.002
    est = roll(np.arange(30) * c)
    assert est.s_squared == pytest.approx(-4 * c * c, rel=1e-10)
    assert est.s == 0.0


def test_roll_short():
    with pytest.raises(TooShort):
        roll(np.zeros(2))


def test_cs_degenerate_bars():
    b = _flat_bars(5)
    beta, gamma, eps, alpha, fb = cs_intermediates(b)
    assert np.all(beta == 0) and np.all(gamma == 0) and np.all(eps == 0) and np.all(alpha == 0)
    assert corwin_schultz(b).s_squared == 0.0


def _random_bars(seed, n=20, scale=0.01):
    x = np.cumsum(np.random.default_rng(seed).standard_normal(n * 30)) * scale
    return aggregate_bars(x, 30)


@given(st.integers(0, 2**32 - 1), st.floats(1e-4, 0.3))
def test_cs_window_range(seed, scale):
    b = _random_bars(seed, scale=scale)
    beta, gamma, eps, alpha, _ = cs_intermediates(b)
    assert np.all(beta >= 0) and np.all(gamma >= 0)
    cs_t = 2 * (np.exp(alpha) - 1) / (1 + np.exp(alpha))
    assert np.all(np.abs(cs_t) < 2)


def test_ar_degenerate():
    assert abdi_ranaldo(_flat_bars(4)).s_squared == 0.0


def test_ar_hand_evaluation():
    # mid-ranges 1 and 2, first close 1.5: -4 (1.5 - 1) (2 - 1.5)
    b = OhlcSeries([1.0, 1.5], [2.0, 3.0], [0.0, 1.0], [1.5, 1.2])
    assert abdi_ranaldo(b).s_squared == pytest.approx(-1.0, rel=1e-15)


def test_agk1_all_degenerate():
    with pytest.raises(NoTradableWindows, match="no tradable windows"):
        agk1(_flat_bars(6))


def test_agk1_hand_evaluation():
    o = np.array([0.0, 0.1, 0.3, 0.2])
    h = np.array([0.2, 0.4, 0.5, 0.6])
    l = np.array([-0.1, 0.0, 0.1, 0.1])
    c = np.array([0.1, 0.2, 0.3, 0.4])
    b = OhlcSeries(o, h, l, c)
    x = (h[1:] + l[1:]) / 2 - o[1:]
    x = x - x.mean()
    ref = -4 * float(np.sum(x * (o[1:] - c[:-1]))) / 3
    assert agk1(b).s_squared == pytest.approx(ref, rel=1e-13)


def test_agk2_reserved():
    assert benchmarks.RESERVED["agk2"] == "unimplemented: agk2 (EDGE)"


@given(st.integers(0, 2**32 - 1), st.floats(-100, 100))
def test_translation_invariance(seed, c):
    b = _random_bars(seed)
    shifted = OhlcSeries(b.open + c, b.high + c, b.low + c, b.close + c)
    for f in (roll, abdi_ranaldo, corwin_schultz, agk1):
        assert f(shifted).s_squared == pytest.approx(f(b).s_squared, rel=1e-6, abs=1e-9)


@pytest.fixture(scope="module")
def model1_days():
    cfg = SimConfig(seed=31)
    return [simulate_day(cfg, t) for t in range(300)]


@pytest.mark.slow
def test_model1_benchmarks(model1_days):
    def spread(f):
        return truncate(np.array([f(c, b) for c, b in model1_days]))

    cs = spread(lambda c, b: corwin_schultz(b).s_squared)
    ar = spread(lambda c, b: abdi_ranaldo(b).s_squared)
    ag = spread(lambda c, b: agk1(b).s_squared)
    n = len(model1_days)
    # reference biases: CS -3.2e-4, AR -9.2e-6 (std 5.1e-5), AGK1 +1.2e-4
    assert abs(cs.mean() - 0.005 + 3.2e-4) < 4 * cs.std() / math.sqrt(n) + 5e-5
    assert abs(ar.mean() - 0.005 + 9.2e-6) < 4 * ar.std() / math.sqrt(n)
    assert ar.std() == pytest.approx(5.1e-5, rel=0.3)
    # small upward bias; the magnitude here (about 2.7e-4) exceeds the reference
    assert 0 < ag.mean() - 0.005 < 0.1 * 0.005
    # Roll and the standard estimator are both unbiased for the squared spread
    r2 = np.array([roll(c).s_squared for c, _ in model1_days])
    q2 = np.array([s2_standard(c).s_squared for c, _ in model1_days])
    se = math.sqrt(r2.var() / n + q2.var() / n)
    assert abs(r2.mean() - q2.mean()) < 4 * se


@pytest.mark.slow
def test_agk1_infrequent_trading():
    cfg = SimConfig(seed=32, liquidity_prob=0.1)
    s = truncate(np.array([agk1(simulate_day(cfg, t)[1]).s_squared for t in range(200)]))
    assert abs(s.mean() - 0.005) < 0.25 * 0.005


def test_constant_series_all_benchmarks():
    b = _flat_bars(8)
    assert roll(b.closes()).s_squared == 0.0
    assert abdi_ranaldo(b).s_squared == 0.0
    assert corwin_schultz(b).s_squared == 0.0
    with pytest.raises(NoTradableWindows):
        agk1(b)


@given(arrays(float, st.integers(3, 60), elements=st.floats(-1, 1)))
def test_roll_matches_definition(p):
    d = np.diff(p)
    ref = -4 / (p.size - 2) * sum(d[i] * d[i + 1] for i in range(p.size - 2))
    assert roll(p).s_squared == pytest.approx(ref, rel=1e-9, abs=1e-12)
