import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from psq.errors import InfiniteMoment
from psq.service import (Deterministic, Erlang, Exponential, HyperExponential, ProbeMixture,
                         Tabulated, hyperexp_balanced, parse_dist)
from scipy import integrate

KINDS = [
    Exponential(1.0),
    Exponential(2.5),
    Deterministic(2.0),
    Erlang(3, 2.0),
    HyperExponential((0.3, 0.7), (0.5, 4.0)),
    ProbeMixture(Exponential(1.0), 1.0, 0.1),
    ProbeMixture(Erlang(2, 3.0), 0.5, 0.3),
    Tabulated(0.5, np.array([0.0, 0.1, 0.45, 0.7, 0.9, 1.0])),
]
IDS = [type(d).__name__ + str(i) for i, d in enumerate(KINDS)]


def test_cdf_examples():
    assert Exponential(1).cdf(0) == 0
    assert Exponential(1).cdf(math.log(2)) == pytest.approx(0.5, abs=1e-15)
    assert Deterministic(2).cdf(1.999) == 0
    assert Deterministic(2).cdf(2) == 1


def test_cdf_rejects_negative():
    with pytest.raises(ValueError):
        Exponential(1).cdf(-0.1)


def test_moment_examples():
    assert Exponential(1).moment(2) == 2
    assert Deterministic(2).moment(3) == 8
    assert Erlang(2, 2).moment(1) == 1


def test_lst_examples():
    for d in KINDS:
        assert d.lst(0) == pytest.approx(1.0, abs=1e-15)
    assert Exponential(1).lst(1) == 0.5
    assert Deterministic(1).lst(1) == pytest.approx(0.367879, abs=1e-6)


def test_excess_examples():
    for d in KINDS:
        assert d.excess_cdf(0) == 0
    assert Exponential(1).excess_cdf(1) == pytest.approx(0.632121, abs=1e-6)
    assert Deterministic(2).excess_cdf(1) == 0.5


def test_overflowing_moment_is_an_error():
    with pytest.raises(InfiniteMoment):
        Exponential(1e-3).moment(200)


@pytest.mark.parametrize("d", KINDS, ids=IDS)
def test_cdf_monotone_and_normalised(d):
    xs = np.linspace(0, 40, 2001)
    vals = np.array([d.cdf(x) for x in xs])
    assert vals[0] == 0
    assert np.all(np.diff(vals) >= 0)
    assert vals[-1] == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("d", KINDS, ids=IDS)
def test_lst_strictly_decreasing(d):
    s = np.linspace(0, 10, 101)
    vals = np.array([d.lst(x) for x in s])
    assert np.all(np.diff(vals) < 0)


@pytest.mark.parametrize("d", KINDS, ids=IDS)
def test_mean_is_integral_of_survival(d):
    brk = [a for a, _ in d.atoms()] + ([0.5 * k for k in range(6)] if isinstance(d, Tabulated) else [])
    val, _ = integrate.quad(lambda x: 1 - d.cdf(x), 0, 60, points=brk or None, limit=200)
    assert val == pytest.approx(d.moment(1), rel=1e-8)


@pytest.mark.parametrize("d", KINDS, ids=IDS)
def test_lst_slope_at_zero_is_minus_mean(d):
    h = 1e-6
    # second-order one-sided difference (the LST is defined for s >= 0 only)
    slope = (-3 * d.lst(0) + 4 * d.lst(h) - d.lst(2 * h)) / (2 * h)
    assert slope == pytest.approx(-d.moment(1), rel=1e-6)


@pytest.mark.parametrize("d", KINDS, ids=IDS)
def test_excess_matches_quadrature(d):
    brk = [a for a, _ in d.atoms()] + ([0.5 * k for k in range(6)] if isinstance(d, Tabulated) else [])
    for x in (0.3, 1.0, 2.7):
        pts = [p for p in brk if p < x] or None
        val, _ = integrate.quad(lambda y: 1 - d.cdf(y), 0, x, points=pts, limit=200)
        assert d.excess_cdf(x) == pytest.approx(val / d.mean, abs=1e-10)


@pytest.mark.parametrize("d", KINDS, ids=IDS)
def test_moments_match_sampling(d):
    rng = np.random.default_rng(7)
    x = d.sample_many(rng, 200_000)
    assert np.all(x > 0)
    se = math.sqrt(d.moment(2) - d.moment(1) ** 2) / math.sqrt(x.size)
    assert abs(x.mean() - d.moment(1)) < 5 * se + 1e-12


@given(st.floats(0.01, 50), st.floats(0, 30))
def test_exponential_excess_is_memoryless(rate, x):
    d = Exponential(rate)
    assert abs(d.excess_cdf(x) - d.cdf(x)) <= 1e-12


@given(st.lists(st.floats(0.05, 1.0), min_size=1, max_size=4), st.floats(0, 20), st.floats(0, 20))
@settings(max_examples=50)
def test_hyperexp_cdf_monotone(raw, a, b):
    w = np.array(raw) / sum(raw)
    w[-1] = 1 - w[:-1].sum()
    d = HyperExponential(tuple(w), tuple(1 + np.arange(len(raw))))
    lo, hi = sorted((a, b))
    assert d.cdf(lo) <= d.cdf(hi)


def test_sample_examples():
    rng = np.random.default_rng(1)
    assert Deterministic(2).sample(rng) == 2
    assert np.all(Deterministic(2).sample_many(rng, 100) == 2)
    x = Exponential(1).sample_many(rng, 10**6)
    assert abs(x.mean() - 1) < 0.01
    m = ProbeMixture(Exponential(1), 1.0, 0.1).sample_many(rng, 10**6)
    assert abs(np.mean(m == 1.0) - 0.1) < 0.01


def test_invalid_parameters():
    with pytest.raises(ValueError):
        HyperExponential((0.5, 0.4), (1, 2))
    with pytest.raises(ValueError):
        ProbeMixture(Exponential(1), 0.0, 0.1)
    with pytest.raises(ValueError):
        Exponential(0)
    with pytest.raises(ValueError):
        Tabulated(0.1, [0.1, 1.0])


def test_balanced_hyperexp():
    d = hyperexp_balanced(1.0, 4.0)
    assert d.mean == pytest.approx(1.0)
    assert d.moment(2) / d.mean**2 - 1 == pytest.approx(4.0)


def test_parse_dist(tmp_path):
    assert parse_dist("exp:2") == Exponential(2.0)
    assert parse_dist("det:0.5") == Deterministic(0.5)
    assert parse_dist("erlang:2:3") == Erlang(2, 3.0)
    assert parse_dist("hyperexp:0.5:1:0.5:3") == HyperExponential((0.5, 0.5), (1.0, 3.0))
    mix = parse_dist("mix:exp:1:1.0:0.1")
    assert mix == ProbeMixture(Exponential(1.0), 1.0, 0.1)
    assert parse_dist(mix.to_spec()) == mix
    path = tmp_path / "b.csv"
    path.write_text("x,B\n0,0\n0.5,0.25\n1.0,1.0\n")
    tab = parse_dist(f"table:{path}")
    assert tab.cdf(0.25) == pytest.approx(0.125)
    assert tab.moment(1) == pytest.approx(integrate.quad(lambda x: 1 - tab.cdf(x), 0, 1, points=[0.5])[0])
    for bad in ("exp", "exp:a", "weird:1", "erlang:1.5:2", "mix:exp:1:0.5"):
        with pytest.raises(ValueError):
            parse_dist(bad)
