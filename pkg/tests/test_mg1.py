import math

import pytest
from hypothesis import given, settings, strategies as st

from psq import BusyPeriodSolver, Exponential, ModelParams, UnstableLoad, qlen_mean, qlen_pmf
from psq.errors import NotConverged
from psq.mg1 import qlen_pmf_array
from psq.service import Deterministic, Erlang, hyperexp_balanced


def test_busy_lst_examples(mm1):
    s = BusyPeriodSolver(mm1)
    assert s.busy_lst(0) == pytest.approx(1.0, abs=1e-11)
    # lam pi^2 - (lam + mu + r) pi + mu = 0, minimal root
    assert s.busy_lst(0.5) == pytest.approx(2 - math.sqrt(2), abs=1e-12)
    empty = BusyPeriodSolver(ModelParams(0, Erlang(2, 3)))
    assert empty.busy_lst(0.7) == Erlang(2, 3).lst(0.7)


def test_busy_quadratic_root_over_r(mm1):
    s = BusyPeriodSolver(mm1)
    lam, mu = 0.5, 1.0
    for r in (0.01, 0.2, 1.0, 5.0):
        b = lam + mu + r
        root = (b - math.sqrt(b * b - 4 * lam * mu)) / (2 * lam)
        res = s.solve(r)
        assert res.value == pytest.approx(root, abs=1e-11)
        assert res.residual < 1e-12
        assert res.iterations >= 1


def test_busy_mean(mm1):
    s = BusyPeriodSolver(mm1)
    assert s.busy_mean() == 2
    assert BusyPeriodSolver(ModelParams(0, Deterministic(0.7))).busy_mean() == 0.7
    h = 1e-6
    fd = -(s.busy_lst(h) - s.busy_lst(0)) / h
    assert fd == pytest.approx(2.0, rel=1e-4)
    with pytest.raises(UnstableLoad):
        BusyPeriodSolver(ModelParams(1.0, Exponential(1))).busy_mean()


def test_busy_not_converged(mm1):
    with pytest.raises(NotConverged):
        BusyPeriodSolver(mm1, max_iters=3).busy_lst(0.0)


@given(st.floats(0.0, 0.95), st.floats(0, 5), st.floats(0, 5))
@settings(max_examples=40, deadline=None)
def test_busy_lst_nonincreasing(rho, r1, r2):
    s = BusyPeriodSolver(ModelParams(rho, hyperexp_balanced(1.0, 3.0)), tol=1e-13)
    lo, hi = sorted((r1, r2))
    assert s.busy_lst(hi) <= s.busy_lst(lo) + 1e-10


def test_qlen_examples():
    p0 = ModelParams(0.5, Exponential(1))
    assert qlen_pmf(p0, 0) == 0.5
    assert qlen_pmf(p0, 1) == 0.25
    assert qlen_pmf(p0.with_K(1), 2) == 0.1875
    assert qlen_mean(p0) == 1
    assert qlen_mean(p0.with_K(1)) == 2
    assert qlen_mean(ModelParams(0, Exponential(1))) == 0
    with pytest.raises(UnstableLoad):
        qlen_pmf(ModelParams(2, Exponential(1)), 0)


@pytest.mark.parametrize("rho,K", [(0.1, 0), (0.5, 2), (0.9, 5)])
def test_qlen_normalised_and_mean(rho, K):
    p = ModelParams(rho, Exponential(1), K)
    n = 1
    while qlen_pmf(p, n) > 1e-15 or n < 10:
        n += 1
    pmf = qlen_pmf_array(p, n + 200)
    assert math.fsum(pmf) == pytest.approx(1.0, abs=1e-12)
    assert math.fsum(k * q for k, q in enumerate(pmf)) == pytest.approx(qlen_mean(p), rel=1e-10)


def test_qlen_large_n_uses_log_domain():
    p = ModelParams(0.99, Exponential(1), 3)
    a = qlen_pmf(p, 500)
    b = qlen_pmf(p, 501)
    assert b / a == pytest.approx(0.99 * 504 / 501, rel=1e-10)


def test_qlen_insensitive_to_service_law():
    laws = [Exponential(1), Deterministic(1), Erlang(3, 3), hyperexp_balanced(1, 5)]
    for n in range(6):
        vals = {qlen_pmf(ModelParams(0.7, d), n) for d in laws}
        assert max(vals) - min(vals) <= 1e-15
