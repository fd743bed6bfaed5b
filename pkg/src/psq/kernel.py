"""Kernels of the sojourn-time series for the M/G/1 processor-sharing queue.

The FCFS waiting-time law W enters only as a computational device:

    W(x)       = (1 - rho) * sum_k rho^k F^{k*}(x)
    W^{n*}(x)  = (1 - rho)^n * sum_k C(k + n - 1, n - 1) rho^k F^{k*}(x)
    xi_n(u)    = (1 - rho)^{-n} * int_{[0, u]} (u - x)^n dW^{(n-1)*}(x)
    1 / v(r,u) = sum_n r^n xi_n(u) / n!

with F the excess (equilibrium) law of the job size.
"""
from __future__ import annotations

import math
import threading
from typing import NamedTuple

import numpy as np
from scipy import stats

from .errors import HorizonExceeded, NotConverged
from .grid import ALIGN_TOL, GriddedDF, GridFunction, _n_nodes, convolve_df, stieltjes_convolve
from .model import ModelParams

DEFAULT_EPS = 1e-10


class Wcirc(NamedTuple):
    value: float
    converged: bool
    terms: int


class _ExcessPowers:
    """Lazily extended list F^{0*}, F^{1*}, ... on one grid."""

    def __init__(self, params: ModelParams, step: float, n: int):
        d = params.service
        F = GriddedDF.from_function(d.excess_cdf, step, n)
        self.powers: list[GriddedDF] = [GriddedDF.unit_step(step, n), F]

    def __getitem__(self, k: int) -> GriddedDF:
        while len(self.powers) <= k:
            self.powers.append(convolve_df(self.powers[-1], self.powers[1]))
        return self.powers[k]

    def mass_at_horizon(self, k: int) -> float:
        return float(self[k].values[-1]) if self[k].n else 1.0


def _mixture(powers: _ExcessPowers, weight, tail, eps: float) -> tuple[np.ndarray, int]:
    """Sum weight(k) * F^{k*} until tail(k) * F^{k*}(horizon) < eps.

    Each F^{(k+1)*} is dominated by F^{k*}, so the neglected part of the sum
    is bounded by that product.
    """
    acc = np.zeros(powers[0].n + 1)
    k = 0
    while True:
        acc += weight(k) * powers[k].nodes
        if tail(k) * powers.mass_at_horizon(k) < eps:
            return acc, k
        k += 1


def waiting_cdf(params: ModelParams, step: float, horizon: float,
                eps: float = DEFAULT_EPS) -> GriddedDF:
    """Stationary FCFS waiting-time CDF on the grid, from its geometric series."""
    return _waiting(params, step, horizon, eps)[0]


def _waiting(params, step, horizon, eps, powers=None) -> tuple[GriddedDF, int]:
    rho = params.require_stable()
    n = _n_nodes(step, horizon)
    if rho == 0.0:
        return GriddedDF.unit_step(step, n), 0
    powers = powers or _ExcessPowers(params, step, n)
    acc, m = _mixture(powers,
                      lambda k: (1 - rho) * rho**k,
                      lambda k: rho ** (k + 1) / (1 - rho),
                      eps)
    # the k = 0 term is the only atom at the origin
    return GriddedDF(step, 1 - rho, acc[1:]), m


class KernelWorkspace:
    """Grid, W, its convolution powers and the kernels xi_n for one model.

    Caches grow on demand; call :meth:`prepare` with the largest order needed
    before sharing the workspace between threads.
    """

    def __init__(self, params: ModelParams, step: float, horizon: float,
                 eps: float = DEFAULT_EPS):
        self.params = params
        self.step = float(step)
        self.n = _n_nodes(step, horizon)
        self.horizon = self.n * self.step
        self.truncation_tol = eps
        self._powers = _ExcessPowers(params, self.step, self.n) if params.lam > 0 else None
        self._W: GriddedDF | None = None
        self.truncation_terms = 0
        self._wn: dict[int, GriddedDF] = {}
        self._xi: dict[int, GridFunction] = {}
        self._lock = threading.RLock()

    @property
    def rho(self) -> float:
        return self.params.rho

    @property
    def W(self) -> GriddedDF:
        with self._lock:
            if self._W is None:
                self._W, self.truncation_terms = _waiting(
                    self.params, self.step, self.horizon, self.truncation_tol, self._powers)
            return self._W

    @property
    def u_grid(self) -> np.ndarray:
        return self.step * np.arange(self.n + 1)

    def node(self, u: float) -> int:
        """Index of the grid node at ``u``; raises if ``u`` is off-grid or too far."""
        k = round(u / self.step)
        if abs(u - k * self.step) > ALIGN_TOL * max(self.step, abs(u)) or k < 0:
            raise ValueError(f"u={u} is not a grid node (step {self.step})")
        if k > self.n:
            raise HorizonExceeded(f"u={u} beyond workspace horizon {self.horizon}")
        return k

    def prepare(self, max_n: int) -> None:
        for i in range(1, max_n + 1):
            self.xi(i)

    def w_nfold(self, n: int) -> GriddedDF:
        """W^{n*} from the negative-binomial series over powers of F."""
        if int(n) != n or n < 0:
            raise ValueError("n must be a nonnegative integer")
        rho = self.params.require_stable()
        n = int(n)
        with self._lock:
            if n in self._wn:
                return self._wn[n]
            if n == 0:
                out = GriddedDF.unit_step(self.step, self.n)
            elif rho == 0.0:
                out = GriddedDF.unit_step(self.step, self.n)
            elif n == 1:
                out = self.W
            else:
                nb = stats.nbinom(n, 1 - rho)
                acc, _ = _mixture(self._powers, nb.pmf, nb.sf, self.truncation_tol)
                out = GriddedDF(self.step, (1 - rho) ** n, acc[1:])
            self._wn[n] = out
            return out

    def xi(self, n: int) -> GridFunction:
        """Kernel xi_n on the grid (xi_0 = 1 is implicit)."""
        if int(n) != n or n < 1:
            raise ValueError("xi is defined here for n >= 1")
        rho = self.params.require_stable()
        n = int(n)
        with self._lock:
            if n not in self._xi:
                power = GridFunction.from_callable(lambda x: x**n, self.step, self.n)
                conv = stieltjes_convolve(power, self.w_nfold(n - 1))
                scale = (1 - rho) ** -n
                self._xi[n] = GridFunction(self.step, conv.values * scale,
                                           valid_upto=conv.valid_upto)
            return self._xi[n]

    def sojourn_lst(self, r: float, u: float, terms: int = 400) -> float:
        """E[exp(-r V(u))] for the queue without permanent jobs."""
        return sojourn_lst(self, r, u, terms)


def _exp_tail(a: float, m: int) -> float:
    """Bound on sum_{j > m} a^j / j!."""
    if a == 0.0:
        return 0.0
    if a >= m + 2:
        return math.inf
    log_first = (m + 1) * math.log(a) - math.lgamma(m + 2)
    return math.exp(log_first) / (1 - a / (m + 2))


def sojourn_lst(ws: KernelWorkspace, r: float, u: float, terms: int = 400) -> float:
    """Reciprocal of the truncated series sum_n r^n xi_n(u) / n!.

    The terms are dominated by (r u / (1 - rho))^n / n!, which bounds the
    neglected tail.
    """
    if not r >= 0:
        raise ValueError("r must be >= 0")
    if terms < 1:
        raise ValueError("terms must be >= 1")
    rho = ws.params.require_stable()
    k = ws.node(u)
    if r == 0.0:
        return 1.0
    a = r * (k * ws.step) / (1 - rho)
    if a >= terms + 2:
        # the tail bound cannot drop below the total within ``terms`` terms
        raise NotConverged(f"LST series at r={r}, u={u} needs more than {terms} terms")
    total = 1.0
    tail = _exp_tail(a, 0)
    for n in range(1, terms + 1):
        xi_n = ws.xi(n).values[k]
        if xi_n > 0:
            try:
                total += math.exp(n * math.log(r) - math.lgamma(n + 1) + math.log(xi_n))
            except OverflowError:
                raise NotConverged(f"LST series at r={r}, u={u} overflows") from None
        tail = _exp_tail(a, n)
        if tail <= 1e-12 * total:
            break
    if tail > 1e-9 * total:
        raise NotConverged(f"LST series at r={r}, u={u} not certified after {terms} terms")
    return 1.0 / total


def wcirc(ws: KernelWorkspace, x: float, max_terms: int = 1000) -> Wcirc:
    """W(x) / (1 - rho); for rho >= 1 only a partial sum of the series."""
    k = ws.node(x)
    rho = ws.rho
    if rho < 1:
        W = ws.W
        return Wcirc(float(W.nodes[k]) / (1 - rho), True, ws.truncation_terms)
    total = 0.0
    powers = ws._powers
    for m in range(max_terms + 1):
        total += rho**m * float(powers[m].nodes[k])
    return Wcirc(total, False, max_terms)
