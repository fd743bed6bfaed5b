"""Busy-period transform and stationary number of ordinary jobs."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import NotConverged
from .model import ModelParams


class BusyResult(NamedTuple):
    value: float
    iterations: int
    residual: float


@dataclass(frozen=True)
class BusyPeriodSolver:
    """Minimal root of pi = beta(r + lam - lam * pi) by monotone iteration from 0."""

    params: ModelParams
    tol: float = 1e-12
    max_iters: int = 10**6

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")

    def solve(self, r: float) -> BusyResult:
        if not r >= 0:
            raise ValueError("r must be >= 0")
        lam = self.params.lam
        beta = self.params.service.lst
        pi = 0.0
        for it in range(1, self.max_iters + 1):
            nxt = beta(r + lam - lam * pi)
            if nxt < pi - 1e-15:
                raise RuntimeError(f"busy-period iterates decreased at step {it}")
            if abs(nxt - pi) < self.tol:
                residual = abs(nxt - beta(r + lam - lam * nxt))
                return BusyResult(nxt, it, residual)
            pi = nxt
        raise NotConverged(f"busy-period LST at r={r} not converged in {self.max_iters} iterations")

    def busy_lst(self, r: float) -> float:
        return self.solve(r).value

    def busy_mean(self) -> float:
        rho = self.params.require_stable()
        return self.params.service.mean / (1 - rho)


def qlen_pmf(params: ModelParams, n: int) -> float:
    """P(n ordinary jobs) = (1 - rho)^{K+1} C(n + K, K) rho^n."""
    rho = params.require_stable()
    if int(n) != n or n < 0:
        raise ValueError("n must be a nonnegative integer")
    n, K = int(n), params.K
    if rho == 0.0:
        return 1.0 if n == 0 else 0.0
    if n <= 500:
        return (1 - rho) ** (K + 1) * math.comb(n + K, K) * rho**n
    log_p = ((K + 1) * math.log1p(-rho) + math.lgamma(n + K + 1)
             - math.lgamma(K + 1) - math.lgamma(n + 1) + n * math.log(rho))
    return math.exp(log_p)


def qlen_pmf_array(params: ModelParams, max_n: int) -> np.ndarray:
    return np.array([qlen_pmf(params, n) for n in range(max_n + 1)])


def qlen_mean(params: ModelParams) -> float:
    rho = params.require_stable()
    return (params.K + 1) * rho / (1 - rho)
