"""Conditional sojourn-time moments E[V_K(u)^n].

The base table (no permanent jobs) comes from the alternating recursion

    v_n(u) = sum_{i=1..n} C(n, i) v_{n-i}(u) xi_i(u) (-1)^{i+1},

and K permanent jobs turn V(u) into a sum of K + 1 independent copies, so
the K-table follows from binomial convolution of moment sequences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .errors import HorizonExceeded
from .kernel import KernelWorkspace
from .model import ModelParams

MAX_ORDER = 30


@dataclass(frozen=True, eq=False)
class MomentTable:
    """Raw moments ``values[n - 1, j] = E[V_K(u_j)^n]`` for n = 1..order."""

    u_grid: np.ndarray
    order: int
    values: np.ndarray
    K: int = 0

    def raw(self, n: int) -> np.ndarray:
        if n == 0:
            return np.ones_like(self.u_grid)
        return self.values[n - 1]

    def at(self, n: int, u: float) -> float:
        """Moment of order ``n`` at ``u``; linear interpolation between nodes."""
        if u > self.u_grid[-1] * (1 + 1e-12):
            raise HorizonExceeded(f"u={u} beyond table range {self.u_grid[-1]}")
        return float(np.interp(u, self.u_grid, self.raw(n)))

    @property
    def mean(self) -> np.ndarray:
        return self.raw(1)

    @property
    def variance(self) -> np.ndarray:
        return self.raw(2) - self.raw(1) ** 2

    def central(self, n: int) -> np.ndarray:
        """Central moment of order ``n`` from the raw ones."""
        m1 = self.raw(1)
        return sum(math.comb(n, i) * self.raw(i) * (-m1) ** (n - i) for i in range(n + 1))


def conditional_mean(params: ModelParams, u: float) -> float:
    rho = params.require_stable()
    return (params.K + 1) * u / (1 - rho)


def conditional_variance(params: ModelParams, u: float, ws: KernelWorkspace) -> float:
    """(K + 1) * 2 / (1 - rho)^2 * integral_0^u (u - x)(1 - W(x)) dx, by trapezoid."""
    rho = params.require_stable()
    if u < 0:
        raise ValueError("u must be >= 0")
    if u > ws.horizon * (1 + 1e-12):
        raise HorizonExceeded(f"u={u} beyond workspace horizon {ws.horizon}")
    if rho == 0.0:
        return 0.0
    W = ws.W
    k = min(int(math.floor(u / ws.step + 1e-9)), ws.n)
    x = ws.step * np.arange(k + 1)
    surv = 1.0 - W.nodes[: k + 1]
    if u > x[-1]:
        x = np.append(x, u)
        surv = np.append(surv, 1.0 - W.at(u))
    x[-1] = u
    integral = trapezoid((u - x) * surv, x)
    return (params.K + 1) * 2.0 / (1 - rho) ** 2 * float(integral)


def moments_upto(params: ModelParams, order: int, ws: KernelWorkspace) -> MomentTable:
    """Base moment table (K = 0) over the workspace grid."""
    if params.K != 0:
        raise ValueError("moments_upto builds the K = 0 table; extend it with k_moments")
    params.require_stable()
    if int(order) != order or not 1 <= order <= MAX_ORDER:
        raise ValueError(f"order must be an integer in 1..{MAX_ORDER}")
    order = int(order)
    ws.prepare(order)
    xi = [None] + [ws.xi(i).values for i in range(1, order + 1)]
    v = [np.ones(ws.n + 1)]
    for n in range(1, order + 1):
        acc = np.zeros(ws.n + 1)
        for i in range(1, n + 1):
            sign = 1 if i % 2 else -1
            acc += (sign * math.comb(n, i)) * v[n - i] * xi[i]
        v.append(acc)
    return MomentTable(ws.u_grid, order, np.array(v[1:]), K=0)


def k_moments(base: MomentTable, K: int) -> MomentTable:
    """Moments of the sum of K + 1 independent copies of the base sojourn time."""
    if base.K != 0:
        raise ValueError("k_moments expects the K = 0 table")
    if int(K) != K or K < 0:
        raise ValueError("K must be a nonnegative integer")
    if K == 0:
        return base
    N = base.order
    one = [base.raw(n) for n in range(N + 1)]
    cur = one
    for _ in range(int(K)):
        cur = [sum(math.comb(n, i) * cur[n - i] * one[i] for i in range(n + 1))
               for n in range(N + 1)]
    return MomentTable(base.u_grid, N, np.array(cur[1:]), K=int(K))


def sojourn_moments(params: ModelParams, order: int, ws: KernelWorkspace) -> MomentTable:
    """Moment table for ``params.K`` permanent jobs."""
    base = moments_upto(params.with_K(0), order, ws)
    return k_moments(base, params.K)


def small_u_var_asymptote(params: ModelParams, u: float) -> float:
    rho = params.require_stable()
    return (params.K + 1) * u * u * rho / (1 - rho) ** 2
