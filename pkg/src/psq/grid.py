"""Distribution functions on a uniform lattice and their Stieltjes convolution.

A ``GriddedDF`` stores CDF values at the nodes h, 2h, ..., Nh together with
an explicit atom at the origin.  Convolutions treat that atom exactly; the
remaining mass of each cell (x_{i-1}, x_i] is weighted by the integrand at
the cell midpoint.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import AtomOffGrid, StepMismatch
from .service import ServiceDistribution

ALIGN_TOL = 1e-9


def _n_nodes(step: float, horizon: float) -> int:
    if not step > 0:
        raise ValueError("step must be positive")
    if horizon < step * (1 - ALIGN_TOL):
        raise ValueError("horizon must be at least one step")
    return int(math.floor(horizon / step + ALIGN_TOL))


def _same_step(a: float, b: float) -> None:
    if abs(a - b) > ALIGN_TOL * max(a, b):
        raise StepMismatch(f"grid steps differ: {a} vs {b}")


@dataclass(frozen=True, eq=False)
class GriddedDF:
    step: float
    atom0: float
    values: np.ndarray
    valid_upto: int | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.valid_upto is None:
            object.__setattr__(self, "valid_upto", values.size)
        if not -1e-12 <= self.atom0 <= 1 + 1e-12:
            raise ValueError(f"atom0 must lie in [0, 1], got {self.atom0}")

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def horizon(self) -> float:
        return self.n * self.step

    @property
    def nodes(self) -> np.ndarray:
        """CDF at nodes 0, h, ..., Nh (node 0 carries the atom)."""
        return np.concatenate([[self.atom0], self.values])

    @property
    def increments(self) -> np.ndarray:
        """Mass of the cells (0, h], (h, 2h], ..., excluding the atom at 0."""
        return np.diff(self.nodes)

    def at(self, x: float) -> float:
        """CDF at ``x`` by linear interpolation between nodes."""
        if x < 0:
            return 0.0
        return float(np.interp(x / self.step, np.arange(self.n + 1), self.nodes))

    def check(self, tol: float = 1e-9) -> None:
        nodes = self.nodes
        if np.any(np.diff(nodes) < -tol):
            raise ValueError("CDF values must be nondecreasing")
        if nodes[-1] > 1 + tol:
            raise ValueError("CDF exceeds 1")

    def as_function(self) -> "GridFunction":
        return GridFunction(self.step, self.nodes, valid_upto=self.valid_upto)

    def to_csv(self, fh=None) -> str:
        return _to_csv(self.step, self.nodes, fh)

    @classmethod
    def unit_step(cls, step: float, n: int) -> "GriddedDF":
        return cls(step, 1.0, np.ones(n))

    @classmethod
    def from_function(cls, fn: Callable[[float], float], step: float, n: int) -> "GriddedDF":
        values = np.array([fn(k * step) for k in range(n + 1)])
        return cls(step, float(values[0]), values[1:])


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real function sampled at 0, h, ..., Nh.

    ``midpoints`` (length N) optionally holds exact values at (j + 1/2)h;
    without them the convolution uses the average of neighbouring nodes.
    """

    step: float
    values: np.ndarray
    midpoints: np.ndarray | None = None
    valid_upto: int | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if self.midpoints is not None:
            mid = np.asarray(self.midpoints, dtype=float)
            if mid.size != values.size - 1:
                raise ValueError("need one midpoint value per cell")
            object.__setattr__(self, "midpoints", mid)
        if self.valid_upto is None:
            object.__setattr__(self, "valid_upto", values.size - 1)

    @property
    def n(self) -> int:
        return self.values.size - 1

    def cell_values(self) -> np.ndarray:
        if self.midpoints is not None:
            return self.midpoints
        return 0.5 * (self.values[1:] + self.values[:-1])

    def at(self, x: float) -> float:
        return float(np.interp(x / self.step, np.arange(self.n + 1), self.values))

    def to_csv(self, fh=None) -> str:
        return _to_csv(self.step, self.values, fh)

    @classmethod
    def from_callable(cls, fn: Callable[[np.ndarray], np.ndarray], step: float, n: int) -> "GridFunction":
        nodes = step * np.arange(n + 1)
        mids = step * (np.arange(n) + 0.5)
        return cls(step, fn(nodes), fn(mids))


def _to_csv(step: float, values: np.ndarray, fh=None) -> str:
    buf = io.StringIO()
    buf.write("x,value\n")
    for k, v in enumerate(values):
        buf.write(f"{k * step!r},{float(v)!r}\n")
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def from_distribution(d: ServiceDistribution, step: float, horizon: float) -> GriddedDF:
    """Sample the CDF of a job-size law on the grid; interior atoms must sit on nodes."""
    n = _n_nodes(step, horizon)
    xs = step * np.arange(n + 1)
    for loc, _mass in d.atoms():
        m = round(loc / step)
        if abs(loc - m * step) > ALIGN_TOL * step:
            raise AtomOffGrid(
                f"point mass at {loc} is not a multiple of grid step {step}; "
                f"choose a step that divides {loc}")
        if m <= n:
            xs[m] = loc
    values = np.array([d.cdf(x) for x in xs])
    return GriddedDF(step, float(values[0]), values[1:])


def _convolve_arrays(f: GridFunction, atom0: float, inc: np.ndarray, n: int) -> np.ndarray:
    out = np.empty(n + 1)
    out[0] = f.values[0] * atom0
    if n:
        # sum_{i=1..k} f((k - i + 1/2) h) * dG_i
        tail = np.convolve(f.cell_values()[:n], inc[:n])[:n]
        out[1:] = f.values[1:n + 1] * atom0 + tail
    return out


def stieltjes_convolve(f: GridFunction, g: GriddedDF) -> GridFunction:
    """Return u -> integral over [0, u] of f(u - x) dg(x) at every node."""
    _same_step(f.step, g.step)
    n = min(f.n, g.n)
    out = _convolve_arrays(f, g.atom0, g.increments, n)
    return GridFunction(f.step, out, valid_upto=min(f.valid_upto, g.valid_upto, n))


def convolve_df(a: GriddedDF, b: GriddedDF) -> GriddedDF:
    """Convolution of two lattice distribution functions (law of the sum)."""
    _same_step(a.step, b.step)
    n = min(a.n, b.n)
    out = _convolve_arrays(a.as_function(), b.atom0, b.increments, n)
    return GriddedDF(a.step, float(out[0]), out[1:],
                     valid_upto=min(a.valid_upto, b.valid_upto, n))


def self_convolve(g: GriddedDF, n: int) -> GriddedDF:
    """n-fold convolution of ``g`` with itself, built left to right."""
    if int(n) != n or n < 0:
        raise ValueError("n must be a nonnegative integer")
    if n == 0:
        return GriddedDF.unit_step(g.step, g.n)
    out = g
    for _ in range(int(n) - 1):
        out = convolve_df(out, g)
    return out
