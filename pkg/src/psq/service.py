"""Job-size distributions B(x).

Every kind exposes the same small surface: ``cdf``, ``moment``, ``lst``,
``excess_cdf`` and sampling.  Analytic kinds use closed forms; ``Tabulated``
is a piecewise-linear CDF on a uniform grid, so its density is piecewise
constant and all integrals over it are evaluated exactly cell by cell.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .errors import InfiniteMoment

__all__ = [
    "ServiceDistribution",
    "Exponential",
    "Deterministic",
    "Erlang",
    "HyperExponential",
    "ProbeMixture",
    "Tabulated",
    "parse_dist",
]


def _check_x(x: float) -> float:
    x = float(x)
    if not x >= 0.0:
        raise ValueError(f"x must be >= 0, got {x}")
    return x


def _finite(value: float, j: int) -> float:
    if not math.isfinite(value):
        raise InfiniteMoment(f"moment of order {j} is not finite")
    return value


class ServiceDistribution:
    """Common interface of all job-size laws."""

    def cdf(self, x: float) -> float:
        return self._cdf(_check_x(x))

    def moment(self, j: int) -> float:
        if int(j) != j or j < 1:
            raise ValueError(f"moment order must be a positive integer, got {j}")
        try:
            value = self._moment(int(j))
        except OverflowError:
            value = math.inf
        return _finite(value, int(j))

    def lst(self, s: float) -> float:
        s = float(s)
        if not s >= 0.0:
            raise ValueError(f"LST argument must be >= 0, got {s}")
        return self._lst(s)

    def excess_cdf(self, x: float) -> float:
        x = _check_x(x)
        return min(1.0, self._integrated_survival(x) / self.mean)

    @property
    def mean(self) -> float:
        return self.moment(1)

    def sample(self, rng: np.random.Generator) -> float:
        return float(self.sample_many(rng, 1)[0])

    def atoms(self) -> list[tuple[float, float]]:
        """Point masses (location, mass) of the law; all at x > 0."""
        return []

    # kind-specific pieces
    def _cdf(self, x: float) -> float:
        raise NotImplementedError

    def _moment(self, j: int) -> float:
        raise NotImplementedError

    def _lst(self, s: float) -> float:
        raise NotImplementedError

    def _integrated_survival(self, x: float) -> float:
        """Return the integral of 1 - B(y) over [0, x]."""
        raise NotImplementedError

    def sample_many(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def to_spec(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class Exponential(ServiceDistribution):
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("exponential rate must be positive")

    def _cdf(self, x):
        return -math.expm1(-self.rate * x)

    def _moment(self, j):
        return math.factorial(j) / self.rate**j

    def _lst(self, s):
        return self.rate / (self.rate + s)

    def _integrated_survival(self, x):
        return -math.expm1(-self.rate * x) / self.rate

    def excess_cdf(self, x):
        # memoryless: the excess law is the law itself
        return self.cdf(x)

    def sample_many(self, rng, size):
        return rng.exponential(1.0 / self.rate, size)

    def to_spec(self):
        return f"exp:{self.rate!r}"


@dataclass(frozen=True)
class Deterministic(ServiceDistribution):
    size: float

    def __post_init__(self):
        if not self.size > 0:
            raise ValueError("deterministic size must be positive")

    def _cdf(self, x):
        return 1.0 if x >= self.size else 0.0

    def _moment(self, j):
        return self.size**j

    def _lst(self, s):
        return math.exp(-s * self.size)

    def _integrated_survival(self, x):
        return min(x, self.size)

    def sample_many(self, rng, size):
        return np.full(size, self.size)

    def atoms(self):
        return [(self.size, 1.0)]

    def to_spec(self):
        return f"det:{self.size!r}"


@dataclass(frozen=True)
class Erlang(ServiceDistribution):
    shape: int
    rate: float

    def __post_init__(self):
        if int(self.shape) != self.shape or self.shape < 1:
            raise ValueError("Erlang shape must be a positive integer")
        if not self.rate > 0:
            raise ValueError("Erlang rate must be positive")

    def _cdf(self, x):
        return float(special.gammainc(self.shape, self.rate * x))

    def _moment(self, j):
        return math.prod(range(self.shape, self.shape + j)) / self.rate**j

    def _lst(self, s):
        return (self.rate / (self.rate + s)) ** self.shape

    def _integrated_survival(self, x):
        # 1 - B(y) = sum_{i<k} P(Poisson(rate*y) = i); each term integrates
        # to an Erlang(i+1) CDF divided by the rate.
        orders = np.arange(1, self.shape + 1)
        return float(np.sum(special.gammainc(orders, self.rate * x))) / self.rate

    def sample_many(self, rng, size):
        return rng.gamma(self.shape, 1.0 / self.rate, size)

    def to_spec(self):
        return f"erlang:{self.shape}:{self.rate!r}"


@dataclass(frozen=True)
class HyperExponential(ServiceDistribution):
    weights: tuple[float, ...]
    rates: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        if len(self.weights) != len(self.rates) or not self.weights:
            raise ValueError("weights and rates must be non-empty and equally long")
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError("hyperexponential weights must be >= 0 and sum to 1")
        if any(not r > 0 for r in self.rates):
            raise ValueError("hyperexponential rates must be positive")

    def _cdf(self, x):
        return sum(w * -math.expm1(-r * x) for w, r in zip(self.weights, self.rates))

    def _moment(self, j):
        return sum(w * math.factorial(j) / r**j for w, r in zip(self.weights, self.rates))

    def _lst(self, s):
        return sum(w * r / (r + s) for w, r in zip(self.weights, self.rates))

    def _integrated_survival(self, x):
        return sum(w * -math.expm1(-r * x) / r for w, r in zip(self.weights, self.rates))

    def sample_many(self, rng, size):
        phase = rng.choice(len(self.weights), size=size, p=self.weights)
        return rng.exponential(1.0, size) / np.asarray(self.rates)[phase]

    def to_spec(self):
        parts = [f"{w!r}:{r!r}" for w, r in zip(self.weights, self.rates)]
        return "hyperexp:" + ":".join(parts)


@dataclass(frozen=True)
class ProbeMixture(ServiceDistribution):
    """``base`` with probability ``1 - probe_prob``, else exactly ``probe_size``.

    The atom lets a simulator observe jobs of one exact size while the
    analytic side is evaluated for the very same law.
    """

    base: ServiceDistribution
    probe_size: float
    probe_prob: float

    def __post_init__(self):
        if not self.probe_size > 0:
            raise ValueError("probe_size must be positive (B(0) = 0)")
        if not 0.0 <= self.probe_prob <= 1.0:
            raise ValueError("probe_prob must lie in [0, 1]")

    def _cdf(self, x):
        step = 1.0 if x >= self.probe_size else 0.0
        return (1 - self.probe_prob) * self.base._cdf(x) + self.probe_prob * step

    def _moment(self, j):
        return (1 - self.probe_prob) * self.base._moment(j) + self.probe_prob * self.probe_size**j

    def _lst(self, s):
        return (1 - self.probe_prob) * self.base._lst(s) + self.probe_prob * math.exp(-s * self.probe_size)

    def _integrated_survival(self, x):
        return ((1 - self.probe_prob) * self.base._integrated_survival(x)
                + self.probe_prob * min(x, self.probe_size))

    def sample_many(self, rng, size):
        out = self.base.sample_many(rng, size)
        out[rng.random(size) < self.probe_prob] = self.probe_size
        return out

    def atoms(self):
        scaled = [(x, (1 - self.probe_prob) * m) for x, m in self.base.atoms()]
        return scaled + [(self.probe_size, self.probe_prob)]

    def to_spec(self):
        return f"mix:{self.base.to_spec()}:{self.probe_size!r}:{self.probe_prob!r}"


@dataclass(frozen=True, eq=False)
class Tabulated(ServiceDistribution):
    """CDF tabulated at 0, h, 2h, ... and linearly interpolated in between.

    ``B(x) = 1`` beyond the last node.
    """

    grid_step: float
    cdf_values: np.ndarray
    source: str | None = field(default=None, compare=False)

    def __post_init__(self):
        values = np.asarray(self.cdf_values, dtype=float)
        if not self.grid_step > 0:
            raise ValueError("grid_step must be positive")
        if values.ndim != 1 or values.size < 2:
            raise ValueError("need at least two tabulated CDF values")
        if values[0] != 0.0:
            raise ValueError("tabulated CDF must start at B(0) = 0")
        if np.any(np.diff(values) < 0):
            raise ValueError("tabulated CDF must be nondecreasing")
        if abs(values[-1] - 1.0) > 1e-9:
            raise ValueError("tabulated CDF must end at 1")
        values = values.copy()
        values[-1] = 1.0
        values.setflags(write=False)
        object.__setattr__(self, "cdf_values", values)

    @property
    def _nodes(self) -> np.ndarray:
        return self.grid_step * np.arange(self.cdf_values.size)

    @property
    def _cell_mass(self) -> np.ndarray:
        return np.diff(self.cdf_values)

    def _cdf(self, x):
        return float(np.interp(x, self._nodes, self.cdf_values, right=1.0))

    def _moment(self, j):
        a = self._nodes[:-1]
        b = self._nodes[1:]
        per_cell = (b ** (j + 1) - a ** (j + 1)) / ((j + 1) * self.grid_step)
        return float(np.sum(self._cell_mass * per_cell))

    def _lst(self, s):
        if s == 0.0:
            return 1.0
        a = self._nodes[:-1]
        h = self.grid_step
        # uniform density on each cell
        per_cell = np.exp(-s * a) * -np.expm1(-s * h) / (s * h)
        return float(np.sum(self._cell_mass * per_cell))

    def _integrated_survival(self, x):
        nodes = self._nodes
        surv = 1.0 - self.cdf_values
        # piecewise-linear survival: trapezoid is exact
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (surv[1:] + surv[:-1]) * self.grid_step)])
        if x >= nodes[-1]:
            return float(cum[-1])
        k = int(x // self.grid_step)
        frac = x - nodes[k]
        s_x = 1.0 - self._cdf(x)
        return float(cum[k] + 0.5 * (surv[k] + s_x) * frac)

    def sample_many(self, rng, size):
        u = rng.random(size)
        u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
        idx = np.searchsorted(self.cdf_values, u, side="left")
        lo = self.cdf_values[idx - 1]
        hi = self.cdf_values[idx]
        return (idx - 1 + (u - lo) / (hi - lo)) * self.grid_step

    def to_spec(self):
        return f"table:{self.source}" if self.source else "table:<inline>"

    @classmethod
    def from_csv(cls, path: str | Path) -> "Tabulated":
        """Load a two-column ``x,B(x)`` CSV on a uniform grid starting at 0."""
        data = np.loadtxt(path, delimiter=",", ndmin=2,
                          skiprows=_header_rows(path))
        if data.shape[1] != 2:
            raise ValueError(f"{path}: expected two columns x,B(x)")
        x, b = data[:, 0], data[:, 1]
        if x[0] != 0.0:
            raise ValueError(f"{path}: first abscissa must be 0")
        steps = np.diff(x)
        h = float(steps[0])
        if np.any(np.abs(steps - h) > 1e-9 * max(h, 1.0)):
            raise ValueError(f"{path}: abscissae must be uniformly spaced")
        return cls(h, b, source=str(path))


def _header_rows(path) -> int:
    with open(path) as fh:
        first = fh.readline()
    try:
        [float(v) for v in first.split(",")]
    except ValueError:
        return 1
    return 0


def parse_dist(text: str) -> ServiceDistribution:
    """Build a distribution from a CLI spec string such as ``erlang:2:2``."""
    kind, _, rest = text.partition(":")
    fields = rest.split(":") if rest else []
    try:
        if kind == "exp" and len(fields) == 1:
            return Exponential(float(fields[0]))
        if kind == "det" and len(fields) == 1:
            return Deterministic(float(fields[0]))
        if kind == "erlang" and len(fields) == 2:
            return Erlang(int(fields[0]), float(fields[1]))
        if kind == "hyperexp" and fields and len(fields) % 2 == 0:
            vals = [float(v) for v in fields]
            return HyperExponential(tuple(vals[0::2]), tuple(vals[1::2]))
        if kind == "mix" and len(fields) >= 3:
            base = parse_dist(":".join(fields[:-2]))
            return ProbeMixture(base, float(fields[-2]), float(fields[-1]))
        if kind == "table" and rest:
            return Tabulated.from_csv(rest)
    except (TypeError, ValueError, OSError) as exc:
        raise ValueError(f"bad distribution spec {text!r}: {exc}") from exc
    raise ValueError(f"bad distribution spec {text!r}")


def hyperexp_balanced(mean: float, scv: float) -> HyperExponential:
    """Two-phase hyperexponential with balanced means, given mean and SCV > 1."""
    if scv <= 1:
        raise ValueError("balanced-means H2 needs squared coefficient of variation > 1")
    p = 0.5 * (1 + math.sqrt((scv - 1) / (scv + 1)))
    return HyperExponential((p, 1 - p), (2 * p / mean, 2 * (1 - p) / mean))

