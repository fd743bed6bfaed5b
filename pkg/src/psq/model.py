"""Model parameters shared by the analytic engines and the simulator."""
from __future__ import annotations

from dataclasses import dataclass

from .errors import UnstableLoad
from .service import ServiceDistribution


@dataclass(frozen=True)
class ModelParams:
    """Poisson arrival rate, job-size law and number of permanent jobs."""

    lam: float
    service: ServiceDistribution
    K: int = 0

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError(f"arrival rate must be >= 0, got {self.lam}")
        if int(self.K) != self.K or self.K < 0:
            raise ValueError(f"K must be a nonnegative integer, got {self.K}")

    @property
    def rho(self) -> float:
        return self.lam * self.service.mean

    def require_stable(self) -> float:
        rho = self.rho
        if not rho < 1:
            raise UnstableLoad(f"unstable: rho={rho:g} >= 1")
        return rho

    def with_K(self, K: int) -> "ModelParams":
        return ModelParams(self.lam, self.service, K)
