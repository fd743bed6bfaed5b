"""Sojourn-time moments and queue-length laws for the M/G/1 processor-sharing
queue with permanent jobs, with a discrete-event simulator for cross-checks."""

__version__ = "0.1.0"

from .errors import (AtomOffGrid, HorizonExceeded, InfiniteMoment, InvalidConfig,
                     NotConverged, PSQError, StepMismatch, UnstableLoad)
from .grid import GriddedDF, GridFunction, from_distribution, self_convolve, stieltjes_convolve
from .kernel import KernelWorkspace, sojourn_lst, waiting_cdf, wcirc
from .mg1 import BusyPeriodSolver, qlen_mean, qlen_pmf
from .model import ModelParams
from .moments import (MomentTable, conditional_mean, conditional_variance, k_moments,
                      moments_upto, small_u_var_asymptote, sojourn_moments)
from .service import (Deterministic, Erlang, Exponential, HyperExponential, ProbeMixture,
                      ServiceDistribution, Tabulated, parse_dist)
from .sim import SimConfig, SimResult, estimate_lst, run
