"""Exception types raised by the analytic and simulation engines."""


class PSQError(Exception):
    """Base class for all engine errors."""

    code = "error"


class UnstableLoad(PSQError):
    code = "unstable_load"


class InfiniteMoment(PSQError):
    code = "infinite_moment"


class AtomOffGrid(PSQError):
    code = "atom_off_grid"


class StepMismatch(PSQError):
    code = "step_mismatch"


class HorizonExceeded(PSQError):
    code = "horizon_exceeded"


class NotConverged(PSQError):
    code = "not_converged"


class InvalidConfig(PSQError):
    code = "invalid_config"
