"""Exception hierarchy shared by the designers, the solver adapter and the CLI."""


class DfrcError(Exception):
    """Base class for all package errors."""


class ContractError(DfrcError, ValueError):
    """An input violates a documented precondition (shape, range, symmetry)."""


class ChannelGenerationError(DfrcError):
    """Channel draws stayed rank deficient after the retry budget."""


class SolverError(DfrcError):
    """The conic engine failed or stopped without a usable answer."""


class InfeasibleDesign(DfrcError):
    """The beamforming program has no feasible point for the given thresholds."""

    def __init__(self, message, *, designer=None, solver_status=None):
        super().__init__(message)
        self.designer = designer
        self.solver_status = solver_status


class ReconstructionError(DfrcError):
    """Rank-one recovery hit a degenerate user (zero received power)."""


class NotPsd(DfrcError):
    """A matrix expected to be positive semidefinite has a clearly negative eigenvalue."""


class DegenerateRho(DfrcError):
    """A zero-forcing solution delivers (numerically) no power to some user."""


class SweepError(DfrcError):
    """Every Monte-Carlo trial of a sweep was infeasible."""


class ConfigError(DfrcError, ValueError):
    """A configuration or scenario file could not be parsed."""
