"""Exceptions raised by the samplers and the harness.

Every error carries the process exit code the CLI uses when it surfaces.
"""


class CrepeError(Exception):
    """Base class for all sampler errors."""

    exit_code = 1


class ConfigError(CrepeError):
    """A configuration, schedule or task definition is invalid."""

    exit_code = 2


class InvalidScheduleError(ConfigError):
    """A time grid or rate schedule violates its preconditions."""


class EnumerationGuardError(ConfigError):
    """A discrete state space is too large to enumerate exactly."""


class UnsupportedReferenceError(ConfigError):
    """The reference process requires an affine forward drift."""


class UnknownSuiteError(ConfigError):
    """The requested verification suite does not exist."""

    def __init__(self, name: str, suites: list[str]):
        super().__init__(f"Unknown suite '{name}'. Available: {', '.join(suites)}")
        self.name = name
        self.suites = suites


class NumericalError(CrepeError):
    """A numerical degeneracy prevents the computation from continuing."""

    exit_code = 3


class NonFiniteStateError(NumericalError):
    """A state contains ``nan`` or ``inf`` values."""

    def __init__(self, message: str, level: int | None = None, iteration: int | None = None):
        context = []

        if level is not None:
            context.append(f"level={level}")

        if iteration is not None:
            context.append(f"iteration={iteration}")

        super().__init__(f"{message} ({', '.join(context)})" if context else message)

        self.level = level
        """The PT level the state belongs to, if known."""

        self.iteration = iteration
        """The engine iteration the state was produced in, if known."""


class DegenerateKernelError(NumericalError):
    """A Gaussian transition kernel has zero diffusion coefficient."""


class DegenerateParticlesError(NumericalError):
    """Every particle has zero weight."""


class PersistenceError(CrepeError):
    """An output or checkpoint file could not be written or read."""

    exit_code = 4


class CheckpointError(PersistenceError):
    """A checkpoint is corrupt, has the wrong version or belongs to another config."""
