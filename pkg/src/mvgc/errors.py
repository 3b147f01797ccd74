"""Exception types shared across the package."""


class MvgcError(RuntimeError):
    """Base class for all library errors."""


class ContractViolation(MvgcError):
    """A documented operation precondition was violated (debug checks only)."""


class CapacityError(MvgcError):
    """Registration attempted beyond the configured number of processes."""


class InvariantViolation(MvgcError):
    """Internal structural invariant broken; indicates a bug, not misuse."""


class SchedulingError(MvgcError):
    """A schedule referenced a process that does not exist."""
