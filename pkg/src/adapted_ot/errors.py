"""Exception types shared across the package."""


class AdaptedOTError(Exception):
    pass


class HorizonMismatchError(AdaptedOTError, ValueError):
    pass


class DimensionMismatchError(AdaptedOTError, ValueError):
    pass


class SupportError(AdaptedOTError, KeyError):
    """A prefix or state is not in the support of a process."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class SolverError(AdaptedOTError, RuntimeError):
    pass


class InfeasibleError(SolverError):
    pass


class InstanceTooLargeError(AdaptedOTError, ValueError):
    pass


class CausalityError(AdaptedOTError, ValueError):
    """A coupling fails the causality certificate it is required to pass."""
