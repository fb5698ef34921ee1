"""Exception types shared across the package."""


class GreyboxError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(GreyboxError):
    """Two matrices that must be conformable are not."""

    def __init__(self, name_a, shape_a, name_b, shape_b, detail=""):
        msg = f"{name_a} has shape {tuple(shape_a)} but {name_b} has shape {tuple(shape_b)}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.name_a, self.shape_a = name_a, tuple(shape_a)
        self.name_b, self.shape_b = name_b, tuple(shape_b)


class SolverFailure(GreyboxError):
    """A semidefinite solve ended without a usable solution."""


class SolverUnavailable(SolverFailure):
    """The requested solver backend cannot be imported."""


class SimulationError(GreyboxError):
    """Integration aborted (blow-up, step-size guard, bad signals)."""


class ConfigError(GreyboxError):
    """Bad scenario configuration or missing input file."""
