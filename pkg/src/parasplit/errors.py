"""Exception types shared by the solver modules."""


class ParasplitError(Exception):
    """Base class for library errors."""


class SingularPivotError(ParasplitError, ArithmeticError):
    """Elimination met a (numerically) zero pivot."""


class EllipticityError(ParasplitError, ValueError):
    """The diffusion tensor is not positive definite at a sampled point."""


class UnsupportedMeshError(ParasplitError, ValueError):
    pass


class SplittingNotApplicableError(ParasplitError, ValueError):
    """Dimensional splitting was requested for a tensor with mixed terms."""


class DivergenceError(ParasplitError, FloatingPointError):
    """A parareal iterate became non-finite."""


class ConfigError(ParasplitError, ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
