"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of a function."""


class DegenerateSampleError(ValueError):
    """The sample cannot support estimation (constant coordinate, |rho| = 1, ...)."""


class ConditioningError(ArithmeticError):
    """A matrix that must be inverted is singular or numerically close to it."""


class ConstraintError(ValueError):
    """A hypothesis constraint is malformed or rank deficient."""
