"""Exception hierarchy.

Everything raised on purpose by the library derives from :class:`PathPolicyError`
so callers (the CLI, the bootstrap) can tell library failures from bugs.
"""


class PathPolicyError(Exception):
    pass


# --- spec / intervention problems -------------------------------------------

class SpecError(PathPolicyError):
    """Invalid structural model. ``violations`` lists every problem found."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


class PositivityViolation(SpecError):
    pass


class MalformedCpt(SpecError):
    pass


class BadShape(SpecError):
    pass


class InterventionMismatch(PathPolicyError):
    pass


class CardinalityOverflow(PathPolicyError):
    pass


# --- numerical failures ------------------------------------------------------

class NumericalError(PathPolicyError):
    pass


class Separation(NumericalError):
    pass


class Singular(NumericalError):
    pass


class MaxIterations(NumericalError):
    pass


class ShapeMismatch(PathPolicyError):
    pass


class PositivityFailure(NumericalError):
    pass


class NoRoot(NumericalError):
    pass


class EmptyClass(PathPolicyError):
    pass


class ReplicateFailure(NumericalError):
    pass


class ConfigError(PathPolicyError):
    pass
