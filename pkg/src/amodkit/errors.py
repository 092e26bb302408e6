"""Shared exception types."""


class ScenarioError(ValueError):
    """A scenario file or city definition violates the schema or an invariant."""


class InvariantViolation(RuntimeError):
    """A runtime invariant of the simulator or a solver was broken."""
