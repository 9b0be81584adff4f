"""Shared exception types."""


class CausalOpsError(Exception):
    """Base class for all package errors."""


class ParseError(CausalOpsError):
    """Malformed input file.  Carries the offending path/key when known."""


class ValidationError(CausalOpsError):
    """Input parsed but violates an invariant.

    ``violations`` lists every violation found, not just the first.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ConfigError(CausalOpsError):
    """Invalid configuration value (scenario, fault magnitude, ...)."""


class QueryError(CausalOpsError):
    """Answer backend failed after bounded retries."""

    def __init__(self, message, pair_id=None):
        self.pair_id = pair_id
        super().__init__(message)


class AssemblyError(CausalOpsError):
    """Contradictory verdicts for the same instance pair."""


class ConflictError(CausalOpsError):
    """A verdict referenced a stale refinement candidate."""
