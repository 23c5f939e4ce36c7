"""Exception types shared across the package."""


class ChebdeaError(Exception):
    """Base class for all package errors."""


class LpInputError(ChebdeaError, ValueError):
    """Malformed linear program (ragged rows, non-finite entries, bad labels).

    Distinct from an infeasible problem: infeasibility is a valid solve
    outcome, a malformed problem is a caller bug.
    """


class SimplexError(ChebdeaError, RuntimeError):
    """Internal solver failure (iteration limit, lost feasibility)."""


class DomainError(ChebdeaError, ValueError):
    """An argument violates a documented mathematical precondition."""


class CollinearityError(DomainError):
    """Design matrix is rank deficient; names the offending columns."""

    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(
            "design matrix is rank deficient; collinear columns: "
            + ", ".join(self.columns)
        )


class SchemaError(ChebdeaError, ValueError):
    """Input file does not match the documented CSV schema."""
