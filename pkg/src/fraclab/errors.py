"""Exception taxonomy shared across the package.

Two families: *domain* errors (bad inputs, invalid configs -- the caller's
fault) and *numerical* errors (the computation could not reach the requested
accuracy or a factorization failed -- the data's fault).  The CLI maps the
first family to exit code 1 and the second to exit code 2.
"""

from __future__ import annotations


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


class ConfigError(DomainError):
    """Invalid experiment or CLI configuration."""


class CapabilityError(DomainError):
    """A derivative order (or similar feature) beyond what a kernel provides."""


class IntegrabilityError(DomainError):
    """A requested norm or moment does not exist / is not integrable."""


class NumericalError(RuntimeError):
    """A numerical routine failed (singular matrix, divergent quadrature...)."""


class AccuracyError(NumericalError):
    """Quadrature did not converge within budget.

    Carries the best available estimate and an error bound so callers can
    decide whether the partial answer is still useful.
    """

    def __init__(self, message: str, estimate: float, error_bound: float):
        super().__init__(f"{message} (estimate={estimate!r}, error_bound={error_bound!r})")
        self.estimate = estimate
        self.error_bound = error_bound


class EmbeddingError(NumericalError):
    """Circulant embedding produced genuinely negative eigenvalues.

    The message instructs falling back to the Cholesky simulation method.
    """


class ResourceError(RuntimeError):
    """The request would exceed the configured memory/time budget."""
