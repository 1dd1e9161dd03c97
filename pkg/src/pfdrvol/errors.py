"""Exception types shared across the package."""


class PfdrVolError(Exception):
    """Base class for errors raised by this package."""


class DomainError(PfdrVolError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class QAlphaError(DomainError):
    """Asymptotic formula requested with Q_alpha <= 1.

    The large-deviation expansions square ``ln Q_alpha`` and divide by it, so
    they are meaningless unless the posterior-odds threshold exceeds one.
    Exact computations remain available.
    """


class ConvergenceError(PfdrVolError, ArithmeticError):
    """An iterative special-function evaluation hit its iteration cap."""


class BudgetExceededError(PfdrVolError):
    """A simulation request exceeds the configured draw budget."""


class EstimationError(PfdrVolError):
    """A Monte Carlo estimator is undefined for the realised sample."""


class RegimeWarning(UserWarning):
    """Parameters fall outside the regime where an asymptotic formula is proven."""
