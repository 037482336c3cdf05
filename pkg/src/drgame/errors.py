"""Exception types raised across the package."""


class DemandGameError(Exception):
    """Base class for all package errors."""


class ValidationError(DemandGameError):
    """Input data violates a documented invariant."""


class InfeasibleBudgetError(DemandGameError):
    """The budget lies outside [sum(lower), sum(upper)]."""


class DegenerateObjectiveError(DemandGameError):
    """The block objective is constant (alpha=1 with zero preference weight)."""


class DegenerateEquilibriumError(DemandGameError):
    """Per-user equilibrium is not unique; only the aggregate is determined."""


class SolverStallError(DemandGameError):
    """Multiplier bisection failed to meet the budget tolerance (internal bug)."""


class NonConvexTariffError(DemandGameError):
    """Fitted tariff curve has a nonpositive quadratic coefficient."""


class CalibrationError(DemandGameError):
    """Preference-weight calibration is undefined (zero discomfort at optimum)."""
