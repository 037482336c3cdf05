"""Exact minimization of diagonal convex quadratics over the budgeted box
{sum x = E, lower <= x <= upper} — the kernel behind every best response —
plus centralized block-coordinate descent for the social and system optima.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (
    DegenerateObjectiveError,
    InfeasibleBudgetError,
    SolverStallError,
    ValidationError,
)
from .model import GameInstance, LoadMatrix, Mechanism, _as_vector

DEFAULT_BUDGET_TOL = 1e-9
DEFAULT_DESCENT_RTOL = 1e-10
DEFAULT_MAX_CYCLES = 100_000

#: relative slack accepted when the budget grazes the bound sums (data floats)
_FEASIBILITY_RTOL = 1e-9


@dataclass(frozen=True)
class DiagonalQP:
    """min sum_h quad_h*x_h^2 + lin_h*x_h  s.t.  sum x = budget, lower<=x<=upper."""

    quad: np.ndarray
    lin: np.ndarray
    budget: float
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        q = _as_vector(self.quad, "quad")
        h = q.shape[0]
        p = _as_vector(self.lin, "lin", h)
        lo = _as_vector(self.lower, "lower", h)
        hi = _as_vector(self.upper, "upper", h)
        object.__setattr__(self, "quad", q)
        object.__setattr__(self, "lin", p)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "budget", float(self.budget))
        if np.any(q <= 0):
            raise DegenerateObjectiveError(
                "all quadratic coefficients must be > 0 (objective otherwise "
                "flat along some coordinate)"
            )
        if np.any(hi < lo):
            raise ValidationError("upper bounds must dominate lower bounds")
        slack = _FEASIBILITY_RTOL * max(1.0, abs(self.budget))
        if self.budget < lo.sum() - slack or self.budget > hi.sum() + slack:
            raise InfeasibleBudgetError(
                f"budget {self.budget!r} outside "
                f"[sum(lower)={lo.sum()!r}, sum(upper)={hi.sum()!r}]"
            )

    @property
    def effective_budget(self) -> float:
        """Budget clamped into [sum(lower), sum(upper)] (removes float dust)."""
        return float(min(max(self.budget, self.lower.sum()), self.upper.sum()))


def solve_diagonal_qp(qp: DiagonalQP, tol: float = DEFAULT_BUDGET_TOL) -> np.ndarray:
    """Global minimizer of the diagonal QP; the budget is met within `tol`."""
    if tol <= 0:
        raise ValidationError(f"tol must be > 0, got {tol!r}")
    x, _lam, status = _kernels.qp_solve(
        qp.quad, qp.lin, qp.effective_budget, qp.lower, qp.upper, tol
    )
    if status != _kernels.QP_OK:
        raise SolverStallError(
            f"multiplier bisection missed the budget by {abs(x.sum() - qp.budget)!r}"
        )
    return x


def _mechanism_code(mechanism: Mechanism) -> int:
    return _kernels.DP if mechanism is Mechanism.DP else _kernels.HP


def assemble_best_response(instance: GameInstance, loads: LoadMatrix, n: int) -> DiagonalQP:
    """The DiagonalQP whose objective equals consumer n's objective (up to a
    constant) with the other consumers' loads held fixed."""
    c = instance.consumers[n]
    alpha = instance.alpha
    if alpha == 1.0 and c.preference_weight == 0.0:
        raise DegenerateObjectiveError(
            f"consumer {c.id}: alpha=1 with zero preference weight makes the "
            "objective constant"
        )
    if instance.mechanism is Mechanism.DP and instance.total_energy <= 0:
        raise ValidationError(
            "daily-proportional billing requires positive total flexible energy"
        )
    l_minus = loads.aggregate - loads.values[n]
    beta, gamma = _kernels.beta_gamma(
        _mechanism_code(instance.mechanism), c.energy_need, instance.total_energy
    )
    q, p = _kernels.block_qp(
        l_minus,
        instance.cost_model.linear_coeffs,
        instance.cost_model.quad_coeff,
        alpha,
        c.preference_weight,
        c.preferred_profile,
        beta,
        gamma,
    )
    return DiagonalQP(q, p, c.energy_need, c.lower_bounds, c.upper_bounds)


def _bcd(instance: GameInstance, alpha: float, tol: float, max_cycles: int):
    values = instance.preferred_matrix.copy()
    agg = values.sum(axis=0)
    cycles, status, sc = _kernels.bcd_run(
        values,
        agg,
        instance.cost_model.linear_coeffs,
        instance.cost_model.quad_coeff,
        alpha,
        instance.omega_vector,
        instance.preferred_matrix,
        instance.energy_vector,
        instance.lower_matrix,
        instance.upper_matrix,
        tol,
        DEFAULT_BUDGET_TOL,
        max_cycles,
    )
    if status != _kernels.QP_OK:
        raise SolverStallError("block solve missed its budget tolerance")
    return LoadMatrix(values), float(sc)


def minimize_social_cost(
    instance: GameInstance,
    tol: float = DEFAULT_DESCENT_RTOL,
    max_cycles: int = DEFAULT_MAX_CYCLES,
) -> LoadMatrix:
    """Centralized minimizer of the social cost over the feasible set.

    Cyclic block-coordinate descent where each block is one consumer's
    DiagonalQP; terminates when a full cycle improves the objective by less
    than tol * max(1, |objective|). At alpha=1 every term is minimized at the
    preference, so the preferred profile is returned directly.
    """
    if instance.alpha == 1.0:
        return instance.preferred_loads()
    loads, _sc = _bcd(instance, instance.alpha, tol, max_cycles)
    return loads


def minimize_system_cost(
    instance: GameInstance,
    tol: float = DEFAULT_DESCENT_RTOL,
    max_cycles: int = DEFAULT_MAX_CYCLES,
) -> LoadMatrix:
    """Feasible profile minimizing the provider's system cost (alpha forced to 0)."""
    loads, _c = _bcd(instance, 0.0, tol, max_cycles)
    return loads
