"""Best-response dynamics, potential functions and equilibrium verification.

Both billing mechanisms induce potential games (weighted for daily
proportional, exact for hourly proportional), so exact best responses are
block-coordinate descent on the potential and converge to the unique
equilibrium.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DegenerateObjectiveError, SolverStallError, ValidationError
from .model import GameInstance, LoadMatrix, Mechanism
from .solver import DEFAULT_BUDGET_TOL

DEFAULT_MAX_ITERATIONS = 150
DEFAULT_IMPROVEMENT_TOL = 1e-9


@dataclass(frozen=True)
class BRDConfig:
    """Knobs of a best-response-dynamics run.

    One iteration is a full pass over all users; in 'random' order each pass
    visits the users in a fresh seeded permutation, 'cyclic' always uses
    index order. The run stops once a pass improves the summed objectives by
    at most improvement_tol and a final probe confirms every user's available
    improvement is within the same tolerance.
    """

    max_iterations: int = DEFAULT_MAX_ITERATIONS
    improvement_tol: float = DEFAULT_IMPROVEMENT_TOL
    player_order: str = "random"
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")
        if self.improvement_tol <= 0:
            raise ValidationError("improvement_tol must be > 0")
        if self.player_order not in ("random", "cyclic"):
            raise ValidationError(f"unknown player order {self.player_order!r}")


@dataclass(frozen=True)
class EquilibriumReport:
    """Outcome of a BRD run: final profile, per-step potential trace and the
    best-response improvement still available to each user at termination."""

    loads: LoadMatrix
    iterations_used: int
    converged: bool
    potential_trace: np.ndarray = field(repr=False)
    per_user_regret: np.ndarray = field(repr=False)
    seed: int = 0

    @property
    def max_regret(self) -> float:
        return float(self.per_user_regret.max())


def _check_instance_for_dynamics(instance: GameInstance) -> None:
    if instance.mechanism is Mechanism.DP:
        if instance.total_energy <= 0:
            raise ValidationError(
                "daily-proportional billing requires positive total flexible energy"
            )
        if np.any(instance.energy_vector <= 0):
            n = int(np.argmax(instance.energy_vector <= 0))
            raise ValidationError(
                f"consumer {instance.consumers[n].id}: daily-proportional dynamics "
                "needs positive energy need for every user (potential weights)"
            )
    if instance.alpha == 1.0 and np.any(instance.omega_vector == 0.0):
        n = int(np.argmax(instance.omega_vector == 0.0))
        raise DegenerateObjectiveError(
            f"consumer {instance.consumers[n].id}: alpha=1 with zero preference "
            "weight makes the objective constant"
        )


def _mech_code(instance: GameInstance) -> int:
    return _kernels.DP if instance.mechanism is Mechanism.DP else _kernels.HP


def _orders(instance: GameInstance, cfg: BRDConfig) -> np.ndarray:
    n, passes = instance.n_users, cfg.max_iterations
    if cfg.player_order == "cyclic":
        return np.tile(np.arange(n, dtype=np.int64), (passes, 1))
    rng = np.random.default_rng(cfg.seed)
    return np.vstack([rng.permutation(n) for _ in range(passes)]).astype(np.int64)


def best_response_dynamics(
    instance: GameInstance,
    start: LoadMatrix | None = None,
    config: BRDConfig | None = None,
) -> EquilibriumReport:
    """Iterate exact single-user best responses until an approximate
    equilibrium is certified or max_iterations passes are spent.

    `start` defaults to the preferred profiles (always feasible). A run that
    hits the iteration cap is reported with converged=False, never an error.
    """
    cfg = config or BRDConfig()
    _check_instance_for_dynamics(instance)
    if start is None:
        start = instance.preferred_loads()
    instance.validate_loads(start)

    values = start.values.copy()
    agg = values.sum(axis=0)
    orders = _orders(instance, cfg)
    trace = np.empty(cfg.max_iterations * instance.n_users + 1)
    mech = _mech_code(instance)

    passes, converged, steps, status = _kernels.brd_run(
        values,
        agg,
        instance.cost_model.linear_coeffs,
        instance.cost_model.quad_coeff,
        instance.alpha,
        instance.omega_vector,
        instance.preferred_matrix,
        instance.energy_vector,
        instance.lower_matrix,
        instance.upper_matrix,
        instance.total_energy,
        mech,
        orders,
        cfg.improvement_tol,
        DEFAULT_BUDGET_TOL,
        trace,
    )
    if status != _kernels.QP_OK:
        raise SolverStallError("a best-response solve missed its budget tolerance")

    regrets, status = _kernels.regrets_of(
        values,
        values.sum(axis=0),
        instance.cost_model.linear_coeffs,
        instance.cost_model.quad_coeff,
        instance.alpha,
        instance.omega_vector,
        instance.preferred_matrix,
        instance.energy_vector,
        instance.lower_matrix,
        instance.upper_matrix,
        instance.total_energy,
        mech,
        DEFAULT_BUDGET_TOL,
    )
    if status != _kernels.QP_OK:
        raise SolverStallError("a regret probe missed its budget tolerance")

    return EquilibriumReport(
        loads=LoadMatrix(values),
        iterations_used=int(passes),
        converged=bool(converged),
        potential_trace=trace[: steps + 1].copy(),
        per_user_regret=regrets,
        seed=cfg.seed,
    )


def potential(instance: GameInstance, loads: LoadMatrix) -> float:
    """Potential of the instance's game at `loads`.

    Daily proportional: weighted potential (weights E_n/E), defined only when
    every consumer has positive energy need. Hourly proportional: exact
    potential of the quadratic-cost game.
    """
    if instance.mechanism is Mechanism.DP and np.any(instance.energy_vector <= 0):
        raise ValidationError(
            "the daily-proportional potential needs positive energy for every user"
        )
    return float(
        _kernels.potential_of(
            loads.values,
            loads.aggregate,
            instance.cost_model.linear_coeffs,
            instance.cost_model.quad_coeff,
            instance.alpha,
            instance.omega_vector,
            instance.preferred_matrix,
            instance.energy_vector,
            instance.total_energy,
            _mech_code(instance),
        )
    )


def verify_equilibrium(
    instance: GameInstance, loads: LoadMatrix, tol: float = DEFAULT_IMPROVEMENT_TOL
) -> np.ndarray:
    """Per-user regret (objective improvement available by best-responding).

    `loads` is an approximate equilibrium iff the maximum regret is <= tol.
    """
    _check_instance_for_dynamics(instance)
    instance.validate_loads(loads)
    regrets, status = _kernels.regrets_of(
        loads.values,
        loads.aggregate,
        instance.cost_model.linear_coeffs,
        instance.cost_model.quad_coeff,
        instance.alpha,
        instance.omega_vector,
        instance.preferred_matrix,
        instance.energy_vector,
        instance.lower_matrix,
        instance.upper_matrix,
        instance.total_energy,
        _mech_code(instance),
        DEFAULT_BUDGET_TOL,
    )
    if status != _kernels.QP_OK:
        raise SolverStallError("a regret probe missed its budget tolerance")
    return regrets


def is_equilibrium(
    instance: GameInstance, loads: LoadMatrix, tol: float = DEFAULT_IMPROVEMENT_TOL
) -> bool:
    return float(verify_equilibrium(instance, loads, tol).max()) <= tol
