"""Demand-response consumption games: equilibrium computation under
daily- and hourly-proportional billing, efficiency metrics, closed-form
two-period oracles and scenario tooling."""

from ._kernels import active_backend
from .analytic import (
    TwoPeriodScenario,
    closed_form_costs,
    dp_aggregate,
    dp_equilibrium,
    hp_aggregate,
    hp_equilibrium,
    hp_shift_factor,
    to_game_instance,
)
from .errors import (
    CalibrationError,
    DegenerateEquilibriumError,
    DegenerateObjectiveError,
    DemandGameError,
    InfeasibleBudgetError,
    NonConvexTariffError,
    SolverStallError,
    ValidationError,
)
from .game import (
    BRDConfig,
    EquilibriumReport,
    best_response_dynamics,
    is_equilibrium,
    potential,
    verify_equilibrium,
)
from .io import (
    ScenarioFile,
    TariffPoints,
    calibrate_omega,
    fit_price_curve,
    generate_synthetic_scenario,
    load_scenario,
    save_scenario,
)
from .metrics import (
    EfficiencyRecord,
    evaluate_equilibrium,
    price_of_anarchy,
    price_of_efficiency,
    social_cost,
    system_cost,
)
from .model import (
    ConsumerSpec,
    CostModel,
    GameInstance,
    HorizonGrid,
    LoadMatrix,
    Mechanism,
    bill,
    flexible_cost,
    objective,
    utility,
)
from .solver import (
    DiagonalQP,
    assemble_best_response,
    minimize_social_cost,
    minimize_system_cost,
    solve_diagonal_qp,
)

__version__ = "0.1.0"
