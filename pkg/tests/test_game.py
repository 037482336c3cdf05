"""Best-response dynamics, potential identities and equilibrium checks."""

import numpy as np
import pytest

from drgame.analytic import (
    TwoPeriodScenario,
    dp_aggregate,
    dp_equilibrium,
    hp_equilibrium,
    to_game_instance,
)
from drgame.errors import DegenerateObjectiveError, ValidationError
from drgame.game import (
    BRDConfig,
    best_response_dynamics,
    is_equilibrium,
    potential,
    verify_equilibrium,
)
from drgame.metrics import system_cost
from drgame.model import (
    ConsumerSpec,
    CostModel,
    GameInstance,
    HorizonGrid,
    LoadMatrix,
    Mechanism,
    objective,
)
from drgame.solver import assemble_best_response, solve_diagonal_qp

from conftest import random_feasible, random_feasible_row, random_instance

TIGHT = BRDConfig(improvement_tol=1e-13, seed=0)


def five_equal_users() -> TwoPeriodScenario:
    return TwoPeriodScenario(preferred_peak=np.ones(5), energy=np.ones(5))


# -- dynamics ----------------------------------------------------------------


def test_alpha_one_converges_to_preferences_in_one_pass():
    rng = np.random.default_rng(2)
    inst = random_instance(rng, n_users=5, hours=6, alpha=1.0)
    report = best_response_dynamics(inst)
    assert report.converged
    assert report.iterations_used == 1
    assert report.loads.values == pytest.approx(inst.preferred_matrix, abs=1e-9)


def test_single_player_reaches_qp_optimum():
    rng = np.random.default_rng(4)
    inst = random_instance(rng, n_users=1, hours=6, alpha=0.3)
    report = best_response_dynamics(inst, config=TIGHT)
    direct = solve_diagonal_qp(assemble_best_response(inst, inst.preferred_loads(), 0))
    assert report.converged
    assert report.iterations_used <= 2
    assert report.loads.values[0] == pytest.approx(direct, abs=1e-9)


@pytest.mark.parametrize("mechanism", [Mechanism.DP, Mechanism.HP])
def test_two_period_fixed_point_matches_closed_form(mechanism):
    s = five_equal_users()
    inst = to_game_instance(s, 0.5, mechanism)
    report = best_response_dynamics(inst, config=TIGHT)
    want = dp_equilibrium(s, 0.5) if mechanism is Mechanism.DP else hp_equilibrium(s, 0.5)
    assert report.converged
    assert np.abs(report.loads.values - want).max() <= 1e-6
    if mechanism is Mechanism.DP:
        assert report.loads.values[:, 0] == pytest.approx(np.full(5, 0.75), abs=1e-6)


def test_dp_alpha_zero_aggregate_only():
    s = five_equal_users()
    inst = to_game_instance(s, 0.0, Mechanism.DP)
    report = best_response_dynamics(inst, config=TIGHT)
    want = np.array(dp_aggregate(s, 0.0))
    assert np.abs(report.loads.aggregate - want).max() <= 1e-6


def test_run_hits_cap_without_error():
    s = five_equal_users()
    inst = to_game_instance(s, 0.3, Mechanism.HP)
    start = LoadMatrix(np.column_stack([np.zeros(5), np.ones(5)]))
    report = best_response_dynamics(
        inst, start=start, config=BRDConfig(max_iterations=1, improvement_tol=1e-13)
    )
    assert not report.converged
    assert report.iterations_used == 1


def test_infeasible_start_rejected():
    s = five_equal_users()
    inst = to_game_instance(s, 0.3, Mechanism.HP)
    with pytest.raises(ValidationError):
        best_response_dynamics(inst, start=LoadMatrix(np.full((5, 2), 0.9)))


def test_dp_needs_positive_energy_per_user():
    c0 = ConsumerSpec(id="a", preferred_profile=[0.0, 0.0], energy_need=0.0,
                      lower_bounds=[0.0, 0.0], upper_bounds=[1.0, 1.0],
                      preference_weight=1.0)
    c1 = ConsumerSpec(id="b", preferred_profile=[1.0, 0.0], energy_need=1.0,
                      lower_bounds=[0.0, 0.0], upper_bounds=[1.0, 1.0],
                      preference_weight=1.0)
    cost = CostModel(a0_tilde=0.0, a1_tilde=0.0, a2_tilde=1.0, nonflexible_load=[0.0, 0.0])
    inst = GameInstance(grid=HorizonGrid(2), consumers=(c0, c1), cost_model=cost,
                        alpha=0.5, mechanism=Mechanism.DP)
    with pytest.raises(ValidationError):
        best_response_dynamics(inst)
    with pytest.raises(ValidationError):
        potential(inst, inst.preferred_loads())


def test_alpha_one_with_zero_weight_rejected():
    c = ConsumerSpec(id="z", preferred_profile=[1.0, 0.0], energy_need=1.0,
                     lower_bounds=[0.0, 0.0], upper_bounds=[1.0, 1.0],
                     preference_weight=0.0)
    cost = CostModel(a0_tilde=0.0, a1_tilde=0.0, a2_tilde=1.0, nonflexible_load=[0.0, 0.0])
    inst = GameInstance(grid=HorizonGrid(2), consumers=(c,), cost_model=cost,
                        alpha=1.0, mechanism=Mechanism.HP)
    with pytest.raises(DegenerateObjectiveError):
        best_response_dynamics(inst)


def test_cyclic_order_is_deterministic():
    rng = np.random.default_rng(6)
    inst = random_instance(rng, n_users=4, hours=5, alpha=0.4)
    cfg = BRDConfig(player_order="cyclic", improvement_tol=1e-12)
    r1 = best_response_dynamics(inst, config=cfg)
    r2 = best_response_dynamics(inst, config=cfg)
    assert np.array_equal(r1.loads.values, r2.loads.values)
    assert np.array_equal(r1.potential_trace, r2.potential_trace)


# -- potential ---------------------------------------------------------------


def test_dp_potential_at_alpha_zero_is_system_cost():
    rng = np.random.default_rng(8)
    inst = random_instance(rng, n_users=4, hours=6, alpha=0.0, mechanism=Mechanism.DP)
    loads = random_feasible(rng, inst)
    assert potential(inst, loads) == pytest.approx(system_cost(inst, loads), rel=1e-12)


@pytest.mark.parametrize("mechanism", [Mechanism.DP, Mechanism.HP])
def test_potential_difference_tracks_unilateral_deviations(mechanism):
    rng = np.random.default_rng(10)
    for _ in range(8):
        inst = random_instance(rng, n_users=int(rng.integers(2, 6)),
                               hours=int(rng.integers(2, 7)), mechanism=mechanism)
        loads = random_feasible(rng, inst)
        n = int(rng.integers(inst.n_users))
        other = loads.values.copy()
        other[n] = random_feasible_row(
            rng, inst.lower_matrix[n], inst.upper_matrix[n], inst.energy_vector[n]
        )
        lm2 = LoadMatrix(other)
        df = objective(inst, lm2, n) - objective(inst, loads, n)
        dw = potential(inst, lm2) - potential(inst, loads)
        weight = (
            inst.consumers[n].energy_need / inst.total_energy
            if mechanism is Mechanism.DP
            else 1.0
        )
        assert df == pytest.approx(weight * dw, rel=1e-9, abs=1e-9)


def test_potential_trace_non_increasing():
    rng = np.random.default_rng(12)
    for _ in range(6):
        inst = random_instance(rng, n_users=int(rng.integers(2, 8)),
                               hours=int(rng.integers(2, 10)))
        report = best_response_dynamics(inst, start=random_feasible(rng, inst))
        trace = report.potential_trace
        scale = max(1.0, float(np.abs(trace).max()))
        assert np.all(np.diff(trace) <= 1e-9 * scale)


def test_fixed_point_minimizes_potential_over_random_points():
    rng = np.random.default_rng(14)
    inst = random_instance(rng, n_users=5, hours=8, alpha=0.45)
    report = best_response_dynamics(inst, config=TIGHT)
    w_star = potential(inst, report.loads)
    for _ in range(1000):
        assert w_star <= potential(inst, random_feasible(rng, inst)) + 1e-7


def test_two_runs_from_random_starts_agree():
    rng = np.random.default_rng(16)
    for mechanism in (Mechanism.DP, Mechanism.HP):
        inst = random_instance(rng, n_users=5, hours=6, alpha=0.6, mechanism=mechanism)
        r1 = best_response_dynamics(inst, start=random_feasible(rng, inst),
                                    config=BRDConfig(improvement_tol=1e-13, seed=21))
        r2 = best_response_dynamics(inst, start=random_feasible(rng, inst),
                                    config=BRDConfig(improvement_tol=1e-13, seed=22))
        assert np.abs(r1.loads.values - r2.loads.values).max() <= 1e-5


# -- verification ------------------------------------------------------------


def test_converged_run_has_regret_within_tolerance():
    rng = np.random.default_rng(18)
    inst = random_instance(rng, n_users=6, hours=8, alpha=0.3)
    cfg = BRDConfig(improvement_tol=1e-10, seed=1)
    report = best_response_dynamics(inst, config=cfg)
    assert report.converged
    assert report.max_regret <= cfg.improvement_tol
    regrets = verify_equilibrium(inst, report.loads, tol=cfg.improvement_tol)
    assert float(regrets.max()) <= cfg.improvement_tol
    assert is_equilibrium(inst, report.loads, tol=cfg.improvement_tol)


def test_preferences_are_equilibrium_at_alpha_one():
    rng = np.random.default_rng(20)
    inst = random_instance(rng, n_users=4, hours=5, alpha=1.0)
    regrets = verify_equilibrium(inst, inst.preferred_loads())
    assert float(regrets.max()) == pytest.approx(0.0, abs=1e-12)


def test_perturbed_equilibrium_shows_regret():
    s = five_equal_users()
    inst = to_game_instance(s, 0.5, Mechanism.HP)
    report = best_response_dynamics(inst, config=TIGHT)
    bumped = report.loads.values.copy()
    shift = 0.1 * inst.energy_vector[0]
    bumped[0, 0] += shift
    bumped[0, 1] -= shift
    regrets = verify_equilibrium(inst, LoadMatrix(bumped), tol=1e-9)
    assert regrets[0] > 1e-4
    assert not is_equilibrium(inst, LoadMatrix(bumped), tol=1e-9)


def test_iterates_stay_feasible():
    rng = np.random.default_rng(24)
    inst = random_instance(rng, n_users=6, hours=7, alpha=0.2)
    report = best_response_dynamics(inst, start=random_feasible(rng, inst))
    inst.validate_loads(report.loads, tol=1e-7)
