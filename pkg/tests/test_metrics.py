"""Social/system cost, price of anarchy and price of efficiency."""

import numpy as np
import pytest

from drgame.analytic import (
    TwoPeriodScenario,
    closed_form_costs,
    dp_equilibrium,
    optimal_system_cost,
    to_game_instance,
)
from drgame.errors import ValidationError
from drgame.game import BRDConfig, best_response_dynamics
from drgame.metrics import (
    EfficiencyRecord,
    evaluate_equilibrium,
    price_of_anarchy,
    price_of_efficiency,
    social_cost,
    system_cost,
)
from drgame.model import LoadMatrix, Mechanism, objective
from drgame.solver import minimize_social_cost, minimize_system_cost

from conftest import random_feasible, random_instance

TIGHT = BRDConfig(improvement_tol=1e-13, seed=0)


def five_equal_users():
    return TwoPeriodScenario(preferred_peak=np.ones(5), energy=np.ones(5))


def mixed_scenario():
    return TwoPeriodScenario(
        preferred_peak=np.array([1.0, 0.8, 1.5, 0.9, 1.2]),
        energy=np.array([1.0, 1.0, 2.0, 1.5, 1.3]),
    )


# -- social and system cost --------------------------------------------------


def test_social_cost_zero_at_preference_alpha_one():
    s = mixed_scenario()
    inst = to_game_instance(s, 1.0, Mechanism.DP)
    assert social_cost(inst, inst.preferred_loads()) == 0.0


def test_social_cost_equals_system_cost_at_alpha_zero():
    rng = np.random.default_rng(1)
    inst = random_instance(rng, n_users=4, hours=6, alpha=0.0)
    loads = random_feasible(rng, inst)
    assert social_cost(inst, loads) == pytest.approx(system_cost(inst, loads), rel=1e-12)


def test_social_cost_is_sum_of_objectives():
    rng = np.random.default_rng(3)
    for mech in Mechanism:
        inst = random_instance(rng, n_users=5, hours=6, mechanism=mech)
        loads = random_feasible(rng, inst)
        sigma = sum(objective(inst, loads, n) for n in range(inst.n_users))
        assert social_cost(inst, loads) == pytest.approx(sigma, rel=1e-9)


def test_system_cost_zero_without_flexible_load():
    rng = np.random.default_rng(5)
    inst = random_instance(rng, n_users=3, hours=5)
    zero = LoadMatrix(np.zeros((3, 5)))
    assert system_cost(inst, zero) == 0.0


def test_two_period_dp_social_cost_matches_closed_form():
    s = mixed_scenario()
    for alpha in (0.25, 0.5, 0.8):
        inst = to_game_instance(s, alpha, Mechanism.DP)
        eq = LoadMatrix(dp_equilibrium(s, alpha))
        _c_dp, _c_hp, sc_want = closed_form_costs(s, alpha)
        assert social_cost(inst, eq) == pytest.approx(sc_want, rel=1e-10)
        sigma = sum(objective(inst, eq, n) for n in range(inst.n_users))
        assert sigma == pytest.approx(sc_want, rel=1e-9)


def test_two_period_system_costs_match_closed_forms_at_brd_equilibria():
    s = mixed_scenario()
    for alpha in (0.15, 0.5, 0.85):
        c_dp_want, c_hp_want, _ = closed_form_costs(s, alpha)
        inst_dp = to_game_instance(s, alpha, Mechanism.DP)
        inst_hp = to_game_instance(s, alpha, Mechanism.HP)
        c_dp = system_cost(inst_dp, best_response_dynamics(inst_dp, config=TIGHT).loads)
        c_hp = system_cost(inst_hp, best_response_dynamics(inst_hp, config=TIGHT).loads)
        # equilibrium loads carry ~1e-7 iteration error, first-order in C
        assert c_dp == pytest.approx(c_dp_want, rel=1e-7)
        assert c_hp == pytest.approx(c_hp_want, rel=1e-7)


# -- price of anarchy --------------------------------------------------------


def test_dp_alpha_zero_poa_is_one():
    s = mixed_scenario()
    inst = to_game_instance(s, 0.0, Mechanism.DP)
    report = best_response_dynamics(inst, config=TIGHT)
    sc_opt = social_cost(inst, minimize_social_cost(inst))
    poa = price_of_anarchy(inst, report.loads, sc_opt)
    assert poa == pytest.approx(1.0, abs=1e-6)


def test_poa_undefined_at_alpha_one():
    s = mixed_scenario()
    inst = to_game_instance(s, 1.0, Mechanism.DP)
    eq = inst.preferred_loads()
    assert price_of_anarchy(inst, eq, 0.0) is None
    record = evaluate_equilibrium(inst, eq, 0.0, optimal_system_cost(s))
    assert record.poa is None
    assert record.poa_reporting == 1.0


def test_poa_rejects_negative_optimum():
    s = mixed_scenario()
    inst = to_game_instance(s, 0.5, Mechanism.DP)
    with pytest.raises(ValidationError):
        price_of_anarchy(inst, inst.preferred_loads(), -1e-6)


def test_poa_and_poe_at_least_one_on_random_instances():
    rng = np.random.default_rng(7)
    for _ in range(8):
        inst = random_instance(rng, n_users=int(rng.integers(2, 6)),
                               hours=int(rng.integers(2, 6)))
        report = best_response_dynamics(inst, config=BRDConfig(improvement_tol=1e-12))
        sc_opt = social_cost(inst, minimize_social_cost(inst))
        c_opt = system_cost(inst, minimize_system_cost(inst))
        record = evaluate_equilibrium(inst, report.loads, sc_opt, c_opt)
        if record.poa is not None:
            assert record.poa >= 1.0 - 1e-9
        assert record.poe >= 1.0 - 1e-9


# -- price of efficiency -----------------------------------------------------


def test_poe_equals_poa_at_alpha_zero():
    s = mixed_scenario()
    inst = to_game_instance(s, 0.0, Mechanism.HP)
    report = best_response_dynamics(inst, config=TIGHT)
    sc_opt = social_cost(inst, minimize_social_cost(inst))
    c_opt = system_cost(inst, minimize_system_cost(inst))
    poa = price_of_anarchy(inst, report.loads, sc_opt)
    poe = price_of_efficiency(inst, report.loads, c_opt)
    assert poa == pytest.approx(poe, rel=1e-9)


def test_two_period_poe_closed_forms():
    # all-peak preference: D = E, so PoE_dp - 1 = alpha^2, PoE_hp - 1 = phi^2
    s = five_equal_users()
    c_star = optimal_system_cost(s)
    for alpha in (0.0, 0.3, 0.6, 1.0):
        c_dp, c_hp, _ = closed_form_costs(s, alpha)
        from drgame.analytic import hp_shift_factor

        assert c_dp / c_star - 1.0 == pytest.approx(alpha**2, abs=1e-12)
        phi = hp_shift_factor(alpha, s.n_users)
        assert c_hp / c_star - 1.0 == pytest.approx(phi**2, abs=1e-12)


def test_poe_requires_positive_optimum():
    s = mixed_scenario()
    inst = to_game_instance(s, 0.5, Mechanism.DP)
    with pytest.raises(ValidationError):
        price_of_efficiency(inst, inst.preferred_loads(), 0.0)


# -- ordering and monotonicity theorems --------------------------------------


def test_system_cost_ordering_hourly_below_daily():
    rng = np.random.default_rng(9)
    from conftest import random_two_period

    for _ in range(10):
        s = random_two_period(rng, int(rng.integers(2, 9)))
        for alpha in np.linspace(0.0, 1.0, 21):
            c_dp, c_hp, _ = closed_form_costs(s, float(alpha))
            assert c_hp <= c_dp + 1e-9
        if s.preference_gap > 1e-9:
            c_dp, c_hp, _ = closed_form_costs(s, 0.5)
            assert c_hp < c_dp


def test_dp_social_cost_strictly_decreasing():
    rng = np.random.default_rng(11)
    from conftest import random_two_period

    grid = np.linspace(0.0, 1.0, 500)
    for _ in range(10):
        s = random_two_period(rng, int(rng.integers(2, 9)))
        sc = np.array([closed_form_costs(s, float(a))[2] for a in grid])
        assert np.all(np.diff(sc) < 0)


# -- record invariants -------------------------------------------------------


def test_record_rejects_poe_below_one():
    with pytest.raises(ValidationError):
        EfficiencyRecord(alpha=0.5, mechanism=Mechanism.DP,
                         social_cost_eq=1.0, social_cost_opt=1.0,
                         system_cost_eq=1.0, system_cost_opt=1.0,
                         poa=1.0, poe=0.5)


def test_record_rejects_optimum_above_equilibrium():
    with pytest.raises(ValidationError):
        EfficiencyRecord(alpha=0.5, mechanism=Mechanism.DP,
                         social_cost_eq=1.0, social_cost_opt=1.0,
                         system_cost_eq=1.0, system_cost_opt=2.0,
                         poa=1.0, poe=1.0)
