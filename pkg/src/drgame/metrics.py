"""Efficiency measures of a strategy profile: social cost, system cost,
price of anarchy and price of efficiency."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ValidationError
from .model import GameInstance, LoadMatrix, Mechanism

#: value reported for the price of anarchy where it is undefined (alpha=1,
#: zero optimal social cost); it is the limit of the defined values.
POA_LIMIT_VALUE = 1.0


def system_cost(instance: GameInstance, loads: LoadMatrix) -> float:
    """Provider cost of serving the aggregate flexible profile."""
    agg = loads.aggregate
    cm = instance.cost_model
    return float((cm.linear_coeffs * agg + cm.quad_coeff * agg * agg).sum())


def social_cost(instance: GameInstance, loads: LoadMatrix) -> float:
    """Sum of all consumers' objectives: (1-alpha) * system cost plus the
    alpha-weighted squared preference distances (bills cancel into the
    system cost because billing is cost-recovering)."""
    a = instance.alpha
    d = loads.values - instance.preferred_matrix
    discomfort = float((instance.omega_vector * (d * d).sum(axis=1)).sum())
    return (1.0 - a) * system_cost(instance, loads) + a * discomfort


def price_of_anarchy(
    instance: GameInstance, eq_loads: LoadMatrix, opt_social: float
) -> float | None:
    """Equilibrium social cost over the optimal social cost.

    The equilibrium is unique, so the worst equilibrium is the equilibrium.
    Returns None where the measure is undefined (optimal social cost zero,
    which happens exactly at alpha=1); report POA_LIMIT_VALUE downstream.
    """
    if opt_social < -1e-9:
        raise ValidationError(
            f"optimal social cost {opt_social!r} is negative beyond tolerance "
            "(optimizer bug?)"
        )
    sc_eq = social_cost(instance, eq_loads)
    if opt_social <= 1e-12 * max(1.0, abs(sc_eq)):
        return None
    return sc_eq / opt_social


def price_of_efficiency(
    instance: GameInstance, eq_loads: LoadMatrix, opt_system: float
) -> float:
    """Equilibrium system cost over the minimal feasible system cost."""
    if opt_system <= 0:
        raise ValidationError(
            f"minimal system cost must be > 0 to define the ratio, got {opt_system!r}"
        )
    return system_cost(instance, eq_loads) / opt_system


@dataclass(frozen=True)
class EfficiencyRecord:
    """Efficiency of one equilibrium at one (alpha, mechanism) cell."""

    alpha: float
    mechanism: Mechanism
    social_cost_eq: float
    social_cost_opt: float
    system_cost_eq: float
    system_cost_opt: float
    poa: float | None
    poe: float

    def __post_init__(self):
        if self.poa is not None and self.poa < 1.0 - 1e-9:
            raise ValidationError(f"price of anarchy {self.poa!r} below 1")
        if self.poe < 1.0 - 1e-9:
            raise ValidationError(f"price of efficiency {self.poe!r} below 1")
        scale = max(1.0, abs(self.system_cost_eq))
        if self.system_cost_opt > self.system_cost_eq + 1e-9 * scale:
            raise ValidationError(
                "minimal system cost exceeds the equilibrium system cost"
            )

    @property
    def poa_reporting(self) -> float:
        """poa with the undefined case mapped to its limit value."""
        return POA_LIMIT_VALUE if self.poa is None else self.poa


def evaluate_equilibrium(
    instance: GameInstance,
    eq_loads: LoadMatrix,
    opt_social: float,
    opt_system: float,
) -> EfficiencyRecord:
    """Assemble the efficiency record of a verified equilibrium profile."""
    return EfficiencyRecord(
        alpha=instance.alpha,
        mechanism=instance.mechanism,
        social_cost_eq=social_cost(instance, eq_loads),
        social_cost_opt=opt_social,
        system_cost_eq=system_cost(instance, eq_loads),
        system_cost_opt=opt_system,
        poa=price_of_anarchy(instance, eq_loads, opt_social),
        poe=price_of_efficiency(instance, eq_loads, opt_system),
    )
