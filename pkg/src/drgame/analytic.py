"""Closed-form equilibria and costs for the two-period (peak/offpeak) game
with pure quadratic hourly costs, unit preference weights and nonnegativity
constraints. These formulas are the independent oracle the iterative engine
is checked against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateEquilibriumError, ValidationError
from .model import (
    ConsumerSpec,
    CostModel,
    GameInstance,
    HorizonGrid,
    Mechanism,
    _as_vector,
)

PEAK, OFFPEAK = 0, 1


@dataclass(frozen=True)
class TwoPeriodScenario:
    """Preferred peak consumption and daily energy per user.

    Validation enforces the interior-equilibrium conditions under which the
    closed forms are exact: the aggregate preference leans on the peak, and
    every user's preferred peak share is large enough that no equilibrium
    load is pushed to zero (one condition per mechanism).
    """

    preferred_peak: np.ndarray
    energy: np.ndarray

    def __post_init__(self):
        peak = _as_vector(self.preferred_peak, "preferred_peak")
        energy = _as_vector(self.energy, "energy", peak.shape[0])
        object.__setattr__(self, "preferred_peak", peak)
        object.__setattr__(self, "energy", energy)
        if np.any(energy <= 0):
            raise ValidationError("every user needs positive daily energy")
        if np.any(peak < 0) or np.any(peak > energy):
            raise ValidationError("preferred peak must lie in [0, energy] per user")
        e = energy.sum()
        agg_peak = peak.sum()
        if agg_peak < e / 2.0:
            raise ValidationError(
                "aggregate preference must lean on the peak period "
                f"(sum peak {agg_peak!r} < E/2 {e / 2.0!r})"
            )
        # interior condition, daily-proportional equilibrium
        if np.any(peak / energy + 0.5 < agg_peak / e - 1e-12):
            n = int(np.argmax(peak / energy + 0.5 < agg_peak / e - 1e-12))
            raise ValidationError(
                f"user {n}: peak share {peak[n] / energy[n]!r} too small for an "
                "interior daily-proportional equilibrium"
            )
        # interior condition, hourly-proportional equilibrium
        n_users = peak.shape[0]
        gap = agg_peak - (e - agg_peak)
        if np.any(2.0 * (n_users - 1) * peak < gap - energy - 1e-12):
            n = int(np.argmax(2.0 * (n_users - 1) * peak < gap - energy - 1e-12))
            raise ValidationError(
                f"user {n}: preferred peak too small for an interior "
                "hourly-proportional equilibrium"
            )

    @property
    def n_users(self) -> int:
        return self.preferred_peak.shape[0]

    @property
    def preferred_offpeak(self) -> np.ndarray:
        return self.energy - self.preferred_peak

    @property
    def total_energy(self) -> float:
        return float(self.energy.sum())

    @property
    def aggregate_peak(self) -> float:
        return float(self.preferred_peak.sum())

    @property
    def aggregate_offpeak(self) -> float:
        return float(self.total_energy - self.aggregate_peak)

    @property
    def preference_gap(self) -> float:
        """Aggregate preferred peak minus preferred offpeak load."""
        return self.aggregate_peak - self.aggregate_offpeak

    @property
    def energy_concentration(self) -> float:
        """Herfindahl index of the energy shares, sum_n (E_n/E)^2."""
        shares = self.energy / self.total_energy
        return float((shares * shares).sum())


def hp_shift_factor(alpha: float, n_users: int) -> float:
    """Attenuation of the aggregate peak shift under hourly-proportional
    billing: 2*alpha / ((1+alpha) + (1-alpha)*N), in [0, 1] and increasing."""
    return 2.0 * alpha / ((1.0 + alpha) + (1.0 - alpha) * n_users)


def dp_equilibrium(s: TwoPeriodScenario, alpha: float) -> np.ndarray:
    """Unique equilibrium under daily-proportional billing, alpha in (0, 1].

    Returns an (N, 2) matrix of (peak, offpeak) loads. At alpha=0 the
    per-user equilibrium is not unique (only the aggregate is determined);
    use dp_aggregate instead.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"alpha must lie in [0, 1], got {alpha!r}")
    if alpha == 0.0:
        raise DegenerateEquilibriumError(
            "per-user daily-proportional equilibrium is degenerate at alpha=0; "
            "only the aggregate load (dp_aggregate) is determined"
        )
    shares = s.energy / s.total_energy
    peak = s.preferred_peak + shares * ((1.0 - alpha) / 2.0) * (-s.preference_gap)
    return np.column_stack([peak, s.energy - peak])


def hp_equilibrium(s: TwoPeriodScenario, alpha: float) -> np.ndarray:
    """Unique equilibrium under hourly-proportional billing, alpha in [0, 1]."""
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"alpha must lie in [0, 1], got {alpha!r}")
    phi = hp_shift_factor(alpha, s.n_users)
    own_gap = s.preferred_peak - s.preferred_offpeak
    peak = s.preferred_peak + ((1.0 - alpha) / (2.0 * (1.0 + alpha))) * (
        phi * (-s.preference_gap) - own_gap
    )
    return np.column_stack([peak, s.energy - peak])


def dp_aggregate(s: TwoPeriodScenario, alpha: float) -> tuple[float, float]:
    """Aggregate (peak, offpeak) equilibrium load, daily-proportional billing."""
    e = s.total_energy
    peak = e / 2.0 + alpha * s.preference_gap / 2.0
    return peak, e - peak


def hp_aggregate(s: TwoPeriodScenario, alpha: float) -> tuple[float, float]:
    """Aggregate (peak, offpeak) equilibrium load, hourly-proportional billing."""
    e = s.total_energy
    peak = e / 2.0 + hp_shift_factor(alpha, s.n_users) * s.preference_gap / 2.0
    return peak, e - peak


def closed_form_costs(s: TwoPeriodScenario, alpha: float) -> tuple[float, float, float]:
    """Equilibrium system costs under both mechanisms and the equilibrium
    social cost under daily-proportional billing.

    Returns (system_cost_dp, system_cost_hp, social_cost_dp).
    """
    e2 = s.total_energy**2
    d2 = s.preference_gap**2
    phi = hp_shift_factor(alpha, s.n_users)
    c_dp = 0.5 * (e2 + alpha * alpha * d2)
    c_hp = 0.5 * (e2 + phi * phi * d2)
    v_e = s.energy_concentration
    sc_dp = (1.0 - alpha) * (
        e2 / 2.0 + (d2 / 2.0) * (alpha * alpha + v_e * (1.0 - alpha) * alpha)
    )
    return c_dp, c_hp, sc_dp


def optimal_system_cost(s: TwoPeriodScenario) -> float:
    """Minimal feasible system cost: the aggregate split evenly across periods."""
    return s.total_energy**2 / 2.0


def to_game_instance(
    s: TwoPeriodScenario, alpha: float, mechanism: Mechanism
) -> GameInstance:
    """Equivalent GameInstance: pure quadratic hourly cost, zero nonflexible
    load, unit preference weights, bounds [0, E_n] per period."""
    consumers = []
    for n in range(s.n_users):
        e_n = float(s.energy[n])
        consumers.append(
            ConsumerSpec(
                id=f"u{n}",
                preferred_profile=[float(s.preferred_peak[n]), e_n - float(s.preferred_peak[n])],
                energy_need=e_n,
                lower_bounds=[0.0, 0.0],
                upper_bounds=[e_n, e_n],
                preference_weight=1.0,
            )
        )
    cost = CostModel(a0_tilde=0.0, a1_tilde=0.0, a2_tilde=1.0, nonflexible_load=[0.0, 0.0])
    return GameInstance(
        grid=HorizonGrid(2),
        consumers=tuple(consumers),
        cost_model=cost,
        alpha=alpha,
        mechanism=mechanism,
    )
