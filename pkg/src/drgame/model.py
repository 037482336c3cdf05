"""Domain types and the cost, utility, billing and objective functions of the
demand-response consumption game.

Units are fixed throughout the package: loads in kWh, money in cents (so
prices are cents/kWh and preference weights cents/kWh^2). All types are
immutable after construction and every operation is a pure function.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ValidationError

#: relative tolerance used to validate energy balances read from data files
ENERGY_BALANCE_RTOL = 1e-9


class Mechanism(enum.Enum):
    """Billing rule splitting the system costs among consumers."""

    DP = "dp"  # daily proportional: split by total daily flexible energy
    HP = "hp"  # hourly proportional: split hour by hour by consumption


def _as_vector(x, name: str, length: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise ValidationError(
            f"{name} must have length {length}, got {arr.shape[0]}"
        )
    return arr


@dataclass(frozen=True)
class HorizonGrid:
    """Discrete daily time grid: 24 hours for realistic runs, 2 for the
    closed-form peak/offpeak analysis."""

    hour_count: int

    def __post_init__(self):
        if self.hour_count < 2:
            raise ValidationError(f"hour_count must be >= 2, got {self.hour_count}")


@dataclass(frozen=True)
class ConsumerSpec:
    """One flexible consumer: preferred profile, daily energy need, per-hour
    power bounds and the weight put on deviating from the preference."""

    id: str
    preferred_profile: np.ndarray
    energy_need: float
    lower_bounds: np.ndarray
    upper_bounds: np.ndarray
    preference_weight: float

    def __post_init__(self):
        pref = _as_vector(self.preferred_profile, f"consumer {self.id}: preferred_profile")
        h = pref.shape[0]
        lo = _as_vector(self.lower_bounds, f"consumer {self.id}: lower_bounds", h)
        hi = _as_vector(self.upper_bounds, f"consumer {self.id}: upper_bounds", h)
        object.__setattr__(self, "preferred_profile", pref)
        object.__setattr__(self, "lower_bounds", lo)
        object.__setattr__(self, "upper_bounds", hi)
        object.__setattr__(self, "energy_need", float(self.energy_need))
        object.__setattr__(self, "preference_weight", float(self.preference_weight))

        who = f"consumer {self.id}"
        if self.preference_weight < 0:
            raise ValidationError(f"{who}: preference_weight must be >= 0")
        if np.any(lo < 0) or np.any(hi < lo):
            raise ValidationError(f"{who}: bounds must satisfy 0 <= lower <= upper")
        scale = max(1.0, abs(self.energy_need))
        if abs(pref.sum() - self.energy_need) > ENERGY_BALANCE_RTOL * scale:
            raise ValidationError(
                f"{who}: preferred profile sums to {pref.sum()!r}, "
                f"energy need is {self.energy_need!r}"
            )
        if np.any(pref < lo) or np.any(pref > hi):
            bad = int(np.argmax((pref < lo) | (pref > hi)))
            raise ValidationError(
                f"{who}: preferred profile leaves [lower, upper] at hour {bad}"
            )
        slack = ENERGY_BALANCE_RTOL * scale
        if lo.sum() > self.energy_need + slack or hi.sum() < self.energy_need - slack:
            raise ValidationError(
                f"{who}: energy need {self.energy_need!r} outside "
                f"[sum(lower)={lo.sum()!r}, sum(upper)={hi.sum()!r}]"
            )

    @property
    def hour_count(self) -> int:
        return self.preferred_profile.shape[0]


@dataclass(frozen=True)
class CostModel:
    """Quadratic provider tariff a0 + a1*L + a2*L^2 on the total hourly load,
    plus the aggregate nonflexible load profile.

    The surplus cost of the flexible load x at hour h is
    linear_coeffs[h]*x + quad_coeff*x^2 with linear_coeffs[h] =
    a1_tilde + 2*a2_tilde*nonflexible_load[h] and quad_coeff = a2_tilde.
    """

    a0_tilde: float
    a1_tilde: float
    a2_tilde: float
    nonflexible_load: np.ndarray

    def __post_init__(self):
        nf = _as_vector(self.nonflexible_load, "nonflexible_load")
        object.__setattr__(self, "nonflexible_load", nf)
        object.__setattr__(self, "a0_tilde", float(self.a0_tilde))
        object.__setattr__(self, "a1_tilde", float(self.a1_tilde))
        object.__setattr__(self, "a2_tilde", float(self.a2_tilde))
        if self.a2_tilde <= 0:
            raise ValidationError(f"a2_tilde must be > 0, got {self.a2_tilde!r}")
        if np.any(nf < 0):
            raise ValidationError("nonflexible_load must be >= 0 componentwise")

    @cached_property
    def linear_coeffs(self) -> np.ndarray:
        """Per-hour linear coefficient of the flexible-load cost."""
        return self.a1_tilde + 2.0 * self.a2_tilde * self.nonflexible_load

    @property
    def quad_coeff(self) -> float:
        return self.a2_tilde

    @property
    def hour_count(self) -> int:
        return self.nonflexible_load.shape[0]


@dataclass(frozen=True)
class GameInstance:
    """Consumers, cost model, preference factor and billing mechanism: the
    object the dynamics operate on."""

    grid: HorizonGrid
    consumers: tuple[ConsumerSpec, ...]
    cost_model: CostModel
    alpha: float
    mechanism: Mechanism

    def __post_init__(self):
        object.__setattr__(self, "consumers", tuple(self.consumers))
        object.__setattr__(self, "alpha", float(self.alpha))
        if len(self.consumers) < 1:
            raise ValidationError("at least one consumer is required")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"alpha must lie in [0, 1], got {self.alpha!r}")
        h = self.grid.hour_count
        for c in self.consumers:
            if c.hour_count != h:
                raise ValidationError(
                    f"consumer {c.id}: profile length {c.hour_count} != horizon {h}"
                )
        if self.cost_model.hour_count != h:
            raise ValidationError(
                f"nonflexible_load length {self.cost_model.hour_count} != horizon {h}"
            )
        ids = [c.id for c in self.consumers]
        if len(set(ids)) != len(ids):
            raise ValidationError("consumer ids must be unique")

    @property
    def n_users(self) -> int:
        return len(self.consumers)

    @property
    def hours(self) -> int:
        return self.grid.hour_count

    @cached_property
    def preferred_matrix(self) -> np.ndarray:
        return np.vstack([c.preferred_profile for c in self.consumers])

    @cached_property
    def lower_matrix(self) -> np.ndarray:
        return np.vstack([c.lower_bounds for c in self.consumers])

    @cached_property
    def upper_matrix(self) -> np.ndarray:
        return np.vstack([c.upper_bounds for c in self.consumers])

    @cached_property
    def omega_vector(self) -> np.ndarray:
        return np.array([c.preference_weight for c in self.consumers])

    @cached_property
    def energy_vector(self) -> np.ndarray:
        return np.array([c.energy_need for c in self.consumers])

    @cached_property
    def total_energy(self) -> float:
        return float(self.energy_vector.sum())

    def preferred_loads(self) -> "LoadMatrix":
        """The status-quo profile: every consumer at their preference."""
        return LoadMatrix(self.preferred_matrix)

    def validate_loads(self, loads: "LoadMatrix", tol: float = 1e-6) -> None:
        """Raise ValidationError unless `loads` is feasible for this instance."""
        v = loads.values
        if v.shape != (self.n_users, self.hours):
            raise ValidationError(
                f"load matrix shape {v.shape} != ({self.n_users}, {self.hours})"
            )
        eps = 1e-12 * max(1.0, float(np.abs(v).max()))
        if np.any(v < self.lower_matrix - eps) or np.any(v > self.upper_matrix + eps):
            n = int(np.argmax(
                ((v < self.lower_matrix - eps) | (v > self.upper_matrix + eps)).any(axis=1)
            ))
            raise ValidationError(f"consumer {self.consumers[n].id}: load leaves bounds")
        sums = v.sum(axis=1)
        need = self.energy_vector
        bad = np.abs(sums - need) > tol * np.maximum(1.0, np.abs(need))
        if np.any(bad):
            n = int(np.argmax(bad))
            raise ValidationError(
                f"consumer {self.consumers[n].id}: row sums to {sums[n]!r}, "
                f"energy need is {need[n]!r}"
            )


@dataclass(frozen=True)
class LoadMatrix:
    """Strategy profile: one row of hourly flexible consumption per user."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValidationError(f"load matrix must be 2-D, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def aggregate(self) -> np.ndarray:
        """Total flexible load per hour."""
        return self.values.sum(axis=0)

    def row(self, n: int) -> np.ndarray:
        return self.values[n]


# --------------------------------------------------------------------------
# operations
# --------------------------------------------------------------------------


def flexible_cost(cost_model: CostModel, hour: int, agg_load: float) -> float:
    """Surplus provider cost of `agg_load` kWh of flexible consumption at `hour`."""
    if not 0 <= hour < cost_model.hour_count:
        raise IndexError(f"hour {hour} out of range [0, {cost_model.hour_count})")
    a1 = cost_model.linear_coeffs[hour]
    return float(a1 * agg_load + cost_model.quad_coeff * agg_load**2)


def utility(consumer: ConsumerSpec, profile) -> float:
    """Comfort term: minus the weighted squared distance to the preference.

    Always <= 0; equals 0 exactly on the preferred profile.
    """
    p = _as_vector(profile, "profile", consumer.hour_count)
    d = p - consumer.preferred_profile
    return float(-consumer.preference_weight * (d * d).sum())


def _hourly_costs(instance: GameInstance, agg: np.ndarray) -> np.ndarray:
    cm = instance.cost_model
    return cm.linear_coeffs * agg + cm.quad_coeff * agg * agg


def bill(instance: GameInstance, loads: LoadMatrix, n: int) -> float:
    """Daily bill of consumer n under the instance's billing mechanism.

    The hourly-proportional bill uses the per-unit-price form
    sum_h load_nh * (a1_h + a2 * agg_h), which coincides with the
    cost-share form wherever the aggregate is positive and extends it
    continuously to hours with zero aggregate load.
    """
    agg = loads.aggregate
    cm = instance.cost_model
    if instance.mechanism is Mechanism.DP:
        e_total = instance.total_energy
        if e_total <= 0:
            raise ValidationError(
                "daily-proportional billing requires positive total flexible energy"
            )
        share = instance.consumers[n].energy_need / e_total
        return float(share * _hourly_costs(instance, agg).sum())
    row = loads.values[n]
    return float((row * (cm.linear_coeffs + cm.quad_coeff * agg)).sum())


def objective(instance: GameInstance, loads: LoadMatrix, n: int) -> float:
    """Consumer n's objective: (1-alpha)*bill - alpha*utility."""
    a = instance.alpha
    u = utility(instance.consumers[n], loads.values[n])
    return float((1.0 - a) * bill(instance, loads, n) - a * u)
