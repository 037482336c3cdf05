"""Shared fixtures and generators for the test suite.

The random-instance and random-feasible-profile helpers here are written
independently of the solver under test (direct interval assignment, no QP),
so oracle comparisons stay honest.
"""

from pathlib import Path

import numpy as np
import pytest

from drgame.analytic import TwoPeriodScenario
from drgame.model import (
    ConsumerSpec,
    CostModel,
    GameInstance,
    HorizonGrid,
    LoadMatrix,
    Mechanism,
)

DATA_DIR = Path(__file__).parent / "data"
BUNDLED_SCENARIO = DATA_DIR / "scenario_n30_h24.csv"


@pytest.fixture(scope="session")
def bundled_scenario_path() -> Path:
    return BUNDLED_SCENARIO


def random_instance(
    rng: np.random.Generator,
    n_users: int,
    hours: int,
    alpha: float | None = None,
    mechanism: Mechanism | None = None,
) -> GameInstance:
    """Random valid game: positive energies, feasible preferred profiles,
    box bounds with slack, random tariff with positive curvature."""
    consumers = []
    for n in range(n_users):
        pref = rng.uniform(0.05, 3.0, size=hours)
        lo = pref * rng.uniform(0.0, 0.9, size=hours)
        hi = pref + rng.uniform(0.2, 2.5, size=hours)
        consumers.append(
            ConsumerSpec(
                id=f"u{n}",
                preferred_profile=pref,
                energy_need=float(pref.sum()),
                lower_bounds=lo,
                upper_bounds=hi,
                preference_weight=float(rng.uniform(0.1, 60.0)),
            )
        )
    cost = CostModel(
        a0_tilde=float(rng.uniform(0.0, 100.0)),
        a1_tilde=float(rng.uniform(-5.0, 5.0)),
        a2_tilde=float(rng.uniform(0.05, 1.0)),
        nonflexible_load=rng.uniform(0.0, 20.0, size=hours),
    )
    if alpha is None:
        alpha = float(rng.uniform(0.0, 1.0))
    if mechanism is None:
        mechanism = Mechanism.DP if rng.random() < 0.5 else Mechanism.HP
    return GameInstance(
        grid=HorizonGrid(hours),
        consumers=tuple(consumers),
        cost_model=cost,
        alpha=alpha,
        mechanism=mechanism,
    )


def random_feasible_row(
    rng: np.random.Generator, lo: np.ndarray, hi: np.ndarray, energy: float
) -> np.ndarray:
    """Exact sample from {sum x = energy, lo <= x <= hi}: assign hours in
    random order, each drawn from the interval keeping the rest feasible."""
    x = lo.copy()
    rem = energy - lo.sum()
    cap = hi - lo
    order = rng.permutation(len(lo))
    for k, h in enumerate(order):
        later_cap = cap[order[k + 1:]].sum()
        max_take = min(cap[h], rem)
        min_take = max(0.0, rem - later_cap)
        take = rng.uniform(min_take, max_take) if max_take > min_take else max_take
        x[h] += take
        rem -= take
    x[order[-1]] += rem  # float dust
    return np.minimum(np.maximum(x, lo), hi)


def random_feasible(rng: np.random.Generator, instance: GameInstance) -> LoadMatrix:
    rows = [
        random_feasible_row(
            rng, instance.lower_matrix[n], instance.upper_matrix[n], instance.energy_vector[n]
        )
        for n in range(instance.n_users)
    ]
    return LoadMatrix(np.vstack(rows))


def random_two_period(rng: np.random.Generator, n_users: int) -> TwoPeriodScenario:
    """Rejection-sample a scenario satisfying both interior-equilibrium
    conditions (peak shares >= 1/2 guarantee the daily one; the hourly one
    is checked by the constructor)."""
    from drgame.errors import ValidationError

    for _ in range(1000):
        energy = rng.uniform(0.5, 3.0, size=n_users)
        shares = rng.uniform(0.5, 1.0, size=n_users)
        try:
            return TwoPeriodScenario(preferred_peak=shares * energy, energy=energy)
        except ValidationError:
            continue
    raise RuntimeError("could not sample a valid two-period scenario")


def brute_force_qp(quad, lin, budget, lo, hi, step=1e-3):
    """Grid-search oracle for the diagonal QP, 2 or 3 hours only."""
    quad = np.asarray(quad, dtype=float)
    lin = np.asarray(lin, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    h = quad.shape[0]
    if h == 2:
        x1 = np.arange(lo[0], hi[0] + step / 2, step)
        x2 = budget - x1
        ok = (x2 >= lo[1] - 1e-12) & (x2 <= hi[1] + 1e-12)
        x1, x2 = x1[ok], np.clip(x2[ok], lo[1], hi[1])
        vals = quad[0] * x1**2 + lin[0] * x1 + quad[1] * x2**2 + lin[1] * x2
        k = int(np.argmin(vals))
        return np.array([x1[k], x2[k]])
    if h == 3:
        best_val, best_x = np.inf, None
        x2_grid = np.arange(lo[1], hi[1] + step / 2, step)
        for x1 in np.arange(lo[0], hi[0] + step / 2, step):
            x3 = budget - x1 - x2_grid
            ok = (x3 >= lo[2] - 1e-12) & (x3 <= hi[2] + 1e-12)
            if not ok.any():
                continue
            x2 = x2_grid[ok]
            x3 = np.clip(x3[ok], lo[2], hi[2])
            vals = (
                quad[0] * x1**2 + lin[0] * x1
                + quad[1] * x2**2 + lin[1] * x2
                + quad[2] * x3**2 + lin[2] * x3
            )
            k = int(np.argmin(vals))
            if vals[k] < best_val:
                best_val = vals[k]
                best_x = np.array([x1, x2[k], x3[k]])
        return best_x
    raise ValueError("grid oracle supports 2 or 3 hours")
