"""Scenario ingestion and serialization, tariff-curve fitting, preference
weight calibration, synthetic scenario generation and result reports.

A scenario on disk is a CSV (section rows: one aggregate nonflexible row,
then preferred/lower/upper rows per user, hour columns h0..h{H-1}) plus a
JSON sidecar with the same stem holding the scalars: scenario id, horizon
and the tariff coefficients. Floats are written with repr() so a
load -> save round trip is byte identical.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CalibrationError, NonConvexTariffError, ValidationError
from .metrics import system_cost
from .model import (
    ConsumerSpec,
    CostModel,
    GameInstance,
    HorizonGrid,
    LoadMatrix,
    Mechanism,
)
from .solver import minimize_system_cost

_CSV_FIXED_COLUMNS = ("row_type", "user_id", "energy", "omega")
_ROW_TYPES = ("nonflexible", "preferred", "lower", "upper")

DEFAULT_TARIFF_PRICES = (5.5, 8.0, 14.0)  # cents/kWh: offpeak, base, peak


# --------------------------------------------------------------------------
# tariff fitting and preference-weight calibration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TariffPoints:
    """Three (load, unit price) anchor points of the provider tariff."""

    loads: np.ndarray
    prices: np.ndarray

    def __post_init__(self):
        loads = np.asarray(self.loads, dtype=np.float64)
        prices = np.asarray(self.prices, dtype=np.float64)
        object.__setattr__(self, "loads", loads)
        object.__setattr__(self, "prices", prices)
        if loads.shape != (3,) or prices.shape != (3,):
            raise ValidationError("exactly three (load, price) points are required")
        if np.any(loads <= 0):
            raise ValidationError("tariff loads must be > 0")
        if len({float(x) for x in loads}) != 3:
            raise ValidationError("tariff loads must be pairwise distinct")

    @classmethod
    def paired_sorted(cls, loads, prices) -> "TariffPoints":
        """Pair sorted loads with sorted prices (cheapest price at the
        smallest load), the conventional pairing for offpeak/base/peak data."""
        return cls(np.sort(np.asarray(loads, dtype=float)),
                   np.sort(np.asarray(prices, dtype=float)))


def fit_price_curve(points: TariffPoints) -> tuple[float, float, float]:
    """Coefficients (a0, a1, a2) of the total-cost curve a0 + a1*L + a2*L^2
    whose per-unit price matches each tariff point exactly."""
    a = np.vander(points.loads, 3, increasing=True)
    b = points.prices * points.loads
    try:
        coef = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise ValidationError(f"tariff points are collinear: {exc}") from exc
    residual = a @ coef - b
    if np.abs(residual).max() > 1e-9 * max(1.0, float(np.abs(b).max())):
        raise ValidationError("tariff interpolation residual exceeds tolerance")
    a0, a1, a2 = (float(c) for c in coef)
    if a2 <= 0:
        raise NonConvexTariffError(
            f"fitted quadratic coefficient {a2!r} is not positive; "
            "this tariff pairing gives a non-convex cost curve"
        )
    return a0, a1, a2


def calibrate_omega(instance: GameInstance, system_optimum: LoadMatrix) -> float:
    """Preference weight making bills and discomfort comparable: the minimal
    system cost divided by the total squared distance between the
    system-optimal profile and the preferences."""
    d = system_optimum.values - instance.preferred_matrix
    denom = float((d * d).sum())
    if denom <= 0:
        raise CalibrationError(
            "preferences already minimize the system cost; the weight is undefined"
        )
    return system_cost(instance, system_optimum) / denom


# --------------------------------------------------------------------------
# scenario files
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class UserRecord:
    id: str
    energy: float
    preferred: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    omega: float | None = None


@dataclass(frozen=True)
class ScenarioFile:
    """In-memory form of a scenario: everything but alpha and the mechanism."""

    scenario_id: str
    horizon: int
    a0_tilde: float
    a1_tilde: float
    a2_tilde: float
    nonflexible_load: np.ndarray
    users: tuple[UserRecord, ...] = field(repr=False)
    default_omega: float | None = None
    seed: int | None = None

    @property
    def needs_omega(self) -> bool:
        return self.default_omega is None and any(u.omega is None for u in self.users)

    def consumer_specs(self, omega_fallback: float | None = None) -> tuple[ConsumerSpec, ...]:
        specs = []
        for u in self.users:
            omega = u.omega
            if omega is None:
                omega = self.default_omega if self.default_omega is not None else omega_fallback
            if omega is None:
                raise ValidationError(
                    f"consumer {u.id}: no preference weight in the file and no "
                    "fallback provided (calibrate first)"
                )
            specs.append(
                ConsumerSpec(
                    id=u.id,
                    preferred_profile=u.preferred,
                    energy_need=u.energy,
                    lower_bounds=u.lower,
                    upper_bounds=u.upper,
                    preference_weight=omega,
                )
            )
        return tuple(specs)

    def cost_model(self) -> CostModel:
        return CostModel(
            a0_tilde=self.a0_tilde,
            a1_tilde=self.a1_tilde,
            a2_tilde=self.a2_tilde,
            nonflexible_load=self.nonflexible_load,
        )

    def to_instance(
        self,
        alpha: float,
        mechanism: Mechanism,
        omega_fallback: float | None = None,
    ) -> GameInstance:
        return GameInstance(
            grid=HorizonGrid(self.horizon),
            consumers=self.consumer_specs(omega_fallback),
            cost_model=self.cost_model(),
            alpha=alpha,
            mechanism=mechanism,
        )

    def validate(self) -> None:
        """Re-run every structural invariant, raising ValidationError with
        the offending user named."""
        if self.horizon < 2:
            raise ValidationError(f"horizon must be >= 2, got {self.horizon}")
        if not self.users:
            raise ValidationError("no consumers in scenario")
        nf = np.asarray(self.nonflexible_load, dtype=float)
        if nf.shape != (self.horizon,):
            raise ValidationError("nonflexible load length must equal the horizon")
        self.to_instance(0.0, Mechanism.HP, omega_fallback=0.0)


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def _parse_cell(raw: str, where: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ValidationError(f"{where}: not a number: {raw!r}") from None


def save_scenario(sf: ScenarioFile, path: str | Path) -> None:
    """Write the CSV and its JSON sidecar (canonical formatting)."""
    path = Path(path)
    header = list(_CSV_FIXED_COLUMNS) + [f"h{i}" for i in range(sf.horizon)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerow(
            ["nonflexible", "", "", ""] + [_fmt(v) for v in sf.nonflexible_load]
        )
        for u in sf.users:
            writer.writerow(
                ["preferred", u.id, _fmt(u.energy), _fmt(u.omega)]
                + [_fmt(v) for v in u.preferred]
            )
            writer.writerow(["lower", u.id, "", ""] + [_fmt(v) for v in u.lower])
            writer.writerow(["upper", u.id, "", ""] + [_fmt(v) for v in u.upper])
    sidecar = {
        "scenario_id": sf.scenario_id,
        "horizon": sf.horizon,
        "a0_tilde": sf.a0_tilde,
        "a1_tilde": sf.a1_tilde,
        "a2_tilde": sf.a2_tilde,
    }
    if sf.default_omega is not None:
        sidecar["omega"] = sf.default_omega
    if sf.seed is not None:
        sidecar["seed"] = sf.seed
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")


def load_scenario(path: str | Path) -> ScenarioFile:
    """Parse and validate a scenario; diagnostics carry row numbers and ids."""
    path = Path(path)
    sidecar_path = _sidecar_path(path)
    if not path.exists():
        raise ValidationError(f"scenario file not found: {path}")
    if not sidecar_path.exists():
        raise ValidationError(f"scenario sidecar not found: {sidecar_path}")
    try:
        sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{sidecar_path}: invalid JSON: {exc}") from exc
    for key in ("scenario_id", "horizon", "a0_tilde", "a1_tilde", "a2_tilde"):
        if key not in sidecar:
            raise ValidationError(f"{sidecar_path}: missing key {key!r}")
    horizon = int(sidecar["horizon"])

    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError(f"{path}: empty file")
    header = rows[0]
    expected = list(_CSV_FIXED_COLUMNS) + [f"h{i}" for i in range(horizon)]
    if header != expected:
        raise ValidationError(
            f"{path}: header mismatch for horizon {horizon}: got {header[:6]}..."
        )
    width = len(expected)

    nonflexible: np.ndarray | None = None
    order: list[str] = []
    parts: dict[str, dict[str, object]] = {}
    pref_rows: dict[str, int] = {}

    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        where = f"{path} row {i}"
        if len(row) != width:
            raise ValidationError(f"{where}: expected {width} columns, got {len(row)}")
        row_type, user_id = row[0], row[1]
        if row_type not in _ROW_TYPES:
            raise ValidationError(f"{where}: unknown row type {row_type!r}")
        values = np.array(
            [_parse_cell(cell, f"{where} col h{j}") for j, cell in enumerate(row[4:])]
        )
        if row_type == "nonflexible":
            if nonflexible is not None:
                raise ValidationError(f"{where}: duplicate nonflexible row")
            nonflexible = values
            continue
        if not user_id:
            raise ValidationError(f"{where}: {row_type} row without a user id")
        slot = parts.setdefault(user_id, {})
        if row_type in slot:
            raise ValidationError(
                f"{where}: duplicate {row_type} row for user id {user_id!r}"
            )
        if row_type == "preferred":
            pref_rows[user_id] = i
            order.append(user_id)
            slot["energy"] = _parse_cell(row[2], f"{where} col energy")
            slot["omega"] = None if row[3] == "" else _parse_cell(row[3], f"{where} col omega")
        slot[row_type] = values

    if nonflexible is None:
        raise ValidationError(f"{path}: missing nonflexible row")
    orphans = sorted(set(parts) - set(order))
    if orphans:
        raise ValidationError(
            f"{path}: user {orphans[0]!r} has bound rows but no preferred row"
        )
    if not order:
        raise ValidationError(f"{path}: no consumers")
    users = []
    for uid in order:
        slot = parts[uid]
        for part in ("lower", "upper"):
            if part not in slot:
                raise ValidationError(
                    f"{path}: user {uid!r} (row {pref_rows[uid]}) has no {part} row"
                )
        users.append(
            UserRecord(
                id=uid,
                energy=float(slot["energy"]),
                preferred=slot["preferred"],
                lower=slot["lower"],
                upper=slot["upper"],
                omega=slot["omega"],
            )
        )

    sf = ScenarioFile(
        scenario_id=str(sidecar["scenario_id"]),
        horizon=horizon,
        a0_tilde=float(sidecar["a0_tilde"]),
        a1_tilde=float(sidecar["a1_tilde"]),
        a2_tilde=float(sidecar["a2_tilde"]),
        nonflexible_load=nonflexible,
        users=tuple(users),
        default_omega=(None if sidecar.get("omega") is None else float(sidecar["omega"])),
        seed=(None if sidecar.get("seed") is None else int(sidecar["seed"])),
    )
    try:
        sf.validate()
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    return sf


# --------------------------------------------------------------------------
# synthetic scenarios
# --------------------------------------------------------------------------


def generate_synthetic_scenario(
    seed: int,
    n_users: int,
    hours: int = 24,
    *,
    scenario_id: str | None = None,
    charge_power: tuple[float, float] = (2.5, 7.0),
    charge_hours: tuple[int, int] = (2, 4),
    window_slack: int = 1,
    base_load_per_user: float = 1.1,
    tariff_prices: tuple[float, float, float] = DEFAULT_TARIFF_PRICES,
    calibrate: bool = True,
    omega_factor: float = 1.0,
) -> ScenarioFile:
    """Deterministic stand-in for one day of residential consumption data.

    The aggregate nonflexible load follows a morning/evening double-peak
    shape; each user's flexible usage is an EV-like contiguous evening
    charging block. Bounds follow the observed-usage rule: zero lower bounds,
    upper bound equal to the user's peak observed value on hours inside the
    charging window and zero on hours never used. The tariff coefficients
    are fitted from the generated load's (min, mean, max) against
    `tariff_prices`, and a uniform preference weight is calibrated from the
    system optimum (times `omega_factor`, for stiffer-preference scenarios)
    unless `calibrate` is disabled.
    """
    if n_users < 1 or hours < 2:
        raise ValidationError("need n_users >= 1 and hours >= 2")
    rng = np.random.default_rng(seed)
    h_idx = np.arange(hours)

    morning, evening = 0.33 * hours, 0.79 * hours
    shape = (
        1.0
        + 0.45 * np.exp(-((h_idx - morning) ** 2) / (0.012 * hours**2))
        + 0.95 * np.exp(-((h_idx - evening) ** 2) / (0.016 * hours**2))
    )
    noise = rng.uniform(0.93, 1.07, size=hours)
    nonflexible = n_users * base_load_per_user * shape * noise

    users = []
    lo_h, hi_h = charge_hours
    for n in range(n_users):
        duration = int(rng.integers(lo_h, hi_h + 1))
        latest_start = hours - duration
        center = int(round(0.79 * hours))
        start = int(rng.integers(max(0, center - 2), max(1, min(latest_start, center + 3) + 1)))
        start = min(start, latest_start)
        power = float(rng.uniform(*charge_power))
        profile = np.zeros(hours)
        profile[start : start + duration] = power
        profile[start + duration - 1] *= float(rng.uniform(0.25, 1.0))
        w0 = max(0, start - window_slack)
        w1 = min(hours, start + duration + window_slack)
        upper = np.zeros(hours)
        upper[w0:w1] = profile.max()
        users.append(
            UserRecord(
                id=f"ev{n:02d}",
                energy=float(profile.sum()),
                preferred=profile,
                lower=np.zeros(hours),
                upper=upper,
                omega=None,
            )
        )

    points = TariffPoints.paired_sorted(
        [nonflexible.min(), nonflexible.mean(), nonflexible.max()], tariff_prices
    )
    a0, a1, a2 = fit_price_curve(points)

    sf = ScenarioFile(
        scenario_id=scenario_id or f"synthetic-{seed}",
        horizon=hours,
        a0_tilde=a0,
        a1_tilde=a1,
        a2_tilde=a2,
        nonflexible_load=nonflexible,
        users=tuple(users),
        default_omega=None,
        seed=seed,
    )
    if calibrate:
        instance = sf.to_instance(0.0, Mechanism.HP, omega_fallback=0.0)
        omega = omega_factor * calibrate_omega(instance, minimize_system_cost(instance))
        sf = ScenarioFile(
            scenario_id=sf.scenario_id,
            horizon=sf.horizon,
            a0_tilde=sf.a0_tilde,
            a1_tilde=sf.a1_tilde,
            a2_tilde=sf.a2_tilde,
            nonflexible_load=sf.nonflexible_load,
            users=sf.users,
            default_omega=omega,
            seed=seed,
        )
    sf.validate()
    return sf


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


def build_scenario_report(
    scenario_id: str, seed: int, alpha_grid, cells: list[dict]
) -> dict:
    """Assemble the per-scenario report object (one entry per alpha/mechanism)."""
    return {
        "scenario_id": scenario_id,
        "seed": seed,
        "alpha_grid": [float(a) for a in alpha_grid],
        "per_alpha": sorted(
            cells, key=lambda c: (c["alpha"], c["mechanism"])
        ),
    }


def write_report_json(report, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")


def report_csv_rows(reports: list[dict]) -> list[tuple]:
    """Long plot-ready rows (day, alpha, mechanism, metric, value); the
    undefined price of anarchy is emitted as its limit value 1."""
    rows = []
    for rep in reports:
        day = rep["scenario_id"]
        for cell in rep["per_alpha"]:
            value_of = {
                "SC": cell["SC"],
                "C": cell["C"],
                "PoA": 1.0 if cell["PoA"] is None else cell["PoA"],
                "PoE": cell["PoE"],
                "iterations": cell["iterations"],
                "converged": int(cell["converged"]),
            }
            for metric, value in value_of.items():
                rows.append((day, cell["alpha"], cell["mechanism"], metric, value))
    return rows


def write_report_csv(reports: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["day", "alpha", "mechanism", "metric", "value"])
        for row in report_csv_rows(reports):
            writer.writerow([row[0], repr(float(row[1])), row[2], row[3], repr(float(row[4]))])
