"""Command-line front end: tariff fitting, scenario generation, single
equilibrium solves, alpha sweeps, the oracle validation suite and the
backend benchmark.

Exit codes: 0 success, 2 validation error, 3 iteration cap reached in
`solve`. Sweeps record per-cell failures in the output and keep going.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import analytic, io, metrics
from .errors import DemandGameError, ValidationError
from .game import BRDConfig, best_response_dynamics
from .model import Mechanism
from .solver import minimize_social_cost, minimize_system_cost

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ITERATION_CAP = 3


def _mechanisms(arg: str) -> list[Mechanism]:
    if arg == "both":
        return [Mechanism.DP, Mechanism.HP]
    return [Mechanism(arg)]


def _alpha_grid(args) -> np.ndarray:
    if getattr(args, "alpha", None) is not None:
        if not 0.0 <= args.alpha <= 1.0:
            raise ValidationError(f"--alpha must lie in [0, 1], got {args.alpha}")
        return np.array([args.alpha])
    return np.linspace(0.0, 1.0, args.alpha_grid)


def _cell_seed(base_seed: int, day: int, alpha_idx: int, mech_idx: int) -> int:
    ss = np.random.SeedSequence([base_seed, day, alpha_idx, mech_idx])
    return int(ss.generate_state(1)[0])


def _write_output(reports: list[dict], args) -> None:
    payload = reports[0] if len(reports) == 1 else reports
    if args.format == "csv":
        if args.out is None:
            raise ValidationError("--format csv requires --out PATH")
        io.write_report_csv(reports, args.out)
    elif args.out is not None:
        io.write_report_json(payload, args.out)
    else:
        print(json.dumps(payload, indent=2))


# --------------------------------------------------------------------------
# fit-prices
# --------------------------------------------------------------------------


def cmd_fit_prices(args) -> int:
    loads = [float(x) for x in args.loads.split(",")]
    prices = [float(x) for x in args.prices.split(",")]
    if args.pairing == "sorted":
        points = io.TariffPoints.paired_sorted(loads, prices)
    else:
        points = io.TariffPoints(np.array(loads), np.array(prices))
    a0, a1, a2 = io.fit_price_curve(points)
    print(f"a0={a0!r} a1={a1!r} a2={a2!r}")
    fitted = (a0 + a1 * points.loads + a2 * points.loads**2) / points.loads
    for load, price in zip(points.loads, fitted):
        print(f"  unit price at {load:g} kWh: {price:.6f} c/kWh")
    return EXIT_OK


# --------------------------------------------------------------------------
# solve / sweep
# --------------------------------------------------------------------------


def _equilibrium_cell(
    instance, alpha: float, mechanism: Mechanism, seed: int, brd: BRDConfig, sc_opt, c_opt
) -> dict:
    cfg = BRDConfig(
        max_iterations=brd.max_iterations,
        improvement_tol=brd.improvement_tol,
        player_order=brd.player_order,
        seed=seed,
    )
    report = best_response_dynamics(instance, config=cfg)
    record = metrics.evaluate_equilibrium(instance, report.loads, sc_opt, c_opt)
    return {
        "alpha": float(alpha),
        "mechanism": mechanism.value,
        "converged": report.converged,
        "iterations": report.iterations_used,
        "SC": record.social_cost_eq,
        "C": record.system_cost_eq,
        "PoA": record.poa,
        "PoE": record.poe,
        "aggregate_profile": [float(v) for v in report.loads.aggregate],
    }


def _prepare_scenario(sf: io.ScenarioFile):
    """System optimum, its cost, and the preference weight (calibrating if
    the file carries none)."""
    base = sf.to_instance(0.0, Mechanism.HP, omega_fallback=0.0)
    sys_opt = minimize_system_cost(base)
    c_opt = metrics.system_cost(base, sys_opt)
    omega = None
    if sf.needs_omega:
        omega = io.calibrate_omega(base, sys_opt)
    return sys_opt, c_opt, omega


def cmd_solve(args) -> int:
    sf = io.load_scenario(args.scenario)
    mechanism = Mechanism(args.mechanism)
    alpha = float(args.alpha)
    _sys_opt, c_opt, omega = _prepare_scenario(sf)
    instance = sf.to_instance(alpha, mechanism, omega_fallback=omega)
    sc_opt = metrics.social_cost(instance, minimize_social_cost(instance))
    cfg = BRDConfig(
        max_iterations=args.max_iters,
        improvement_tol=args.tol,
        seed=args.seed,
    )
    report = best_response_dynamics(instance, config=cfg)
    record = metrics.evaluate_equilibrium(instance, report.loads, sc_opt, c_opt)
    out = {
        "scenario_id": sf.scenario_id,
        "seed": args.seed,
        "alpha": alpha,
        "mechanism": mechanism.value,
        "converged": report.converged,
        "iterations": report.iterations_used,
        "max_regret": report.max_regret,
        "SC": record.social_cost_eq,
        "SC_opt": record.social_cost_opt,
        "C": record.system_cost_eq,
        "C_opt": record.system_cost_opt,
        "PoA": record.poa,
        "PoE": record.poe,
        "aggregate_profile": [float(v) for v in report.loads.aggregate],
        "loads": [[float(v) for v in row] for row in report.loads.values],
        "potential_trace": [float(v) for v in report.potential_trace],
    }
    if args.out is not None:
        io.write_report_json(out, args.out)
    else:
        print(json.dumps(out, indent=2))
    return EXIT_OK if report.converged else EXIT_ITERATION_CAP


def _sweep_job(sf, alpha, alpha_idx, day_idx, mechanisms, omega, c_opt, brd):
    cells = []
    inst_any = sf.to_instance(float(alpha), mechanisms[0], omega_fallback=omega)
    sc_opt = metrics.social_cost(inst_any, minimize_social_cost(inst_any))
    for mech_idx, mech in enumerate(mechanisms):
        instance = sf.to_instance(float(alpha), mech, omega_fallback=omega)
        seed = _cell_seed(brd.seed, day_idx, alpha_idx, mech_idx)
        try:
            cells.append(
                _equilibrium_cell(instance, alpha, mech, seed, brd, sc_opt, c_opt)
            )
        except DemandGameError as exc:
            cells.append(
                {
                    "alpha": float(alpha),
                    "mechanism": mech.value,
                    "converged": False,
                    "iterations": 0,
                    "SC": None,
                    "C": None,
                    "PoA": None,
                    "PoE": None,
                    "aggregate_profile": None,
                    "error": str(exc),
                }
            )
    return cells


def run_sweep(
    scenario_paths: list[str | Path],
    alpha_grid,
    mechanisms: list[Mechanism],
    seed: int = 0,
    brd: BRDConfig | None = None,
    workers: int = 1,
) -> list[dict]:
    """Equilibrium + efficiency metrics for every (day, alpha, mechanism).

    The minimal system cost is computed once per scenario, the optimal social
    cost once per (scenario, alpha); cells run on a bounded thread pool and
    results are assembled in sorted order, so the output is independent of
    workers.
    """
    brd = brd or BRDConfig(seed=seed)
    alpha_grid = np.asarray(list(alpha_grid), dtype=float)
    scenarios = [io.load_scenario(p) for p in scenario_paths]
    prepared = [_prepare_scenario(sf) for sf in scenarios]

    jobs = []
    for day_idx, sf in enumerate(scenarios):
        _sys_opt, c_opt, omega = prepared[day_idx]
        for alpha_idx, alpha in enumerate(alpha_grid):
            jobs.append((sf, alpha, alpha_idx, day_idx, mechanisms, omega, c_opt, brd))

    if workers <= 1:
        results = [_sweep_job(*job) for job in jobs]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda j: _sweep_job(*j), jobs))

    per_scenario: list[list[dict]] = [[] for _ in scenarios]
    for (_, _a, _ai, day_idx, _m, _o, _c, _b), cells in zip(jobs, results):
        per_scenario[day_idx].extend(cells)
    return [
        io.build_scenario_report(sf.scenario_id, seed, alpha_grid, per_scenario[day_idx])
        for day_idx, sf in enumerate(scenarios)
    ]


def cmd_sweep(args) -> int:
    brd = BRDConfig(max_iterations=args.max_iters, improvement_tol=args.tol, seed=args.seed)
    reports = run_sweep(
        scenario_paths=args.scenario,
        alpha_grid=_alpha_grid(args),
        mechanisms=_mechanisms(args.mechanism),
        seed=args.seed,
        brd=brd,
        workers=args.workers,
    )
    _write_output(reports, args)
    return EXIT_OK


# --------------------------------------------------------------------------
# generate
# --------------------------------------------------------------------------


def cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for day in range(1, args.days + 1):
        sf = io.generate_synthetic_scenario(
            seed=args.seed + day,
            n_users=args.users,
            hours=args.hours,
            scenario_id=f"day{day:02d}",
            calibrate=not args.no_calibrate,
        )
        path = out / f"day{day:02d}.csv"
        io.save_scenario(sf, path)
        print(path)
    return EXIT_OK


# --------------------------------------------------------------------------
# validate
# --------------------------------------------------------------------------


def _check(name: str, ok: bool, detail: str = "") -> bool:
    tag = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[{tag}] {name}{suffix}")
    return ok


def cmd_validate(args) -> int:
    from . import game as game_mod
    from .model import LoadMatrix, objective

    rng = np.random.default_rng(20260810)
    tol = args.corrupt_brd_tol if args.corrupt_brd_tol is not None else 1e-15
    results = []

    scenario = analytic.TwoPeriodScenario(
        preferred_peak=np.array([1.0, 0.8, 1.5, 0.9, 1.2]),
        energy=np.array([1.0, 1.0, 2.0, 1.5, 1.3]),
    )
    alphas = np.linspace(0.0, 1.0, 21)

    worst = 0.0
    for alpha in alphas:
        inst = analytic.to_game_instance(scenario, float(alpha), Mechanism.DP)
        rep = best_response_dynamics(inst, config=BRDConfig(improvement_tol=tol, seed=3))
        if alpha == 0.0:
            want = np.array(analytic.dp_aggregate(scenario, 0.0))
            worst = max(worst, float(np.abs(rep.loads.aggregate - want).max()))
        else:
            want = analytic.dp_equilibrium(scenario, float(alpha))
            worst = max(worst, float(np.abs(rep.loads.values - want).max()))
    results.append(
        _check("closed-form equilibrium, daily-proportional", worst <= 1e-6, f"max gap {worst:.2e}")
    )

    worst = 0.0
    for alpha in alphas:
        inst = analytic.to_game_instance(scenario, float(alpha), Mechanism.HP)
        rep = best_response_dynamics(inst, config=BRDConfig(improvement_tol=tol, seed=4))
        want = analytic.hp_equilibrium(scenario, float(alpha))
        worst = max(worst, float(np.abs(rep.loads.values - want).max()))
    results.append(
        _check("closed-form equilibrium, hourly-proportional", worst <= 1e-6, f"max gap {worst:.2e}")
    )

    sf = io.generate_synthetic_scenario(seed=11, n_users=8, hours=12)
    worst_dp, worst_hp = 0.0, 0.0
    for mech in (Mechanism.DP, Mechanism.HP):
        inst = sf.to_instance(0.4, mech)
        pref = inst.preferred_loads()
        for _ in range(40):
            n = int(rng.integers(inst.n_users))
            x = _random_feasible_row(rng, inst, n)
            before = pref.values.copy()
            after = before.copy()
            after[n] = x
            lm_a, lm_b = LoadMatrix(before), LoadMatrix(after)
            df = game_mod.potential(inst, lm_b) - game_mod.potential(inst, lm_a)
            dw = objective(inst, lm_b, n) - objective(inst, lm_a, n)
            weight = (
                inst.consumers[n].energy_need / inst.total_energy
                if mech is Mechanism.DP
                else 1.0
            )
            gap = abs(dw - weight * df) / max(1.0, abs(dw))
            if mech is Mechanism.DP:
                worst_dp = max(worst_dp, gap)
            else:
                worst_hp = max(worst_hp, gap)
    results.append(
        _check("weighted-potential identity, daily-proportional", worst_dp <= 1e-9, f"max gap {worst_dp:.2e}")
    )
    results.append(
        _check("exact-potential identity, hourly-proportional", worst_hp <= 1e-9, f"max gap {worst_hp:.2e}")
    )

    monotone = True
    for mech in (Mechanism.DP, Mechanism.HP):
        inst = sf.to_instance(0.35, mech)
        rep = best_response_dynamics(inst, config=BRDConfig(seed=5))
        trace = rep.potential_trace
        scale = max(1.0, float(np.abs(trace).max()))
        if np.any(np.diff(trace) > 1e-9 * scale):
            monotone = False
    results.append(_check("potential non-increasing along best-response steps", monotone))

    agree = True
    for mech in (Mechanism.DP, Mechanism.HP):
        inst = sf.to_instance(0.6, mech)
        rep1 = best_response_dynamics(
            inst, start=_random_feasible(rng, inst), config=BRDConfig(improvement_tol=tol, seed=6)
        )
        rep2 = best_response_dynamics(
            inst, start=_random_feasible(rng, inst), config=BRDConfig(improvement_tol=tol, seed=7)
        )
        if float(np.abs(rep1.loads.values - rep2.loads.values).max()) > 1e-5:
            agree = False
    results.append(_check("equilibrium unique from independent starts", agree))

    ok_order = True
    for alpha in np.linspace(0.0, 1.0, 11):
        c_dp, c_hp, _sc = analytic.closed_form_costs(scenario, float(alpha))
        if c_hp > c_dp + 1e-9:
            ok_order = False
    inst_dp = analytic.to_game_instance(scenario, 0.5, Mechanism.DP)
    inst_hp = analytic.to_game_instance(scenario, 0.5, Mechanism.HP)
    c_dp_brd = metrics.system_cost(
        inst_dp, best_response_dynamics(inst_dp, config=BRDConfig(improvement_tol=tol)).loads
    )
    c_hp_brd = metrics.system_cost(
        inst_hp, best_response_dynamics(inst_hp, config=BRDConfig(improvement_tol=tol)).loads
    )
    ok_order = ok_order and c_hp_brd <= c_dp_brd + 1e-9
    results.append(
        _check("system-cost ordering: hourly <= daily", ok_order,
               f"daily {c_dp_brd:.6f} vs hourly {c_hp_brd:.6f} at alpha=0.5")
    )

    grid = np.linspace(0.0, 1.0, 201)
    sc_curve = np.array([analytic.closed_form_costs(scenario, float(a))[2] for a in grid])
    results.append(
        _check("equilibrium social cost decreasing in alpha (daily)", bool(np.all(np.diff(sc_curve) < 0)))
    )

    ok = all(results)
    print(f"{sum(results)}/{len(results)} checks passed")
    return EXIT_OK if ok else 1


def _random_feasible_row(rng, instance, n) -> np.ndarray:
    lo = instance.lower_matrix[n]
    hi = instance.upper_matrix[n]
    e = instance.energy_vector[n]
    x = lo.copy()
    rem = e - lo.sum()
    order = rng.permutation(len(lo))
    cap = hi - lo
    for k, h in enumerate(order):
        later = order[k + 1:]
        max_take = min(cap[h], rem)
        min_take = max(0.0, rem - cap[later].sum())
        take = rng.uniform(min_take, max_take) if max_take > min_take else max_take
        x[h] += take
        rem -= take
    x[order[-1]] += rem  # absorb float dust in the last slot
    return np.minimum(np.maximum(x, lo), hi)


def _random_feasible(rng, instance):
    from .model import LoadMatrix

    rows = [_random_feasible_row(rng, instance, n) for n in range(instance.n_users)]
    return LoadMatrix(np.vstack(rows))


# --------------------------------------------------------------------------
# benchmark
# --------------------------------------------------------------------------


def cmd_benchmark(args) -> int:
    backends = ["numpy"]
    try:
        import numba  # noqa: F401

        backends.insert(0, "numba")
    except ImportError:
        print("numba not importable; benchmarking the numpy backend only")
    rows = {}
    for backend in backends:
        env = dict(os.environ, DRGAME_BACKEND=backend)
        cmd = [
            sys.executable, "-m", "drgame.bench", "--json",
            "--qp-repeat", str(args.qp_repeat), "--brd-repeat", str(args.brd_repeat),
        ]
        proc = subprocess.run(cmd, env=env, capture_output=True, text=True)
        if proc.returncode != 0:
            print(proc.stderr, file=sys.stderr)
            return EXIT_VALIDATION
        rows[backend] = json.loads(proc.stdout)
    print(f"{'workload':<28}" + "".join(f"{b + ' (ms)':>14}" for b in backends)
          + ("{:>10}".format("speedup") if len(backends) == 2 else ""))
    for key, label in (
        ("qp_ms", f"qp solve x{args.qp_repeat}"),
        ("brd_ms", "best-response run (N=30)"),
        ("bcd_ms", "system-optimum descent"),
    ):
        line = f"{label:<28}" + "".join(f"{rows[b][key]:>14.2f}" for b in backends)
        if len(backends) == 2:
            line += f"{rows['numpy'][key] / max(rows['numba'][key], 1e-9):>9.1f}x"
        print(line)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drgame",
        description="Demand-response consumption games: equilibria and efficiency metrics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-prices", help="fit tariff coefficients from three points")
    p.add_argument("--loads", required=True, help="three comma-separated loads (kWh)")
    p.add_argument("--prices", required=True, help="three comma-separated unit prices (c/kWh)")
    p.add_argument("--pairing", choices=["sorted", "as-given"], default="sorted")
    p.set_defaults(func=cmd_fit_prices)

    p = sub.add_parser("solve", help="compute one equilibrium and its metrics")
    p.add_argument("--scenario", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--mechanism", choices=["dp", "hp"], required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=150)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="alpha sweep over scenarios and mechanisms")
    p.add_argument("--scenario", action="append", required=True,
                   help="scenario CSV path (repeatable)")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--alpha", type=float, default=None)
    group.add_argument("--alpha-grid", type=int, default=50,
                       help="number of evenly spaced alpha values in [0, 1]")
    p.add_argument("--mechanism", choices=["dp", "hp", "both"], default="both")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=150)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--workers", type=int, default=min(8, os.cpu_count() or 1))
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("generate", help="write synthetic day scenarios")
    p.add_argument("--out", required=True)
    p.add_argument("--days", type=int, default=1)
    p.add_argument("--users", type=int, default=30)
    p.add_argument("--hours", type=int, default=24)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-calibrate", action="store_true")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("validate", help="run the oracle suite (closed forms vs dynamics)")
    p.add_argument("--corrupt-brd-tol", type=float, default=None, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("benchmark", help="compare the numba and numpy backends")
    p.add_argument("--qp-repeat", type=int, default=2000)
    p.add_argument("--brd-repeat", type=int, default=3)
    p.set_defaults(func=cmd_benchmark)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DemandGameError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
