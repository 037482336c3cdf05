"""Timing workload for the active kernel backend.

Run directly (``python -m drgame.bench``) to time the backend selected by
DRGAME_BACKEND; ``drgame benchmark`` spawns this module under both backends
and prints the comparison.
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from . import _kernels
from .game import BRDConfig, best_response_dynamics
from .io import generate_synthetic_scenario
from .model import Mechanism
from .solver import minimize_system_cost


def _time_ms(fn, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def run_workload(qp_repeat: int = 2000, brd_repeat: int = 3) -> dict:
    rng = np.random.default_rng(1234)
    h = 24
    quads = rng.uniform(0.05, 2.0, size=(qp_repeat, h))
    lins = rng.uniform(-10.0, 10.0, size=(qp_repeat, h))
    lows = np.zeros((qp_repeat, h))
    highs = rng.uniform(0.5, 6.0, size=(qp_repeat, h))
    budgets = np.array([rng.uniform(0.0, highs[i].sum()) for i in range(qp_repeat)])

    def qp_batch():
        for i in range(qp_repeat):
            _kernels.qp_solve(quads[i], lins[i], budgets[i], lows[i], highs[i], 1e-9)

    sf = generate_synthetic_scenario(seed=7, n_users=30, hours=24, calibrate=False)
    instance = sf.to_instance(0.5, Mechanism.HP, omega_fallback=45.0)

    def brd():
        best_response_dynamics(instance, config=BRDConfig(seed=1))

    def bcd():
        minimize_system_cost(instance)

    # first calls trigger jit compilation on the numba backend
    qp_batch()
    brd()
    bcd()

    return {
        "backend": _kernels.active_backend(),
        "qp_ms": _time_ms(qp_batch, max(1, brd_repeat)),
        "brd_ms": _time_ms(brd, brd_repeat),
        "bcd_ms": _time_ms(bcd, brd_repeat),
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--json", action="store_true")
    parser.add_argument("--qp-repeat", type=int, default=2000)
    parser.add_argument("--brd-repeat", type=int, default=3)
    args = parser.parse_args(argv)
    result = run_workload(args.qp_repeat, args.brd_repeat)
    if args.json:
        print(json.dumps(result))
    else:
        print(f"backend: {result['backend']}")
        print(f"qp solve x{args.qp_repeat}: {result['qp_ms']:.2f} ms")
        print(f"best-response run (N=30, H=24): {result['brd_ms']:.2f} ms")
        print(f"system-optimum descent: {result['bcd_ms']:.2f} ms")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
