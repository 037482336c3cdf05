"""Low-level numerical kernels behind the solver and the dynamics engines.

The same source serves two backends: by default every kernel is compiled
with numba's ``@njit`` (``nogil`` so sweep workers can run in parallel
threads); setting ``DRGAME_BACKEND=numpy`` skips compilation and runs the
identical numpy code in the interpreter. ``DRGAME_BACKEND=numba`` forces
compilation and fails loudly if numba is unavailable.

Kernels operate on raw float64 arrays; all validation and error mapping
lives in the public wrappers (`solver`, `game`).
"""

import os

import numpy as np

BISECT_MAX_ITER = 200
BRACKET_REL_WIDTH = 1e-13
POLISH_ROUNDS = 3

QP_OK = 0
QP_STALLED = 1

# mechanism / block codes
DP = 0
HP = 1
SOCIAL = 2


def _resolve_backend():
    choice = os.environ.get("DRGAME_BACKEND", "auto").strip().lower()
    if choice not in ("", "auto", "numba", "numpy"):
        raise ValueError(
            "DRGAME_BACKEND must be 'numba', 'numpy' or 'auto', got %r" % choice
        )
    if choice == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if choice == "numba":
            raise ImportError("DRGAME_BACKEND=numba but numba is not importable")
        return "numpy"
    return "numba"


BACKEND = _resolve_backend()


def active_backend():
    """Name of the backend selected at import time ('numba' or 'numpy')."""
    return BACKEND


# --------------------------------------------------------------------------
# implementations (backend-neutral source; compiled twins are bound below)
# --------------------------------------------------------------------------


def _qp_solve_impl(quad, lin, budget, lo, hi, budget_tol):
    """Minimize sum_h quad_h*x_h^2 + lin_h*x_h over {sum x = budget, lo <= x <= hi}.

    KKT: x_h = clip((lam - lin_h) / (2 quad_h), lo_h, hi_h) for the multiplier
    lam that meets the budget. lam is bracketed by the extreme breakpoints,
    narrowed by bisection (the clipped sum is nondecreasing in lam), then
    solved exactly on the free coordinate set. Returns (x, lam, status).
    """
    two_q = 2.0 * quad
    lam_lo = np.min(two_q * lo + lin)
    lam_hi = np.max(two_q * hi + lin)
    scale = max(1.0, abs(lam_lo), abs(lam_hi))
    for _ in range(BISECT_MAX_ITER):
        if lam_hi - lam_lo <= BRACKET_REL_WIDTH * scale:
            break
        lam = 0.5 * (lam_lo + lam_hi)
        x = np.minimum(np.maximum((lam - lin) / two_q, lo), hi)
        if x.sum() < budget:
            lam_lo = lam
        else:
            lam_hi = lam
    lam = 0.5 * (lam_lo + lam_hi)
    x = np.minimum(np.maximum((lam - lin) / two_q, lo), hi)
    # polish to machine precision: the bisected lam leaves the budget off by
    # ~bracket-width/(2q), which is enough to corrupt objective comparisons
    # between successive best responses; solving lam exactly on the free set
    # pins every output to the same budget hyperplane
    for _ in range(POLISH_ROUNDS):
        if abs(x.sum() - budget) <= 1e-15 * max(1.0, abs(budget)):
            break
        raw = (lam - lin) / two_q
        free = (raw > lo) & (raw < hi)
        inv = np.where(free, 1.0, 0.0) / two_q
        s1 = inv.sum()
        if s1 <= 0.0:
            break
        pinned = np.where(free, 0.0, x).sum()
        s2 = (np.where(free, lin, 0.0) / two_q).sum()
        lam = (budget - pinned + s2) / s1
        x = np.minimum(np.maximum((lam - lin) / two_q, lo), hi)
    status = QP_OK if abs(x.sum() - budget) <= budget_tol else QP_STALLED
    return x, lam, status


def _beta_gamma_impl(mech, energy_n, e_total):
    # bill-share weight and opponent-load factor of the block objective
    if mech == HP:
        return 1.0, 1.0
    if mech == DP:
        return energy_n / e_total, 2.0
    return 1.0, 2.0  # SOCIAL


def _block_qp_impl(l_minus, a1, a2, alpha, omega_n, pref_n, beta, gamma):
    """Quadratic/linear coefficients of one user's block objective.

    The block objective q_h*x_h^2 + p_h*x_h differs from the user's true
    objective (or from the social objective, for the SOCIAL block) by a
    constant, so improvements computed from it are exact.
    """
    h = a1.shape[0]
    q = np.full(h, (1.0 - alpha) * beta * a2 + alpha * omega_n)
    p = (1.0 - alpha) * beta * (a1 + (gamma * a2) * l_minus) - (
        2.0 * alpha * omega_n
    ) * pref_n
    return q, p


def _potential_impl(values, agg, a1, a2, alpha, omega, pref, energy, e_total, mech):
    """Potential of the game at the profile `values` (aggregate passed in)."""
    n_users = values.shape[0]
    if mech == HP:
        sq = 0.0
        for n in range(n_users):
            row = values[n]
            sq += (row * row).sum()
        base = (0.5 * a2) * ((agg * agg).sum() + sq) + (a1 * agg).sum()
        disc = 0.0
        for n in range(n_users):
            d = values[n] - pref[n]
            disc += omega[n] * (d * d).sum()
        return (1.0 - alpha) * base + alpha * disc
    sys_cost = (a1 * agg + a2 * agg * agg).sum()
    disc = 0.0
    for n in range(n_users):
        d = values[n] - pref[n]
        disc += (e_total / energy[n]) * omega[n] * (d * d).sum()
    return (1.0 - alpha) * sys_cost + alpha * disc


def _social_objective_impl(values, agg, a1, a2, alpha, omega, pref):
    """(1-alpha) * system cost + alpha * weighted squared preference distance."""
    sys_cost = (a1 * agg + a2 * agg * agg).sum()
    disc = 0.0
    for n in range(values.shape[0]):
        d = values[n] - pref[n]
        disc += omega[n] * (d * d).sum()
    return (1.0 - alpha) * sys_cost + alpha * disc


def _block_improvement_impl(q, p, lam, old, new):
    """Exact objective decrease f(old) - f(new) of the block quadratic,
    measured along the budget manifold.

    Uses the reduced-gradient form q*d^2 + (2q*new + p - lam)*d with
    d = old - new: the multiplier term cancels the (float-sized) budget
    displacement between the two solves, and the remaining products carry
    absolute rounding ~1e-15*|d| instead of ~1e-15, so improvements stay
    measurable down to machine-level distances.
    """
    d = old - new
    reduced_grad = 2.0 * q * new + p - lam
    return (q * d * d + reduced_grad * d).sum()


def _regrets_impl(
    values, agg, a1, a2, alpha, omega, pref, energy, lo, hi, e_total, mech, budget_tol
):
    """Best-response improvement available to each user at the fixed profile."""
    n_users = values.shape[0]
    out = np.zeros(n_users)
    status = QP_OK
    for n in range(n_users):
        old = values[n]
        l_minus = agg - old
        beta, gamma = beta_gamma(mech, energy[n], e_total)
        q, p = block_qp(l_minus, a1, a2, alpha, omega[n], pref[n], beta, gamma)
        new, lam, st = qp_solve(q, p, energy[n], lo[n], hi[n], budget_tol)
        if st != QP_OK:
            status = st
        out[n] = max(block_improvement(q, p, lam, old, new), 0.0)
    return out, status


def _brd_run_impl(
    values,
    agg,
    a1,
    a2,
    alpha,
    omega,
    pref,
    energy,
    lo,
    hi,
    e_total,
    mech,
    orders,
    improvement_tol,
    budget_tol,
    trace,
):
    """Best-response passes over the users, in place.

    `orders` holds one user permutation per row (one pass each); a pass whose
    total exact improvement is <= improvement_tol triggers a regret probe,
    and the run stops once the probe confirms max regret <= improvement_tol.
    trace[0] is the starting potential, trace[1+k] the potential after step k.
    Returns (passes_used, converged, steps_recorded, status).
    """
    n_users = values.shape[0]
    trace[0] = potential_of(
        values, agg, a1, a2, alpha, omega, pref, energy, e_total, mech
    )
    steps = 0
    passes = 0
    converged = False
    status = QP_OK
    for it in range(orders.shape[0]):
        passes = it + 1
        pass_improvement = 0.0
        for j in range(n_users):
            n = orders[it, j]
            old = values[n].copy()
            l_minus = agg - old
            beta, gamma = beta_gamma(mech, energy[n], e_total)
            q, p = block_qp(l_minus, a1, a2, alpha, omega[n], pref[n], beta, gamma)
            new, lam, st = qp_solve(q, p, energy[n], lo[n], hi[n], budget_tol)
            if st != QP_OK:
                status = st
            # exact block minimizer: accept unconditionally (skipping on a
            # noisy nonpositive delta freezes the slow modes prematurely)
            delta = block_improvement(q, p, lam, old, new)
            values[n] = new
            agg += new - old
            pass_improvement += max(delta, 0.0)
            trace[1 + steps] = potential_of(
                values, agg, a1, a2, alpha, omega, pref, energy, e_total, mech
            )
            steps += 1
        if pass_improvement <= improvement_tol:
            reg, st = regrets_of(
                values, agg, a1, a2, alpha, omega, pref, energy, lo, hi,
                e_total, mech, budget_tol,
            )
            if st != QP_OK:
                status = st
            if reg.max() <= improvement_tol:
                converged = True
                break
    return passes, converged, steps, status


def _bcd_run_impl(
    values, agg, a1, a2, alpha, omega, pref, energy, lo, hi,
    rel_tol, budget_tol, max_cycles,
):
    """Cyclic block minimization of the social objective, in place.

    Stops when one full cycle improves the objective by less than
    rel_tol * max(1, |objective|). Returns (cycles_used, status, objective).
    """
    n_users = values.shape[0]
    e_total = energy.sum()
    cycles = 0
    status = QP_OK
    sc = social_objective_of(values, agg, a1, a2, alpha, omega, pref)
    for it in range(max_cycles):
        cycles = it + 1
        cycle_improvement = 0.0
        for n in range(n_users):
            old = values[n].copy()
            l_minus = agg - old
            beta, gamma = beta_gamma(SOCIAL, energy[n], e_total)
            q, p = block_qp(l_minus, a1, a2, alpha, omega[n], pref[n], beta, gamma)
            new, lam, st = qp_solve(q, p, energy[n], lo[n], hi[n], budget_tol)
            if st != QP_OK:
                status = st
            delta = block_improvement(q, p, lam, old, new)
            values[n] = new
            agg += new - old
            cycle_improvement += max(delta, 0.0)
        sc = social_objective_of(values, agg, a1, a2, alpha, omega, pref)
        if cycle_improvement <= rel_tol * max(1.0, abs(sc)):
            break
    return cycles, status, sc


# --------------------------------------------------------------------------
# backend binding
# --------------------------------------------------------------------------

if BACKEND == "numba":
    from numba import njit

    _compile = njit(cache=True, nogil=True)
else:

    def _compile(fn):
        return fn


qp_solve = _compile(_qp_solve_impl)
beta_gamma = _compile(_beta_gamma_impl)
block_qp = _compile(_block_qp_impl)
block_improvement = _compile(_block_improvement_impl)
potential_of = _compile(_potential_impl)
social_objective_of = _compile(_social_objective_impl)
regrets_of = _compile(_regrets_impl)
brd_run = _compile(_brd_run_impl)
bcd_run = _compile(_bcd_run_impl)
