"""Window relaxation: the constrained block smoother.

The domain is covered by m x m-square windows.  One sweep covers it three
times: once with windows tiled from the origin in red-black order, once
shifted by half a window horizontally, and once shifted vertically, so every
square sees a window interior at least once per sweep.

A single window solve fixes every displacement outside the window, plus the
window-boundary displacements perpendicular to the boundary, and runs a
simplified active-set iteration on the remaining free variables: squares
whose inequality is violated or within an epsilon margin are pinned to
equality, the resulting symmetric indefinite system is factorized densely,
and the step is scaled back by the largest theta in (0, 1] that keeps every
untouched constraint satisfied.  Squares that ended tight with a negative
multiplier are released on the next iteration.  A unit-weight stability term
on the window correction keeps the dense solves well conditioned without
moving the fixed point of the sweep.

In all-equality mode every window square is pinned, which makes the window's
constraint block rank deficient by one (its rows telescope over the free
variables); the solve is then bordered with a local copy of the eta row,
mirroring the global system, and converges in a single Newton step.

Windows of one color touch disjoint free-variable sets, so a color group may
be solved in parallel with results identical to the sequential order.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .assembly import SaddleSystem, SolverState, evaluate_energy
from .grid import Grid
from .params import Diagnostics, SolverParams

_DELTA_STOP = 1e-10       # empty-active-set stationarity exit
_STALL_RTOL = 1e-12       # unchanged-active-set stationarity exit
_FEAS_TOL_FACTOR = 1e-9   # "satisfied by equality" slack, times square area


@dataclass
class WindowData:
    """Precomputed state-independent blocks of one window subproblem."""

    sqs: np.ndarray        # window square ids
    free: np.ndarray       # free reduced variable ids
    q_ww: np.ndarray       # dense energy Hessian block on the free variables
    q_rows: sp.csr_matrix  # full Hessian rows of the free variables
    a_w: np.ndarray        # dense constraint block, window rows x free vars
    a_rows: sp.csr_matrix  # full constraint rows of the window squares
    ext_rows: np.ndarray   # exterior squares whose rows touch the free vars
    a_ext: np.ndarray      # dense exterior-row block on the free variables


@dataclass
class SweepPlan:
    """Windows of one level: passes[pass][color] is a list of WindowData."""

    grid: Grid
    m: int
    passes: list


def _window_free_vars(grid: Grid, x0: int, x1: int, y0: int, y1: int) -> np.ndarray:
    """Free variables: strictly interior plus boundary-parallel ones."""
    ids = []
    if x1 - x0 >= 2:
        px = np.arange(x0 + 1, x1)
        py = np.arange(y0, y1 + 1)
        u = grid.u_var[grid.point_id(px[None, :], py[:, None])].ravel()
        ids.append(u[u >= 0])
    if y1 - y0 >= 2:
        px = np.arange(x0, x1 + 1)
        py = np.arange(y0 + 1, y1)
        v = grid.v_var[grid.point_id(px[None, :], py[:, None])].ravel()
        ids.append(v[v >= 0])
    if not ids:
        return np.empty(0, dtype=np.int64)
    return np.sort(np.concatenate(ids))


def build_sweep_plan(grid: Grid, q: sp.csr_matrix, a: sp.csr_matrix, m: int) -> SweepPlan:
    a_csc = a.tocsc()
    shifts = [(0, 0), (-(m // 2), 0), (0, -(m // 2))]
    passes = []
    for shift_x, shift_y in shifts:
        colors: list[list[WindowData]] = [[], []]
        xs = list(range(shift_x, grid.nx, m))
        ys = list(range(shift_y, grid.ny, m))
        for iy, oy in enumerate(ys):
            for ix, ox in enumerate(xs):
                x0, x1 = max(ox, 0), min(ox + m, grid.nx)
                y0, y1 = max(oy, 0), min(oy + m, grid.ny)
                if x1 <= x0 or y1 <= y0:
                    continue
                sx, sy = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1))
                sqs = grid.square_id(sx, sy).ravel()
                free = _window_free_vars(grid, x0, x1, y0, y1)
                q_rows = q[free]
                a_rows = a[sqs]
                a_cols = a_csc[:, free]
                touching = np.unique(a_cols.indices) if a_cols.nnz else np.empty(0, np.int64)
                ext = np.setdiff1d(touching, sqs, assume_unique=False)
                a_ext = a_cols.tocsr()[ext].toarray() if ext.size else \
                    np.empty((0, free.size))
                win = WindowData(
                    sqs=sqs, free=free,
                    q_ww=q_rows[:, free].toarray(),
                    q_rows=q_rows,
                    a_w=a_rows[:, free].toarray(),
                    a_rows=a_rows,
                    ext_rows=ext, a_ext=a_ext)
                colors[(ix + iy) % 2].append(win)
        passes.append(colors)
    return SweepPlan(grid, m, passes)


def whole_grid_window(system: SaddleSystem) -> WindowData:
    """The entire level as one window with nothing frozen (direct solves)."""
    n = system.n
    ns = system.cons.n_rows
    free = np.arange(n, dtype=np.int64)
    sqs = np.arange(ns, dtype=np.int64)
    return WindowData(
        sqs=sqs, free=free,
        q_ww=system.quad.q.toarray(),
        q_rows=system.quad.q,
        a_w=system.cons.a.toarray(),
        a_rows=system.cons.a,
        ext_rows=np.empty(0, np.int64),
        a_ext=np.empty((0, n)))


_RCOND_MIN = 1e-9


def _sym_solve(k: np.ndarray, rhs: np.ndarray) -> np.ndarray | None:
    """Dense symmetric-indefinite solve with explicit conditioning control.

    Bunch-Kaufman factorization (sytrf) plus a reciprocal-condition estimate
    (sycon); systems with rcond below _RCOND_MIN are rejected as singular.
    Rank-deficient pinned constraint blocks produce exactly such systems, and
    accepting their factorizations yields runaway multiplier values.
    """
    n = len(rhs)
    if n == 0:
        return rhs.copy()
    sytrf, sytrf_lw, sycon, sytrs = scipy.linalg.get_lapack_funcs(
        ("sytrf", "sytrf_lwork", "sycon", "sytrs"), (k,))
    lwork = scipy.linalg.lapack._compute_lwork(sytrf_lw, n)
    ldu, ipiv, info = sytrf(k, lwork=lwork)
    if info != 0:
        return None
    anorm = np.abs(k).sum(axis=0).max()
    rcond, info = sycon(ldu, ipiv, anorm)
    if info != 0 or not np.isfinite(rcond) or rcond < _RCOND_MIN:
        return None
    z, info = sytrs(ldu, ipiv, rhs)
    if info != 0 or not np.all(np.isfinite(z)):
        return None
    return z


def _solve_with_retries(k_base: np.ndarray, rhs: np.ndarray, nf: int,
                        beta_start: float) -> tuple[np.ndarray | None, int]:
    """Escalate the stability weight on failure; returns (solution, retries)."""
    beta_loc = beta_start
    idx = np.arange(nf)
    for attempt in range(4):
        k = k_base.copy()
        k[idx, idx] += 2.0 * beta_loc
        z = _sym_solve(k, rhs)
        if z is not None:
            return z, attempt
        beta_loc *= 2.0
    return None, 3


def single_window_solve(win: WindowData, system: SaddleSystem, state: SolverState,
                        params: SolverParams, *, max_iters: int | None = None,
                        kkt_tol: float | None = None) -> tuple[int, int]:
    """Approximately solve one window subproblem in place.

    Returns (skipped, beta_retries) diagnostic counts.  With ``kkt_tol`` set
    the loop additionally stops once the full stationarity/feasibility defect
    of the window system drops below kkt_tol * scale (used for the direct
    coarsest-level solve).
    """
    nf = win.free.size
    if nf == 0:
        return 0, 0
    quad, cons = system.quad, system.cons
    equality = cons.equality
    beta_g = system.beta
    eps = params.eps_factor * system.grid.area
    feas_tol = _FEAS_TOL_FACTOR * system.grid.area
    b_w = cons.b[win.sqs]
    d_w = cons.d[win.sqs]
    n_w = win.sqs.size
    if max_iters is None:
        max_iters = 1 if equality else params.window_max_iters
    # Exterior multipliers enter the window gradient only in equality mode,
    # where they make exact solutions stationary under sweeps.  In inequality
    # mode they would couple neighboring windows' prices into an undamped
    # feedback loop; each window prices its own rows from scratch instead.
    if equality and win.ext_rows.size:
        g_ext = win.a_ext.T @ state.lam[win.ext_rows]
    else:
        g_ext = 0.0
    kkt_scale = 1.0 + max(np.abs(quad.l).max(initial=0.0), np.abs(cons.b).max(initial=0.0))
    h_mean = 0.5 * (system.grid.hx + system.grid.hy)
    step_cap = 10.0 * h_mean * max(2.0, np.sqrt(float(n_w)))

    retries_total = 0
    prev_mask: np.ndarray | None = None
    prev_lam = np.zeros(n_w)
    solved_any = False

    for _ in range(max_iters):
        cur = win.a_rows @ state.u
        if equality:
            act_mask = np.ones(n_w, dtype=bool)
        else:
            act_mask = cur > b_w - eps
            if prev_mask is not None:
                drop = prev_mask & (prev_lam < 0) & (cur <= b_w + feas_tol)
                act_mask &= ~drop

        if not equality and act_mask.all() and n_w > 1:
            # pinning every square is infeasible: the rows telescope over the
            # free variables while the frozen boundary fixes the window's
            # total content; release the least-violated square as the outlet
            act_mask[np.argmin(cur - b_w)] = False

        g = win.q_rows @ state.u + quad.l[win.free] + 2.0 * beta_g * state.u[win.free] \
            + g_ext
        act = np.flatnonzero(act_mask)
        na = act.size

        if equality:
            # bordered system: the pinned rows telescope over the free
            # variables, so a local eta unknown restores full rank
            dim = nf + n_w + 1
            k = np.zeros((dim, dim))
            k[:nf, :nf] = win.q_ww
            k[:nf, nf:nf + n_w] = win.a_w.T
            k[nf:nf + n_w, :nf] = win.a_w
            k[nf:nf + n_w, -1] = d_w
            k[-1, nf:nf + n_w] = d_w
            ext_lam_sum = float(cons.d @ state.lam) - float(d_w @ state.lam[win.sqs])
            rhs = np.concatenate([-g, b_w - cur, [system.eta_rhs - ext_lam_sum]])
            z, retries = _solve_with_retries(k, rhs, nf, params.window_beta)
            retries_total += retries
            if z is None:
                return 1, retries_total
        else:
            # beta escalation first; if the factorization still fails the
            # pinned rows are dependent, so release least-violated squares
            # until the working set is independent
            while True:
                dim = nf + na
                k = np.zeros((dim, dim))
                k[:nf, :nf] = win.q_ww
                if na:
                    k[:nf, nf:] = win.a_w[act].T
                    k[nf:, :nf] = win.a_w[act]
                rhs = np.concatenate([-g, (b_w - cur)[act]])
                z, retries = _solve_with_retries(k, rhs, nf, params.window_beta)
                retries_total += retries
                if z is not None:
                    break
                if na == 0:
                    return 1, retries_total
                worst = act[np.argmin((cur - b_w)[act])]
                act_mask[worst] = False
                act = np.flatnonzero(act_mask)
                na = act.size
        delta = z[:nf]
        solved_any = True

        if equality:
            state.u[win.free] += delta
            state.lam[win.sqs] = z[nf:nf + n_w]
            state.eta = z[-1]
            return 0, retries_total

        lam_act = z[nf:]
        dnorm = np.abs(delta).max() if nf else 0.0
        if na == 0 and dnorm <= _DELTA_STOP:
            prev_mask, prev_lam = act_mask, np.zeros(n_w)
            break
        if prev_mask is not None and np.array_equal(act_mask, prev_mask) \
                and dnorm <= _STALL_RTOL * (1.0 + np.abs(state.u[win.free]).max()):
            prev_lam = np.zeros(n_w)
            prev_lam[act] = lam_act
            prev_mask = act_mask
            break

        # largest step that keeps currently-satisfied untouched constraints
        # satisfied; already-violated released rows do not block
        theta = 1.0
        comp = np.flatnonzero(~act_mask)
        if comp.size:
            change = win.a_w[comp] @ delta
            slack = (b_w - cur)[comp]
            blocking = (change > 0) & (slack >= 0)
            if blocking.any():
                theta = min(1.0, float((slack[blocking] / change[blocking]).min()))
        # trust region: corrections far beyond the window extent are outside
        # the flux model's validity and destabilize the sweeps
        dmax = np.abs(delta).max() if nf else 0.0
        if dmax > 0:
            theta = min(theta, step_cap / dmax)
        theta = min(max(theta, 0.0), 1.0)
        if theta > 0:
            state.u[win.free] += theta * delta
        prev_mask = act_mask
        prev_lam = np.zeros(n_w)
        prev_lam[act] = lam_act

        if kkt_tol is not None:
            cur2 = win.a_rows @ state.u
            grad = win.q_rows @ state.u + quad.l[win.free] \
                + 2.0 * beta_g * state.u[win.free] + win.a_w[act].T @ lam_act
            stat = np.abs(grad).max(initial=0.0)
            feas = np.maximum(cur2 - b_w, 0.0).max(initial=0.0)
            neg = max(0.0, -lam_act.min(initial=0.0))
            if max(stat, feas, neg) <= kkt_tol * kkt_scale:
                break

    if solved_any and not equality:
        state.lam[win.sqs] = 0.0
        if prev_mask is not None:
            state.lam[win.sqs[prev_mask]] = prev_lam[prev_mask]
    return 0, retries_total


def window_sweep(system: SaddleSystem, state: SolverState, plan: SweepPlan,
                 params: SolverParams, diag: Diagnostics | None = None,
                 sweeps: int = 1) -> None:
    """Run full red-black/shifted window sweeps over the level."""
    if diag is None:
        diag = Diagnostics()
    pool = ThreadPoolExecutor(max_workers=params.threads) if params.threads > 1 else None
    try:
        for _ in range(sweeps):
            for colors in plan.passes:
                for windows in colors:
                    if pool is not None and len(windows) > 1:
                        results = list(pool.map(
                            lambda w: single_window_solve(w, system, state, params),
                            windows))
                    else:
                        results = [single_window_solve(w, system, state, params)
                                   for w in windows]
                    for skipped, retries in results:
                        diag.add(skipped, retries)
    finally:
        if pool is not None:
            pool.shutdown()


def energy_trace_sweeps(system: SaddleSystem, state: SolverState, plan: SweepPlan,
                        params: SolverParams, count: int) -> list[float]:
    """Model energy after each sweep (index 0 is the initial energy)."""
    trace = [evaluate_energy(system.quad, state.u)]
    for _ in range(count):
        window_sweep(system, state, plan, params)
        trace.append(evaluate_energy(system.quad, state.u))
    return trace
