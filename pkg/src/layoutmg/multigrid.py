"""Geometric coarsening, Galerkin transfer, and the V-cycle.

Coarsening drops every other grid line, so four fine squares merge into one
coarse square.  Displacement corrections transfer by standard bilinear
interpolation P (masked on the flow-blocking boundaries); the fine-to-coarse
residual transfer is its adjoint P^T.  The coarse energy Hessian is the
Galerkin triple product P^T q P and the coarse constraint rows aggregate the
four child rows through P.

The coarse equations combine the correction scheme for the (linear) energy
part with full-approximation transfer for the (in)equality density rows: the
coarse level solves for full values anchored at U0 = 0, Lambda0 = the child
multiplier average, H0 = the current eta, with right-hand sides built from
the restricted residuals, so an exact fine solution produces a zero coarse
correction.  With zero anchors the same formulas reduce to the plain
correction scheme, and for all-equality systems the two transfers produce
identical fine updates.

A V-cycle smooths with window sweeps on the way down and up and solves the
coarsest level directly: one dense bordered factorization in equality mode,
a dense active-set iteration over the whole level in inequality mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assembly import (ConstraintSet, QuadraticForm, SaddleSystem, SolverState,
                       residuals, saddle_matrix)
from .grid import Grid, coarsen_grid
from .params import Diagnostics, SolverParams
from .relax import (SweepPlan, build_sweep_plan, single_window_solve,
                    whole_grid_window, window_sweep)


class SolverError(RuntimeError):
    """Unrecoverable failure of a direct solve."""


def interpolation_matrix(fine: Grid, coarse: Grid) -> sp.csr_matrix:
    """Bilinear coarse-to-fine interpolation on the reduced variables.

    Coarse points sit on the even fine lines.  Every fine point splits into
    four quarter-weight contributions at the surrounding coarse points
    (duplicates merge, so coincident points get weight one); contributions on
    eliminated coarse variables are dropped, which zeroes interpolated values
    toward the flow-blocking boundaries.
    """
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    for comp, points, var_of_c in (
            ("u", fine.u_points, coarse.u_var),
            ("v", fine.v_points, coarse.v_var)):
        px = points % (fine.nx + 1)
        py = points // (fine.nx + 1)
        fid = fine.u_var[points] if comp == "u" else fine.v_var[points]
        for cx in (px // 2, (px + 1) // 2):
            for cy in (py // 2, (py + 1) // 2):
                cid = var_of_c[cy * (coarse.nx + 1) + cx]
                rows.append(fid)
                cols.append(cid)
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    keep = c >= 0
    p = sp.coo_matrix((np.full(keep.sum(), 0.25), (r[keep], c[keep])),
                      shape=(fine.n_vars, coarse.n_vars)).tocsr()
    p.sum_duplicates()
    return p


def aggregation_matrix(fine: Grid, coarse: Grid) -> sp.csr_matrix:
    """0/1 matrix summing the four child squares into their coarse parent."""
    sx = np.arange(fine.n_squares) % fine.nx
    sy = np.arange(fine.n_squares) // fine.nx
    parent = (sy // 2) * coarse.nx + sx // 2
    return sp.coo_matrix((np.ones(fine.n_squares),
                          (parent, np.arange(fine.n_squares))),
                         shape=(coarse.n_squares, fine.n_squares)).tocsr()


def galerkin_energy(quad: QuadraticForm, p: sp.csr_matrix,
                    u_ref: np.ndarray | None = None) -> QuadraticForm:
    """Coarse quadratic form Q = P^T q P with the linear term re-centered at
    ``u_ref`` (zero if omitted); symmetry and semidefiniteness carry over."""
    q_c = (p.T @ quad.q @ p).tocsr()
    q_c = ((q_c + q_c.T) * 0.5).tocsr()
    if u_ref is None:
        l_c = p.T @ quad.l
    else:
        l_c = p.T @ (quad.q @ u_ref + quad.l)
    return QuadraticForm(q_c, np.asarray(l_c), 0.0)


def aggregate_constraints(cons: ConstraintSet, p: sp.csr_matrix, g: sp.csr_matrix,
                          u_ref: np.ndarray | None = None) -> ConstraintSet:
    """Coarse rows A = G a P, rhs B = G (b - a u_ref), weights D = G d."""
    a_c = (g @ cons.a @ p).tocsr()
    if u_ref is None:
        b_c = g @ cons.b
    else:
        b_c = g @ (cons.b - cons.a @ u_ref)
    return ConstraintSet(a_c, np.asarray(b_c), np.asarray(g @ cons.d),
                         equality=cons.equality)


@dataclass
class Level:
    """State-independent data of one hierarchy level."""

    grid: Grid
    q: sp.csr_matrix
    a: sp.csr_matrix
    d: np.ndarray
    beta: float
    plan: SweepPlan | None           # None on the coarsest level
    p_up: sp.csr_matrix | None       # interpolation from the next coarser level
    g_down: sp.csr_matrix | None     # square aggregation to the next coarser level


@dataclass
class Hierarchy:
    system: SaddleSystem
    levels: list[Level]

    @property
    def depth(self) -> int:
        return len(self.levels)


def build_hierarchy(system: SaddleSystem, params: SolverParams) -> Hierarchy:
    """Precompute the level operators and window plans for one fine system."""
    levels = [Level(system.grid, system.quad.q, system.cons.a, system.cons.d,
                    system.beta, None, None, None)]
    while levels[-1].grid.nx > params.coarsest_size \
            and levels[-1].grid.ny > params.coarsest_size:
        fine = levels[-1]
        cgrid = coarsen_grid(fine.grid)
        p = interpolation_matrix(fine.grid, cgrid)
        g = aggregation_matrix(fine.grid, cgrid)
        q_c = (p.T @ fine.q @ p).tocsr()
        q_c = ((q_c + q_c.T) * 0.5).tocsr()
        a_c = (g @ fine.a @ p).tocsr()
        d_c = np.asarray(g @ fine.d)
        diag = q_c.diagonal()
        beta_default = 1e-6 * (float(diag.mean()) if diag.size and diag.mean() > 0 else 1.0)
        # an explicit stability weight on the coarse equations bounds the
        # coarse correction size; without it the weakly-determined directions
        # drift during coarse sweeps (it vanishes at the anchors, so the
        # zero-correction fixed point is unaffected)
        beta_c = max(beta_default, params.coarse_beta)
        fine.p_up = p
        fine.g_down = g
        levels.append(Level(cgrid, q_c, a_c, d_c, beta_c, None, None, None))
    for lvl in levels[:-1]:
        lvl.plan = build_sweep_plan(lvl.grid, lvl.q, lvl.a, params.window_size)
    return Hierarchy(system, levels)


def _level_system(level: Level, l: np.ndarray, b: np.ndarray, template: SaddleSystem,
                  eta_rhs: float) -> SaddleSystem:
    quad = QuadraticForm(level.q, l, 0.0)
    cons = ConstraintSet(level.a, b, level.d, equality=template.cons.equality)
    return SaddleSystem(quad, cons, level.grid, level.beta,
                        with_eta=template.with_eta, eta_rhs=eta_rhs)


def fas_coarse_system(system: SaddleSystem, state: SolverState, level: Level,
                      coarse_level: Level, scheme: str = "fas"
                      ) -> tuple[SaddleSystem, SolverState, np.ndarray, float]:
    """Coarse equations of the current fine state.

    scheme 'fas' anchors the coarse unknowns at the averaged fine multipliers
    and the current eta; scheme 'cs' uses zero anchors, giving the plain
    correction scheme.  Returns (coarse system, initialized coarse state,
    lambda anchor, eta anchor).
    """
    p, g = level.p_up, level.g_down
    res = residuals(system, state)
    if scheme == "fas":
        lam0 = np.asarray(0.25 * (g @ state.lam))
        eta0 = state.eta
    elif scheme == "cs":
        lam0 = np.zeros(coarse_level.a.shape[0])
        eta0 = 0.0
    else:
        raise ValueError(f"unknown transfer scheme {scheme!r}")
    f_c = p.T @ res.grad + coarse_level.a.T @ lam0
    b_c = np.asarray(g @ res.eqd) + eta0 * coarse_level.d
    eta_rhs = res.eta + float(coarse_level.d @ lam0)
    sys_c = _level_system(coarse_level, -np.asarray(f_c), b_c, system, eta_rhs)
    st_c = SolverState(np.zeros(coarse_level.a.shape[1]), lam0.copy(), eta0)
    return sys_c, st_c, lam0, eta0


def prolong_correction(state: SolverState, coarse_state: SolverState, level: Level,
                       lam0: np.ndarray, eta0: float, with_eta: bool) -> None:
    """Add the coarse correction: interpolated displacements, per-parent
    multiplier differences, and the eta difference in equality mode."""
    state.u += level.p_up @ coarse_state.u
    state.lam += level.g_down.T @ (coarse_state.lam - lam0)
    if with_eta:
        state.eta += coarse_state.eta - eta0


def coarsest_solve(system: SaddleSystem, state: SolverState,
                   params: SolverParams, diag: Diagnostics | None = None) -> None:
    """Direct solve of a small level.

    Equality mode: one dense bordered symmetric-indefinite factorization.
    Inequality mode: the window active-set iteration over the entire level,
    capped at 50 iterations, run to a 1e-10-relative KKT defect.
    """
    if diag is None:
        diag = Diagnostics()
    if system.cons.equality:
        from .relax import _sym_solve
        k, rhs = saddle_matrix(system)
        n = system.n
        ns = system.cons.n_rows
        extra = 0.0
        for attempt in range(4):
            kk = k.copy()
            kk[np.arange(n), np.arange(n)] += extra
            z = _sym_solve(kk, rhs)
            if z is not None:
                state.u = z[:n]
                state.lam = z[n:n + ns]
                state.eta = float(z[-1]) if system.with_eta else 0.0
                return
            diag.beta_retries += 1
            extra = 2.0 * system.beta * (2 ** attempt) if system.beta > 0 else 2.0 ** attempt
        raise SolverError("coarsest-level factorization failed after beta retries")
    win = whole_grid_window(system)
    skipped, retries = single_window_solve(
        win, system, state, params, max_iters=50, kkt_tol=1e-10)
    diag.add(skipped, retries)
    if skipped:
        raise SolverError("coarsest-level active-set solve hit a singular system")


def v_cycle(hier: Hierarchy, state: SolverState, params: SolverParams,
            diag: Diagnostics | None = None) -> Diagnostics:
    """One V-cycle on the finest state: nu1 pre-sweeps, recursive coarse
    correction, nu2 post-sweeps; the coarsest level is solved directly."""
    if diag is None:
        diag = Diagnostics()

    def descend(k: int, system: SaddleSystem, st: SolverState) -> None:
        level = hier.levels[k]
        if k == hier.depth - 1:
            coarsest_solve(system, st, params, diag)
            return
        window_sweep(system, st, level.plan, params, diag, sweeps=params.nu1)
        sys_c, st_c, lam0, eta0 = fas_coarse_system(
            system, st, level, hier.levels[k + 1], params.scheme)
        descend(k + 1, sys_c, st_c)
        prolong_correction(st, st_c, level, lam0, eta0, system.with_eta)
        window_sweep(system, st, level.plan, params, diag, sweeps=params.nu2)

    if hier.depth == 1:
        coarsest_solve(hier.system, state, params, diag)
    else:
        descend(0, hier.system, state)
    return diag
