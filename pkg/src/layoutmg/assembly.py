"""Assembly of the linearized correction problem around a layout.

Energy.  Moving vertex i by the bilinear interpolation of the grid-point
displacements turns the weighted connection-length energy into an exact
quadratic form in the reduced displacement vector,

    E(u) = 1/2 u^T q u + l^T u + C,

where q is positive semidefinite (a weighted graph Laplacian lifted through
the stencils) and C is the energy of the current layout.

Equidensity rows.  For each grid square, area flux through the four faces is
approximated by (average face density) * (face length) * (average of the two
corner displacements on that face).  Rows are stored in the *net inflow*
convention, so the constraint reads

    netInflow(s) = sum_i a_si u_i  <= (=)  b_s = M(s) - Upsilon(s);

an overfull square (b_s < 0) therefore forces outflow.  Faces on the domain
boundary contribute no terms.  Interior face coefficients appear in exactly
two rows with opposite signs, hence every column of the constraint matrix
sums to zero.

The regularized saddle system couples the energy gradient with the active
equidensity rows through multipliers lambda_s, adds 2*beta to the gradient
diagonal against empty-square rank loss, and (in all-equality mode) appends
the row sum_s d_s lambda_s = rhs_eta with multiplier eta, which removes the
constraint block's all-ones null direction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .graph import Graph, Layout
from .grid import DensityField, Grid


@dataclass
class QuadraticForm:
    """1/2 u^T q u + l^T u + c over the reduced displacement variables."""

    q: sp.csr_matrix
    l: np.ndarray
    c: float

    @property
    def n(self) -> int:
        return self.q.shape[0]


@dataclass
class ConstraintSet:
    """Per-square flux rows a (n_squares x n), right-hand sides b, and the
    uniform weights d used by the eta row.  ``equality`` selects the run
    mode: all rows equalities, or all rows inequalities."""

    a: sp.csr_matrix
    b: np.ndarray
    d: np.ndarray
    equality: bool = False

    @property
    def n_rows(self) -> int:
        return self.a.shape[0]


@dataclass
class SaddleSystem:
    """Immutable assembled level system.

    Gradient rows:    q u + l + 2*beta*u + sum_s lambda_s a_s = 0
    Constraint rows:  (a u)_s + eta d_s = b_s   (eta only in equality mode)
    Eta row:          sum_s d_s lambda_s = eta_rhs   (equality mode only)

    ``eta_rhs`` is zero on a finest level; coarse levels built by the
    full-approximation transfer carry a nonzero value.
    """

    quad: QuadraticForm
    cons: ConstraintSet
    grid: Grid
    beta: float
    with_eta: bool
    eta_rhs: float = 0.0

    @property
    def n(self) -> int:
        return self.quad.n


@dataclass
class SolverState:
    """Mutable iterate: reduced displacements, per-square multipliers, eta."""

    u: np.ndarray
    lam: np.ndarray
    eta: float = 0.0

    @classmethod
    def zeros(cls, system: SaddleSystem) -> "SolverState":
        return cls(np.zeros(system.n), np.zeros(system.cons.n_rows), 0.0)

    def copy(self) -> "SolverState":
        return SolverState(self.u.copy(), self.lam.copy(), self.eta)


class Residuals(NamedTuple):
    grad: np.ndarray   # negative gradient rows, one per variable
    eqd: np.ndarray    # constraint residuals, one per square
    eta: float


def layout_energy(graph: Graph, layout: Layout) -> float:
    """Weighted squared connection length, 1/2 sum_ij w_ij (dx^2 + dy^2)."""
    if graph.n_edges == 0:
        return 0.0
    i = graph.edges[:, 0]
    j = graph.edges[:, 1]
    dx = layout.x[i] - layout.x[j]
    dy = layout.y[i] - layout.y[j]
    return 0.5 * float(np.sum(graph.weights * (dx * dx + dy * dy)))


def evaluate_energy(quad: QuadraticForm, u: np.ndarray) -> float:
    return 0.5 * float(u @ (quad.q @ u)) + float(quad.l @ u) + quad.c


def assemble_energy(graph: Graph, layout: Layout, grid: Grid) -> QuadraticForm:
    """Expand the displaced connection-length energy into (q, l, C).

    Boundary-eliminated variables are substituted by zero, so stencil
    coefficients on eliminated points are dropped.  The u and v blocks are
    decoupled and share the stencil structure.
    """
    n = grid.n_vars
    if graph.n_edges == 0:
        return QuadraticForm(sp.csr_matrix((n, n)), np.zeros(n), 0.0)

    corners, coeffs = grid.stencils(layout.x, layout.y)
    ei = graph.edges[:, 0]
    ej = graph.edges[:, 1]
    w = graph.weights
    dx = layout.x[ei] - layout.x[ej]
    dy = layout.y[ei] - layout.y[ej]
    c = 0.5 * float(np.sum(w * (dx * dx + dy * dy)))

    l = np.zeros(n)
    rows_acc: list[np.ndarray] = []
    cols_acc: list[np.ndarray] = []
    vals_acc: list[np.ndarray] = []
    for var_of, delta in ((grid.u_var, dx), (grid.v_var, dy)):
        # per-edge sparse row of the displaced difference, up to 8 entries
        cols = np.concatenate([var_of[corners[ei]], var_of[corners[ej]]], axis=1)
        vals = np.concatenate([coeffs[ei], -coeffs[ej]], axis=1)
        valid = cols >= 0
        # linear term: w * delta * row
        np.add.at(l, cols[valid], (w * delta)[:, None].repeat(8, axis=1)[valid] * vals[valid])
        # quadratic term: w * row^T row
        pv = valid[:, :, None] & valid[:, None, :]
        outer = (w[:, None, None] * vals[:, :, None] * vals[:, None, :])[pv]
        rows_acc.append(np.broadcast_to(cols[:, :, None], (len(w), 8, 8))[pv])
        cols_acc.append(np.broadcast_to(cols[:, None, :], (len(w), 8, 8))[pv])
        vals_acc.append(outer)

    q = sp.coo_matrix(
        (np.concatenate(vals_acc), (np.concatenate(rows_acc), np.concatenate(cols_acc))),
        shape=(n, n)).tocsr()
    q.sum_duplicates()
    return QuadraticForm(q, l, c)


def assemble_constraints(grid: Grid, dens: DensityField, *,
                         equality: bool = False) -> ConstraintSet:
    """Build the per-square net-inflow rows from the density field.

    A vertical face between horizontally adjacent squares contributes
    rho * hy / 2 on the u values at its two endpoints, with opposite signs in
    the two adjacent rows (inflow on the downwind side); horizontal faces do
    the same with hx and the v values.  rho averages the two squares'
    densities per unit area.
    """
    nx, ny = grid.nx, grid.ny
    ups = dens.upsilon.reshape(ny, nx)
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []

    def scatter(sq, var, val):
        rows.append(sq.ravel())
        cols.append(var.ravel())
        vals.append(val.ravel())

    # vertical faces between (sx, sy) and (sx+1, sy)
    if nx > 1:
        sx, sy = np.meshgrid(np.arange(nx - 1), np.arange(ny), indexing="xy")
        rho = (ups[sy, sx] + ups[sy, sx + 1]) / (2.0 * grid.area)
        coef = rho * grid.hy / 2.0
        s_left = grid.square_id(sx, sy)
        s_right = grid.square_id(sx + 1, sy)
        p_lo = grid.point_id(sx + 1, sy)       # face endpoints
        p_hi = grid.point_id(sx + 1, sy + 1)
        for p in (p_lo, p_hi):
            var = grid.u_var[p]
            scatter(s_left, var, -coef)        # outflow from the left square
            scatter(s_right, var, coef)        # inflow to the right square
    # horizontal faces between (sx, sy) and (sx, sy+1)
    if ny > 1:
        sx, sy = np.meshgrid(np.arange(nx), np.arange(ny - 1), indexing="xy")
        rho = (ups[sy, sx] + ups[sy + 1, sx]) / (2.0 * grid.area)
        coef = rho * grid.hx / 2.0
        s_bot = grid.square_id(sx, sy)
        s_top = grid.square_id(sx, sy + 1)
        p_lo = grid.point_id(sx, sy + 1)
        p_hi = grid.point_id(sx + 1, sy + 1)
        for p in (p_lo, p_hi):
            var = grid.v_var[p]
            scatter(s_bot, var, -coef)
            scatter(s_top, var, coef)

    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        v = np.concatenate(vals)
        keep = c >= 0
        a = sp.coo_matrix((v[keep], (r[keep], c[keep])),
                          shape=(grid.n_squares, grid.n_vars)).tocsr()
    else:
        a = sp.csr_matrix((grid.n_squares, grid.n_vars))
    b = dens.capacity - dens.upsilon
    return ConstraintSet(a, b, np.ones(grid.n_squares), equality=equality)


def default_beta(quad: QuadraticForm) -> float:
    diag = quad.q.diagonal()
    mean = float(diag.mean()) if diag.size else 0.0
    return 1e-6 * (mean if mean > 0 else 1.0)


def assemble_saddle(quad: QuadraticForm, cons: ConstraintSet, grid: Grid, *,
                    beta: float | None = None, with_eta: bool | None = None,
                    eta_rhs: float = 0.0) -> SaddleSystem:
    """Couple a quadratic form with constraint rows into a level system.

    The eta row is assembled only in all-equality mode; in inequality mode
    the active set rarely spans all squares and beta covers residual rank
    loss.
    """
    if beta is None:
        beta = default_beta(quad)
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if with_eta is None:
        with_eta = cons.equality
    return SaddleSystem(quad, cons, grid, beta, with_eta, eta_rhs)


def residuals(system: SaddleSystem, state: SolverState) -> Residuals:
    """Negative defect of every equation at the given state.

    grad_i = -(q u + l + 2 beta u + a^T lambda)_i
    eqd_s  = b_s - (a u)_s - eta d_s
    eta    = eta_rhs - d^T lambda
    """
    quad, cons = system.quad, system.cons
    r_grad = -(quad.q @ state.u + quad.l + 2.0 * system.beta * state.u
               + cons.a.T @ state.lam)
    r_eqd = cons.b - cons.a @ state.u
    if system.with_eta:
        r_eqd = r_eqd - state.eta * cons.d
    r_eta = system.eta_rhs - float(cons.d @ state.lam)
    return Residuals(r_grad, r_eqd, r_eta)


def saddle_matrix(system: SaddleSystem, active: np.ndarray | None = None
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Materialize the dense symmetric block system for the given active set.

    Unknown ordering is [u, lambda_active, eta?].  ``active`` is a boolean
    mask over squares; None means every square (the equality-mode system).
    """
    quad, cons = system.quad, system.cons
    n = system.n
    if active is None:
        active = np.ones(cons.n_rows, dtype=bool)
    act = np.flatnonzero(active)
    na = len(act)
    ne = 1 if system.with_eta else 0
    dim = n + na + ne
    k = np.zeros((dim, dim))
    k[:n, :n] = quad.q.toarray()
    k[np.arange(n), np.arange(n)] += 2.0 * system.beta
    if na:
        a_act = cons.a[act].toarray()
        k[:n, n:n + na] = a_act.T
        k[n:n + na, :n] = a_act
    rhs = np.zeros(dim)
    rhs[:n] = -quad.l
    rhs[n:n + na] = cons.b[act]
    if ne:
        k[n:n + na, -1] = cons.d[act]
        k[-1, n:n + na] = cons.d[act]
        rhs[-1] = system.eta_rhs
    return k, rhs


def lagrangian_value(system: SaddleSystem, u: np.ndarray, lam: np.ndarray,
                     eta: float = 0.0, active: np.ndarray | None = None) -> float:
    """Value of the regularized functional whose critical point the saddle
    system expresses; ``lam`` holds one multiplier per active square."""
    quad, cons = system.quad, system.cons
    if active is None:
        active = np.ones(cons.n_rows, dtype=bool)
    act = np.flatnonzero(active)
    val = evaluate_energy(quad, u) - quad.c + system.beta * float(u @ u)
    if len(act):
        val += float(lam @ (cons.a[act] @ u - cons.b[act]))
        if system.with_eta:
            val += eta * (float(cons.d[act] @ lam) - system.eta_rhs)
    return val
