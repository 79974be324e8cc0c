"""Grid discretization, density fields, and bilinear displacement stencils.

The domain is divided into nx*ny equal squares.  Grid points are numbered
row-major from the bottom-left corner, point p = py*(nx+1) + px; squares are
numbered s = sy*nx + sx.  Each grid point carries a horizontal displacement
u_p and a vertical displacement v_p.  Flow across the external boundary is
forbidden by eliminating u on the left/right boundary columns and v on the
bottom/top boundary rows; the remaining free displacements form one reduced
vector [u | v] that the solvers operate on.

The density field Upsilon(s) is the exact total vertex-rectangle area
overlapping each square (partial overlaps included), with rectangles clipped
to the domain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, Layout, Rect


class Grid:
    """Uniform rectangular grid over a domain."""

    def __init__(self, domain: Rect, nx: int, ny: int):
        if nx < 1 or ny < 1:
            raise ValueError("grid must have at least one square per direction")
        if domain.width <= 0 or domain.height <= 0:
            raise ValueError("domain must have positive size")
        self.domain = domain
        self.nx = int(nx)
        self.ny = int(ny)
        self.hx = domain.width / nx
        self.hy = domain.height / ny
        self.area = self.hx * self.hy
        self.n_points = (nx + 1) * (ny + 1)
        self.n_squares = nx * ny
        self._build_var_index()

    def _build_var_index(self) -> None:
        nx, ny = self.nx, self.ny
        px = np.tile(np.arange(nx + 1), ny + 1)
        py = np.repeat(np.arange(ny + 1), nx + 1)
        u_free = (px > 0) & (px < nx)
        v_free = (py > 0) & (py < ny)
        self.u_var = -np.ones(self.n_points, dtype=np.int64)
        self.v_var = -np.ones(self.n_points, dtype=np.int64)
        self.u_var[u_free] = np.arange(u_free.sum())
        nu = int(u_free.sum())
        self.v_var[v_free] = nu + np.arange(v_free.sum())
        self.n_u_vars = nu
        self.n_vars = nu + int(v_free.sum())
        self.u_points = np.flatnonzero(u_free)
        self.v_points = np.flatnonzero(v_free)

    def __repr__(self) -> str:
        return f"Grid({self.nx}x{self.ny}, h=({self.hx:g},{self.hy:g}))"

    def point_id(self, px, py):
        return py * (self.nx + 1) + px

    def square_id(self, sx, sy):
        return sy * self.nx + sx

    def squares_of(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Square indices containing the points; exact gridline hits go to the
        lower-index square."""
        d = self.domain
        sx = np.floor((np.asarray(x) - d.x0) / self.hx).astype(np.int64)
        sy = np.floor((np.asarray(y) - d.y0) / self.hy).astype(np.int64)
        on_x = (d.x0 + sx * self.hx) == x
        on_y = (d.y0 + sy * self.hy) == y
        sx = np.where(on_x & (sx > 0), sx - 1, sx)
        sy = np.where(on_y & (sy > 0), sy - 1, sy)
        return (np.clip(sx, 0, self.nx - 1), np.clip(sy, 0, self.ny - 1))

    def square_corners(self, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
        """Corner point ids of squares, ordered (ll, lr, ul, ur); shape (..., 4)."""
        ll = sy * (self.nx + 1) + sx
        return np.stack([ll, ll + 1, ll + self.nx + 1, ll + self.nx + 2], axis=-1)

    def stencils(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Bilinear interpolation stencils at the given points.

        Returns (corners, coeffs), both of shape (n, 4) and ordered
        (ll, lr, ul, ur).  Points are clamped to the domain first.  The
        weights are the tensor product of the 1D hat coefficients and sum
        to 1 exactly up to roundoff.
        """
        d = self.domain
        x = np.clip(np.asarray(x, dtype=float), d.x0, d.x1)
        y = np.clip(np.asarray(y, dtype=float), d.y0, d.y1)
        sx, sy = self.squares_of(x, y)
        xi = (x - (d.x0 + sx * self.hx)) / self.hx
        et = (y - (d.y0 + sy * self.hy)) / self.hy
        coeffs = np.stack([(1 - xi) * (1 - et), xi * (1 - et), (1 - xi) * et, xi * et],
                          axis=-1)
        return self.square_corners(sx, sy), coeffs


def stencil_of(grid: Grid, x: float, y: float) -> tuple[np.ndarray, np.ndarray]:
    """Stencil (corner point ids, weights) for one point."""
    corners, coeffs = grid.stencils(np.array([x]), np.array([y]))
    return corners[0], coeffs[0]


def coarsen_grid(grid: Grid) -> Grid:
    """Halve the square counts (standard elimination of every other line)."""
    if grid.nx % 2 or grid.ny % 2:
        raise ValueError(f"cannot coarsen odd grid {grid.nx}x{grid.ny}")
    return Grid(grid.domain, grid.nx // 2, grid.ny // 2)


@dataclass
class DensityField:
    """Per-square overlapping vertex area and allowed capacity."""

    grid: Grid
    upsilon: np.ndarray   # (n_squares,)
    capacity: np.ndarray  # (n_squares,)

    @property
    def slack_vector(self) -> np.ndarray:
        return self.capacity - self.upsilon

    @property
    def max_violation(self) -> float:
        return float(np.max(np.maximum(self.upsilon - self.capacity, 0.0), initial=0.0))


def fill_factor_default(total_area: float, domain: Rect, slack: float = 0.05) -> float:
    """Capacity fill factor: at least one square-area worth of material is
    allowed per square, scaled up when the instance overfills the domain."""
    return max(1.0, total_area / domain.area) * (1.0 + slack)


def density(grid: Grid, graph: Graph, layout: Layout, *,
            slack: float = 0.05, fill_factor: float | None = None) -> DensityField:
    """Exact overlap density Upsilon(s) and capacity M(s) = rho * square area.

    Vertex rectangles are centered on the layout positions and clipped to the
    domain.  Accumulation runs in vertex order so results are reproducible.
    """
    d = grid.domain
    ups = np.zeros((grid.ny, grid.nx))
    hw = graph.widths / 2
    hh = graph.heights / 2
    ax = np.maximum(layout.x - hw, d.x0)
    bx = np.minimum(layout.x + hw, d.x1)
    ay = np.maximum(layout.y - hh, d.y0)
    by = np.minimum(layout.y + hh, d.y1)
    xb = d.x0 + np.arange(grid.nx + 1) * grid.hx
    yb = d.y0 + np.arange(grid.ny + 1) * grid.hy
    for i in range(graph.n_vertices):
        if bx[i] <= ax[i] or by[i] <= ay[i]:
            continue
        ix0 = max(0, int(np.floor((ax[i] - d.x0) / grid.hx)))
        ix1 = min(grid.nx - 1, int(np.floor((bx[i] - d.x0) / grid.hx)))
        iy0 = max(0, int(np.floor((ay[i] - d.y0) / grid.hy)))
        iy1 = min(grid.ny - 1, int(np.floor((by[i] - d.y0) / grid.hy)))
        lx = np.minimum(bx[i], xb[ix0 + 1: ix1 + 2]) - np.maximum(ax[i], xb[ix0: ix1 + 1])
        ly = np.minimum(by[i], yb[iy0 + 1: iy1 + 2]) - np.maximum(ay[i], yb[iy0: iy1 + 1])
        ups[iy0: iy1 + 1, ix0: ix1 + 1] += np.outer(np.maximum(ly, 0.0), np.maximum(lx, 0.0))
    rho = fill_factor if fill_factor is not None else \
        fill_factor_default(graph.total_area, d, slack)
    capacity = np.full(grid.n_squares, rho * grid.area)
    return DensityField(grid, ups.ravel(), capacity)


@dataclass
class DisplacementField:
    """Per-grid-point displacements (u horizontal, v vertical).

    Entries on the flow-blocking boundaries (u on left/right columns, v on
    bottom/top rows) are identically zero.
    """

    grid: Grid
    u: np.ndarray  # (n_points,)
    v: np.ndarray  # (n_points,)

    @classmethod
    def zeros(cls, grid: Grid) -> "DisplacementField":
        return cls(grid, np.zeros(grid.n_points), np.zeros(grid.n_points))

    @classmethod
    def from_reduced(cls, grid: Grid, vec: np.ndarray) -> "DisplacementField":
        """Expand a reduced solver vector [u | v] to full per-point arrays."""
        f = cls.zeros(grid)
        f.u[grid.u_points] = vec[: grid.n_u_vars]
        f.v[grid.v_points] = vec[grid.n_u_vars:]
        return f

    def to_reduced(self) -> np.ndarray:
        return np.concatenate([self.u[self.grid.u_points], self.v[self.grid.v_points]])

    def enforce_boundary(self) -> None:
        g = self.grid
        mask_u = g.u_var < 0
        mask_v = g.v_var < 0
        self.u[mask_u] = 0.0
        self.v[mask_v] = 0.0


def apply_displacement(layout: Layout, grid: Grid, disp: DisplacementField,
                       sigma: float = 1.0) -> Layout:
    """Move every vertex by the bilinearly interpolated displacement, damped
    by sigma; the same stencil weights apply to x (from u) and y (from v).
    Centers are clamped back into the domain."""
    if not 0 < sigma <= 1:
        raise ValueError("sigma must be in (0, 1]")
    corners, coeffs = grid.stencils(layout.x, layout.y)
    dx = np.sum(coeffs * disp.u[corners], axis=1)
    dy = np.sum(coeffs * disp.v[corners], axis=1)
    return Layout(layout.x + sigma * dx, layout.y + sigma * dy, layout.domain)
