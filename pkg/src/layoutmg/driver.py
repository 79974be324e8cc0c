"""Nonlinear outer loop: correct a layout over a sequence of grid sizes.

Each step linearizes the problem around the current layout: build the grid
and density field, assemble the energy form and the equidensity rows, solve
the resulting saddle system by V-cycles (or directly on small grids), then
move the vertices by the damped interpolated displacement and continue with
the next grid size.  Displacements, multipliers, and eta restart at zero on
every step, since each step is a fresh linearization.

The connection-length energy may rise early on while overlap is being
removed; only the density violation is expected to fall monotonically in
that phase.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import (SolverState, assemble_constraints, assemble_energy,
                       assemble_saddle, layout_energy)
from .graph import Graph, Layout
from .grid import DisplacementField, Grid, apply_displacement, density
from .multigrid import SolverError, build_hierarchy, coarsest_solve, v_cycle
from .params import Diagnostics, SolverParams
from .relax import build_sweep_plan, window_sweep

TRACE_FIELDS = ("step", "grid", "phase", "cycle", "energy", "max_violation", "wall_ms")


@dataclass(frozen=True)
class ScheduleStep:
    size: int
    v_cycles: int


@dataclass
class Schedule:
    steps: tuple[ScheduleStep, ...]
    sigma: float = 1.0

    def __len__(self) -> int:
        return len(self.steps)


@dataclass
class TraceRecord:
    step: int
    grid: int
    phase: str
    cycle: int
    energy: float
    max_violation: float
    wall_ms: float


@dataclass
class Trace:
    records: list[TraceRecord] = field(default_factory=list)
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    def add(self, *args) -> None:
        self.records.append(TraceRecord(*args))

    @property
    def final_energy(self) -> float:
        return self.records[-1].energy

    def to_csv(self, path_or_file) -> None:
        close = False
        if isinstance(path_or_file, (str, bytes)):
            fh = open(path_or_file, "w", newline="", encoding="utf-8")
            close = True
        else:
            fh = path_or_file
        try:
            writer = csv.writer(fh)
            writer.writerow(TRACE_FIELDS)
            for r in self.records:
                writer.writerow([r.step, r.grid, r.phase, r.cycle,
                                 format(r.energy, ".17g"),
                                 format(r.max_violation, ".17g"),
                                 format(r.wall_ms, ".3f")])
        finally:
            if close:
                fh.close()

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def size_cap(n_vertices: int) -> int:
    """Smallest power-of-two grid size whose square count reaches the vertex
    count (grids beyond that resolve nothing new)."""
    n = 2
    while n * n < max(1, n_vertices):
        n *= 2
    return n


def make_schedule(kind: str, n_vertices: int, *, sizes: tuple[int, ...] | None = None,
                  v_cycles: int | None = None, repeats: int | None = None,
                  sigma: float = 1.0) -> Schedule:
    """Build a driving schedule.

    fmg: doubling grid sizes, each visited twice, the whole sequence repeated
    (default 2 FMG passes with 2 V-cycles per step).  alternating: the two
    given sizes interleaved (default pairs of one V-cycle each).  fixed: a
    single size run for ``v_cycles`` cycles.
    """
    cap = size_cap(n_vertices)
    if sizes is not None:
        for s in sizes:
            if not _is_pow2(s):
                raise ValueError(f"grid size {s} is not a power of two")
    if kind == "fmg":
        reps = repeats if repeats is not None else 2
        vc = v_cycles if v_cycles is not None else 2
        if sizes is None:
            seq = []
            n = 2
            while n <= cap:
                seq.extend([n, n])
                n *= 2
            sizes = tuple(seq)
        steps = tuple(ScheduleStep(s, vc) for _ in range(reps) for s in sizes)
    elif kind == "alternating":
        if sizes is None:
            sizes = (cap // 2 if cap > 2 else 2, cap)
        if len(sizes) != 2:
            raise ValueError("alternating schedule takes exactly two sizes")
        reps = repeats if repeats is not None else 5
        vc = v_cycles if v_cycles is not None else 1
        steps = tuple(ScheduleStep(s, vc) for _ in range(reps) for s in sizes)
    elif kind == "fixed":
        if sizes is None:
            sizes = (cap,)
        if len(sizes) != 1:
            raise ValueError("fixed schedule takes exactly one size")
        vc = v_cycles if v_cycles is not None else 1
        steps = (ScheduleStep(sizes[0], vc),)
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    return Schedule(steps, sigma)


def _provisional(graph: Graph, layout: Layout, grid: Grid, state: SolverState,
                 sigma: float, params: SolverParams) -> tuple[float, float]:
    """Energy and density violation of the layout the current displacement
    would produce."""
    disp = DisplacementField.from_reduced(grid, state.u)
    moved = apply_displacement(layout, grid, disp, sigma)
    dens = density(grid, graph, moved, slack=params.slack,
                   fill_factor=params.fill_factor)
    return layout_energy(graph, moved), dens.max_violation


def correct_layout(graph: Graph, layout: Layout, schedule: Schedule,
                   params: SolverParams | None = None) -> tuple[Layout, Trace]:
    """Run the full correction loop; returns the final layout and the trace."""
    if params is None:
        params = SolverParams()
    params.validate()
    trace = Trace()
    layout = layout.copy()
    dens0 = None
    if len(schedule.steps):
        g0 = Grid(layout.domain, schedule.steps[0].size, schedule.steps[0].size)
        dens0 = density(g0, graph, layout, slack=params.slack,
                        fill_factor=params.fill_factor)
    trace.add(0, schedule.steps[0].size if len(schedule.steps) else 0, "baseline", 0,
              layout_energy(graph, layout),
              dens0.max_violation if dens0 is not None else 0.0, 0.0)

    for step_idx, step in enumerate(schedule.steps):
        try:
            layout = _run_step(graph, layout, step, step_idx, schedule.sigma,
                               params, trace)
        except SolverError as exc:
            raise SolverError(
                f"step {step_idx} (grid {step.size}): {exc}") from exc
    return layout, trace


def _run_step(graph: Graph, layout: Layout, step: ScheduleStep, step_idx: int,
              sigma: float, params: SolverParams, trace: Trace) -> Layout:
    n = step.size
    if not _is_pow2(n):
        raise ValueError(f"grid size {n} is not a power of two")
    grid = Grid(layout.domain, n, n)
    dens = density(grid, graph, layout, slack=params.slack,
                   fill_factor=params.fill_factor)
    quad = assemble_energy(graph, layout, grid)
    cons = assemble_constraints(grid, dens, equality=params.equality)
    system = assemble_saddle(quad, cons, grid, beta=params.beta)
    state = SolverState.zeros(system)

    if n <= params.coarsest_size:
        t0 = time.perf_counter()
        coarsest_solve(system, state, params, trace.diagnostics)
        ms = (time.perf_counter() - t0) * 1e3
        e, viol = _provisional(graph, layout, grid, state, sigma, params)
        trace.add(step_idx, n, "direct", 0, e, viol, ms)
    elif not params.use_coarse:
        sweeps_total = step.v_cycles * (params.nu1 + params.nu2)
        plan = build_sweep_plan(grid, quad.q, cons.a, params.window_size)
        t0 = time.perf_counter()
        window_sweep(system, state, plan, params, trace.diagnostics,
                     sweeps=sweeps_total)
        ms = (time.perf_counter() - t0) * 1e3
        e, viol = _provisional(graph, layout, grid, state, sigma, params)
        trace.add(step_idx, n, "sweep", sweeps_total, e, viol, ms)
    else:
        hier = build_hierarchy(system, params)
        for cycle in range(step.v_cycles):
            t0 = time.perf_counter()
            v_cycle(hier, state, params, trace.diagnostics)
            ms = (time.perf_counter() - t0) * 1e3
            e, viol = _provisional(graph, layout, grid, state, sigma, params)
            trace.add(step_idx, n, "v_cycle", cycle, e, viol, ms)

    disp = DisplacementField.from_reduced(grid, state.u)
    moved = apply_displacement(layout, grid, disp, sigma)
    dens_after = density(grid, graph, moved, slack=params.slack,
                         fill_factor=params.fill_factor)
    trace.add(step_idx, n, "applied", 0, layout_energy(graph, moved),
              dens_after.max_violation, 0.0)
    return moved
