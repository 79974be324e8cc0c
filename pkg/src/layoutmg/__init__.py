"""Multigrid correction of 2D graph layouts under planar equidensity
constraints: quadratic connection-length energy over grid-point displacement
fields, per-square density (in)equality rows, window active-set relaxation,
Galerkin/full-approximation coarsening, V-cycles, and an FMG outer loop."""

from .assembly import (ConstraintSet, QuadraticForm, SaddleSystem, SolverState,
                       assemble_constraints, assemble_energy, assemble_saddle,
                       evaluate_energy, layout_energy, residuals, saddle_matrix)
from .driver import (Schedule, ScheduleStep, Trace, TraceRecord, correct_layout,
                     make_schedule, size_cap)
from .graph import (Graph, GraphFormatError, InstanceSpec, Layout, Rect,
                    generate_instance, read_graph, read_layout, write_graph,
                    write_layout)
from .grid import (DensityField, DisplacementField, Grid, apply_displacement,
                   coarsen_grid, density, stencil_of)
from .multigrid import (Hierarchy, SolverError, build_hierarchy, coarsest_solve,
                        v_cycle)
from .params import Diagnostics, SolverParams
from .relax import build_sweep_plan, energy_trace_sweeps, single_window_solve, window_sweep
from .render import render_svg, trace_plot_svg

__version__ = "0.1.0"

__all__ = [
    "ConstraintSet", "DensityField", "Diagnostics", "DisplacementField", "Graph",
    "GraphFormatError", "Grid", "Hierarchy", "InstanceSpec", "Layout",
    "QuadraticForm", "Rect", "SaddleSystem", "Schedule", "ScheduleStep",
    "SolverError", "SolverParams", "SolverState", "Trace", "TraceRecord",
    "apply_displacement", "assemble_constraints", "assemble_energy",
    "assemble_saddle", "build_hierarchy", "build_sweep_plan", "coarsen_grid",
    "coarsest_solve", "correct_layout", "density", "energy_trace_sweeps",
    "evaluate_energy", "generate_instance", "layout_energy", "make_schedule",
    "read_graph", "read_layout", "render_svg", "residuals", "saddle_matrix",
    "single_window_solve", "size_cap", "stencil_of", "trace_plot_svg", "v_cycle",
    "window_sweep", "write_graph", "write_layout",
]
