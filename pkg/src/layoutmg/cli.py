"""Command-line interface: generate, solve, render, trace-plot.

Configuration precedence is flags > config file (--config, JSON) > built-in
defaults.  Exit codes: 0 success, 1 runtime failure, 2 usage error.  The
environment variable LAYOUTMG_THREADS (default 1) enables parallel window
solves within a red-black color group.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass, fields

from .driver import Schedule, correct_layout, make_schedule
from .graph import (GraphFormatError, InstanceSpec, Rect, generate_instance,
                    read_graph, read_layout, write_graph, write_layout)
from .params import SolverParams, threads_from_env
from .render import render_svg, trace_plot_svg


@dataclass
class RunConfig:
    """Solve-run configuration; defaults mirror the solver's working values."""

    schedule: str = "fmg"
    sizes: tuple[int, ...] | None = None
    v_cycles: int | None = None
    repeats: int | None = None
    nu1: int = 3
    nu2: int = 3
    window_size: int = 4
    window_max_iters: int = 6
    window_beta: float = 1.0
    eps_factor: float = 1e-4
    beta: float | None = None
    sigma: float = 1.0
    slack: float = 0.05
    fill_factor: float | None = None
    equality: bool = False
    use_coarse: bool = True
    seed: int = 0

    def dump(self) -> dict:
        return asdict(self)

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        known = {f.name for f in fields(cls)}
        bad = set(data) - known
        if bad:
            raise ValueError(f"unknown config keys: {sorted(bad)}")
        if "sizes" in data and data["sizes"] is not None:
            data["sizes"] = tuple(int(s) for s in data["sizes"])
        return cls(**data)

    def overlay(self, args: argparse.Namespace) -> "RunConfig":
        cfg = RunConfig(**asdict(self))
        for f in fields(RunConfig):
            val = getattr(args, f.name, None)
            if val is not None:
                setattr(cfg, f.name, val)
        return cfg

    def solver_params(self) -> SolverParams:
        return SolverParams(
            nu1=self.nu1, nu2=self.nu2, window_size=self.window_size,
            window_max_iters=self.window_max_iters, window_beta=self.window_beta,
            eps_factor=self.eps_factor, beta=self.beta, sigma=self.sigma,
            slack=self.slack, fill_factor=self.fill_factor, equality=self.equality,
            use_coarse=self.use_coarse, threads=threads_from_env())


def _parse_sizes(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}") from None


def _parse_rect(text: str) -> Rect:
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("rectangle needs x0,y0,x1,y1")
    return Rect(*(float(p) for p in parts))


def _parse_holes(text: str) -> tuple[Rect, ...]:
    return tuple(_parse_rect(part) for part in text.split(";") if part.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layoutmg",
        description="Correct 2D graph layouts under planar equidensity constraints.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a test instance to a graph file")
    gen.add_argument("--kind", required=True,
                     choices=["mesh", "mesh_holes", "binary_tree", "snake"])
    gen.add_argument("--rows", type=int)
    gen.add_argument("--cols", type=int)
    gen.add_argument("--perturb", type=float, default=0.0, metavar="D")
    gen.add_argument("--compress", action="store_true")
    gen.add_argument("--extra-edges", type=int, default=0)
    gen.add_argument("--length", type=int, default=16, help="snake chain length")
    gen.add_argument("--levels", type=int, default=5, help="binary tree levels")
    gen.add_argument("--holes", type=_parse_holes, default=(),
                     help="semicolon-separated x0,y0,x1,y1 rectangles")
    gen.add_argument("--domain", type=_parse_rect, default=None,
                     help="override the domain rectangle x0,y0,x1,y1")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("-o", "--output", required=True)

    sol = sub.add_parser("solve", help="run the correction solver on a graph file")
    sol.add_argument("-i", "--input", required=True)
    sol.add_argument("-o", "--output", required=True, help="layout file to write")
    sol.add_argument("--trace", help="write the per-cycle trace CSV here")
    sol.add_argument("--svg", help="render the final layout to this SVG")
    sol.add_argument("--config", help="JSON config file (flags still win)")
    sol.add_argument("--schedule", choices=["fmg", "alternating", "fixed"])
    sol.add_argument("--sizes", type=_parse_sizes, metavar="N1,N2,...")
    sol.add_argument("--v-cycles", type=int, dest="v_cycles")
    sol.add_argument("--repeats", type=int)
    sol.add_argument("--nu1", type=int)
    sol.add_argument("--nu2", type=int)
    sol.add_argument("-m", "--window-size", type=int, dest="window_size")
    sol.add_argument("--beta", type=float)
    sol.add_argument("--sigma", type=float)
    sol.add_argument("--slack", type=float)
    sol.add_argument("--fill-factor", type=float, dest="fill_factor")
    sol.add_argument("--equality", action="store_const", const=True, default=None)
    sol.add_argument("--relax-only", action="store_const", const=False, default=None,
                     dest="use_coarse", help="window sweeps only, no coarse levels")

    ren = sub.add_parser("render", help="render a graph (+ optional layout) to SVG")
    ren.add_argument("-i", "--input", required=True)
    ren.add_argument("--layout", help="layout file overriding the positions")
    ren.add_argument("-o", "--output", required=True)
    ren.add_argument("--show-grid", type=int, default=0, metavar="N")
    ren.add_argument("--no-edges", action="store_true")

    tpl = sub.add_parser("trace-plot", help="energy-vs-cycle SVG from a trace CSV")
    tpl.add_argument("-i", "--input", required=True)
    tpl.add_argument("-o", "--output", required=True)
    return parser


def cmd_generate(args: argparse.Namespace) -> int:
    spec = InstanceSpec(
        kind=args.kind, rows=args.rows or 8, cols=args.cols or 8, d=args.perturb,
        compress=args.compress, extra_edges=args.extra_edges, seed=args.seed,
        length=args.length, levels=args.levels, holes=args.holes, domain=args.domain)
    graph, layout = generate_instance(spec)
    write_graph(args.output, graph, layout)
    return 0


def cmd_solve(args: argparse.Namespace) -> int:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    cfg = cfg.overlay(args)
    graph, layout = read_graph(args.input)
    schedule = make_schedule(cfg.schedule, graph.n_vertices, sizes=cfg.sizes,
                             v_cycles=cfg.v_cycles, repeats=cfg.repeats,
                             sigma=cfg.sigma)
    final, trace = correct_layout(graph, layout, schedule, cfg.solver_params())
    write_layout(args.output, graph, final)
    if args.trace:
        trace.to_csv(args.trace)
    if args.svg:
        with open(args.svg, "w", encoding="utf-8") as fh:
            fh.write(render_svg(graph, final))
    return 0


def cmd_render(args: argparse.Namespace) -> int:
    graph, layout = read_graph(args.input)
    if args.layout:
        lg, ll = read_layout(args.layout)
        if lg.n_vertices != graph.n_vertices:
            raise ValueError("layout file vertex count does not match the graph")
        layout = ll
    svg = render_svg(graph, layout, show_edges=not args.no_edges,
                     grid_lines=args.show_grid)
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(svg)
    return 0


def cmd_trace_plot(args: argparse.Namespace) -> int:
    energies: list[float] = []
    with open(args.input, "r", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["phase"] in ("v_cycle", "direct", "sweep"):
                energies.append(float(row["energy"]))
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(trace_plot_svg(energies))
    return 0


_COMMANDS = {
    "generate": cmd_generate,
    "solve": cmd_solve,
    "render": cmd_render,
    "trace-plot": cmd_trace_plot,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "generate" and args.kind in ("mesh", "mesh_holes") \
            and (args.rows is None or args.cols is None):
        parser.error(f"--kind {args.kind} requires --rows and --cols")
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, GraphFormatError, OSError, RuntimeError) as exc:
        print(f"layoutmg: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
