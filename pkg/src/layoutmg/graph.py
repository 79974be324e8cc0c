"""Graph and layout data model, test-instance generators, and file I/O.

A problem instance is a weighted undirected graph whose vertices are
axis-aligned rectangles (each with a positive area), together with a layout
assigning a center-of-mass coordinate to every vertex inside a fixed
rectangular domain.

All generators are deterministic: the instance is a pure function of the
``InstanceSpec`` (including its seed).  Randomness comes from numpy's
``default_rng`` (PCG64), so instances are reproducible across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np


class Rect(NamedTuple):
    """Axis-aligned rectangle (x0, y0) .. (x1, y1)."""

    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1


class GraphFormatError(ValueError):
    """Malformed graph/layout file; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass
class Graph:
    """Weighted undirected graph with rectangular vertex footprints.

    Vertex ids are implicit 0..n-1.  ``edges`` is an (m, 2) integer array of
    endpoint pairs and ``weights`` the matching non-negative edge weights.
    """

    widths: np.ndarray
    heights: np.ndarray
    edges: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.widths = np.asarray(self.widths, dtype=float)
        self.heights = np.asarray(self.heights, dtype=float)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.weights = np.asarray(self.weights, dtype=float)
        self.validate()

    def validate(self) -> None:
        n = self.n_vertices
        if self.heights.shape != self.widths.shape:
            raise ValueError("widths/heights length mismatch")
        if np.any(self.widths <= 0) or np.any(self.heights <= 0):
            raise ValueError("vertex areas must be positive")
        if len(self.weights) != len(self.edges):
            raise ValueError("edges/weights length mismatch")
        if len(self.edges):
            if self.edges.min() < 0 or self.edges.max() >= n:
                raise ValueError("edge endpoint out of range")
            if np.any(self.edges[:, 0] == self.edges[:, 1]):
                raise ValueError("self-loops are not allowed")
            if np.any(self.weights < 0):
                raise ValueError("edge weights must be non-negative")
            lo = self.edges.min(axis=1)
            hi = self.edges.max(axis=1)
            keys = lo * n + hi
            if len(np.unique(keys)) != len(keys):
                raise ValueError("duplicate edge between a vertex pair")

    @property
    def n_vertices(self) -> int:
        return len(self.widths)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def areas(self) -> np.ndarray:
        return self.widths * self.heights

    @property
    def total_area(self) -> float:
        return float(np.sum(self.areas))


@dataclass
class Layout:
    """Per-vertex center coordinates inside a rectangular domain.

    Centers are clamped into the domain on construction, so the containment
    invariant holds for every Layout that exists.
    """

    x: np.ndarray
    y: np.ndarray
    domain: Rect

    def __post_init__(self):
        self.x = np.clip(np.asarray(self.x, dtype=float), self.domain.x0, self.domain.x1)
        self.y = np.clip(np.asarray(self.y, dtype=float), self.domain.y0, self.domain.y1)
        if self.x.shape != self.y.shape:
            raise ValueError("x/y length mismatch")

    @property
    def n(self) -> int:
        return len(self.x)

    def copy(self) -> "Layout":
        return Layout(self.x.copy(), self.y.copy(), self.domain)

    def bounding_box(self, graph: Graph) -> Rect:
        """Bounding box of the vertex rectangles (not just the centers)."""
        if self.n == 0:
            return self.domain
        hw = graph.widths / 2
        hh = graph.heights / 2
        return Rect(
            float(np.min(self.x - hw)),
            float(np.min(self.y - hh)),
            float(np.max(self.x + hw)),
            float(np.max(self.y + hh)),
        )


@dataclass(frozen=True)
class InstanceSpec:
    """Parameters of a generated test instance.

    kind: one of mesh, mesh_holes, binary_tree, snake, from_file.
    rows/cols apply to meshes, length to the snake chain, levels to the tree.
    ``d`` is the per-coordinate perturbation bound; each vertex is shifted
    independently and uniformly in [-d, d] in x and in y.  ``compress`` maps
    the layout affinely into the bottom-left quarter of the domain.
    ``holes`` is a sequence of rectangles whose interior vertices are removed
    (mesh_holes only).  ``domain`` overrides the default domain, which is the
    bounding box of the unperturbed instance expanded by one unit square on
    each side.
    """

    kind: str = "mesh"
    rows: int = 8
    cols: int = 8
    d: float = 0.0
    compress: bool = False
    extra_edges: int = 0
    seed: int = 0
    length: int = 16
    levels: int = 5
    holes: tuple[Rect, ...] = ()
    domain: Rect | None = None
    path: str | None = None

    def validate(self) -> None:
        if self.kind not in ("mesh", "mesh_holes", "binary_tree", "snake", "from_file"):
            raise ValueError(f"unknown instance kind {self.kind!r}")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be >= 1")
        if self.d < 0:
            raise ValueError("perturbation bound d must be >= 0")
        if self.extra_edges < 0:
            raise ValueError("extra_edges must be >= 0")
        if self.kind == "snake" and self.length < 1:
            raise ValueError("snake length must be >= 1")
        if self.kind == "binary_tree" and self.levels < 1:
            raise ValueError("tree levels must be >= 1")
        if self.kind == "from_file" and not self.path:
            raise ValueError("from_file requires a path")


def _default_domain(graph: Graph, x: np.ndarray, y: np.ndarray) -> Rect:
    # bounding box of the vertex rectangles, expanded by one unit square per side
    hw = graph.widths / 2
    hh = graph.heights / 2
    return Rect(
        float(np.min(x - hw)) - 1.0,
        float(np.min(y - hh)) - 1.0,
        float(np.max(x + hw)) + 1.0,
        float(np.max(y + hh)) + 1.0,
    )


def _mesh_edges(rows: int, cols: int) -> list[tuple[int, int]]:
    edges = []
    for r in range(rows):
        for c in range(cols - 1):
            edges.append((r * cols + c, r * cols + c + 1))
    for r in range(rows - 1):
        for c in range(cols):
            edges.append((r * cols + c, (r + 1) * cols + c))
    return edges


def _add_random_edges(rng: np.random.Generator, n: int, edges: list[tuple[int, int]],
                      count: int) -> list[tuple[int, int]]:
    existing = {(min(i, j), max(i, j)) for i, j in edges}
    possible = n * (n - 1) // 2 - len(existing)
    if count > possible:
        raise ValueError(f"requested {count} extra edges but only {possible} pairs remain")
    added: list[tuple[int, int]] = []
    while len(added) < count:
        i = int(rng.integers(n))
        j = int(rng.integers(n))
        if i == j:
            continue
        key = (min(i, j), max(i, j))
        if key in existing:
            continue
        existing.add(key)
        added.append(key)
    return added


def generate_instance(spec: InstanceSpec) -> tuple[Graph, Layout]:
    """Build the deterministic (Graph, Layout) described by ``spec``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)

    if spec.kind == "from_file":
        return read_graph(spec.path)

    if spec.kind in ("mesh", "mesh_holes"):
        rows, cols = spec.rows, spec.cols
        n = rows * cols
        x = np.tile(np.arange(cols, dtype=float), rows)
        y = np.repeat(np.arange(rows, dtype=float), cols)
        edges = _mesh_edges(rows, cols)
        if spec.kind == "mesh_holes":
            keep = np.ones(n, dtype=bool)
            for hole in spec.holes:
                inside = (x > hole.x0) & (x < hole.x1) & (y > hole.y0) & (y < hole.y1)
                keep &= ~inside
            if not keep.any():
                raise ValueError("hole rectangles removed every vertex")
            remap = -np.ones(n, dtype=np.int64)
            remap[keep] = np.arange(keep.sum())
            edges = [(int(remap[i]), int(remap[j])) for i, j in edges if keep[i] and keep[j]]
            x, y = x[keep], y[keep]
            n = int(keep.sum())
        weights = [1.0] * len(edges)
        widths = np.ones(n)
        heights = np.ones(n)
        graph = Graph(widths, heights, np.array(edges, dtype=np.int64).reshape(-1, 2),
                      np.array(weights))
        # domain is fixed by the unperturbed instance
        domain = spec.domain or _default_domain(graph, x, y)

        if spec.d > 0:
            shifts = rng.uniform(-spec.d, spec.d, size=(n, 2))
            x = x + shifts[:, 0]
            y = y + shifts[:, 1]
        if spec.compress:
            x = domain.x0 + (x - domain.x0) / 2
            y = domain.y0 + (y - domain.y0) / 2

        if spec.extra_edges:
            extra = _add_random_edges(rng, n, edges, spec.extra_edges)
            edges = edges + extra
            weights = weights + [1.0] * len(extra)
            graph = Graph(widths, heights, np.array(edges, dtype=np.int64),
                          np.array(weights))
        return graph, Layout(x, y, domain)

    if spec.kind == "snake":
        n = spec.length
        x = np.arange(n, dtype=float)
        y = np.zeros(n)
        edges = [(i, i + 1) for i in range(n - 1)]
        graph = Graph(np.ones(n), np.ones(n), np.array(edges, dtype=np.int64).reshape(-1, 2),
                      np.ones(len(edges)))
        domain = spec.domain or _default_domain(graph, x, y)
        return graph, Layout(x, y, domain)

    # binary_tree: heap-numbered, level-k vertex area halves per level (root largest)
    levels = spec.levels
    n = 2 ** levels - 1
    areas = np.empty(n)
    for k in range(1, levels + 1):
        first = 2 ** (k - 1) - 1
        areas[first: 2 ** k - 1] = 2.0 ** (levels - k)
    sides = np.sqrt(areas)
    edges = [(p, c) for p in range(n) for c in (2 * p + 1, 2 * p + 2) if c < n]
    graph = Graph(sides, sides, np.array(edges, dtype=np.int64).reshape(-1, 2),
                  np.ones(len(edges)))
    side = math.ceil(math.sqrt(4.0 * graph.total_area))
    domain = spec.domain or Rect(0.0, 0.0, float(side), float(side))
    margin = float(sides.max()) / 2
    x = rng.uniform(domain.x0 + margin, domain.x1 - margin, n)
    y = rng.uniform(domain.y0 + margin, domain.y1 - margin, n)
    return graph, Layout(x, y, domain)


# ---------------------------------------------------------------------------
# file format
#
#   # comments allowed, tokens whitespace separated
#   D x0 y0 X Y
#   V n
#   id width height x y          (n lines, ids are a permutation of 0..n-1)
#   E m
#   i j w                        (m lines)
#
# A layout file is the same with the E block omitted.  Coordinates are
# written with 17 significant digits so write/read round-trips exactly.
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _tokens(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def _parse(path: str, need_edges: bool):
    it = _tokens(path)

    def next_line(what: str):
        try:
            return next(it)
        except StopIteration:
            raise GraphFormatError(f"unexpected end of file, expected {what}") from None

    lineno, toks = next_line("domain line 'D x0 y0 X Y'")
    if toks[0] != "D" or len(toks) != 5:
        raise GraphFormatError("expected 'D x0 y0 X Y'", lineno)
    try:
        domain = Rect(*(float(t) for t in toks[1:]))
    except ValueError:
        raise GraphFormatError("bad number in domain line", lineno) from None
    if domain.width <= 0 or domain.height <= 0:
        raise GraphFormatError("domain rectangle must have positive size", lineno)

    lineno, toks = next_line("vertex count 'V n'")
    if toks[0] != "V" or len(toks) != 2:
        raise GraphFormatError("expected 'V n'", lineno)
    n = int(toks[1])
    if n < 0:
        raise GraphFormatError("vertex count must be >= 0", lineno)

    widths = np.zeros(n)
    heights = np.zeros(n)
    x = np.zeros(n)
    y = np.zeros(n)
    seen = np.zeros(n, dtype=bool)
    for _ in range(n):
        lineno, toks = next_line("vertex line 'id width height x y'")
        if len(toks) != 5:
            raise GraphFormatError("expected 'id width height x y'", lineno)
        try:
            vid = int(toks[0])
            w, h, vx, vy = (float(t) for t in toks[1:])
        except ValueError:
            raise GraphFormatError("bad number in vertex line", lineno) from None
        if not 0 <= vid < n:
            raise GraphFormatError(f"vertex id {vid} out of range 0..{n - 1}", lineno)
        if seen[vid]:
            raise GraphFormatError(f"duplicate vertex id {vid}", lineno)
        if w <= 0 or h <= 0:
            raise GraphFormatError("vertex width/height must be positive", lineno)
        seen[vid] = True
        widths[vid], heights[vid], x[vid], y[vid] = w, h, vx, vy

    edges: list[tuple[int, int]] = []
    weights: list[float] = []
    if need_edges:
        lineno, toks = next_line("edge count 'E m'")
        if toks[0] != "E" or len(toks) != 2:
            raise GraphFormatError("expected 'E m'", lineno)
        m = int(toks[1])
        for _ in range(m):
            lineno, toks = next_line("edge line 'i j w'")
            if len(toks) != 3:
                raise GraphFormatError("expected 'i j w'", lineno)
            try:
                i, j = int(toks[0]), int(toks[1])
                w = float(toks[2])
            except ValueError:
                raise GraphFormatError("bad number in edge line", lineno) from None
            if w < 0:
                raise GraphFormatError("edge weight must be non-negative", lineno)
            if i == j:
                raise GraphFormatError("self-loop edge", lineno)
            edges.append((i, j))
            weights.append(w)

    for lineno, toks in it:
        raise GraphFormatError("trailing content after graph data", lineno)

    graph = Graph(widths, heights, np.array(edges, dtype=np.int64).reshape(-1, 2),
                  np.array(weights))
    return graph, Layout(x, y, domain)


def read_graph(path: str) -> tuple[Graph, Layout]:
    """Parse a full graph file (domain, vertex block, edge block)."""
    return _parse(path, need_edges=True)


def read_layout(path: str) -> tuple[Graph, Layout]:
    """Parse a layout file (domain and vertex block only; no edges)."""
    return _parse(path, need_edges=False)


def _write_vertices(fh, graph: Graph, layout: Layout) -> None:
    d = layout.domain
    fh.write(f"D {_fmt(d.x0)} {_fmt(d.y0)} {_fmt(d.x1)} {_fmt(d.y1)}\n")
    fh.write(f"V {graph.n_vertices}\n")
    for i in range(graph.n_vertices):
        fh.write(f"{i} {_fmt(graph.widths[i])} {_fmt(graph.heights[i])} "
                 f"{_fmt(layout.x[i])} {_fmt(layout.y[i])}\n")


def write_graph(path: str, graph: Graph, layout: Layout) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        _write_vertices(fh, graph, layout)
        fh.write(f"E {graph.n_edges}\n")
        for (i, j), w in zip(graph.edges, graph.weights):
            fh.write(f"{i} {j} {_fmt(w)}\n")


def write_layout(path: str, graph: Graph, layout: Layout) -> None:
    """Write the domain and vertex block only."""
    with open(path, "w", encoding="utf-8") as fh:
        _write_vertices(fh, graph, layout)
