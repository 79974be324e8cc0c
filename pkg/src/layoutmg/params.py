"""Solver parameter bundle and run diagnostics shared across modules."""

from __future__ import annotations

import os
from dataclasses import dataclass, field


def threads_from_env() -> int:
    try:
        return max(1, int(os.environ.get("LAYOUTMG_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class SolverParams:
    """Tunable knobs of the multigrid correction solver.

    Defaults follow the reported working configuration: 3 pre- and 3
    post-relaxation sweeps, 4x4-square windows capped at 6 active-set
    iterations with a unit stability weight on the window correction, and an
    activation margin of 1e-4 times the square area.
    """

    nu1: int = 3
    nu2: int = 3
    window_size: int = 4
    window_max_iters: int = 6
    window_beta: float = 1.0
    coarse_beta: float = 1.0
    eps_factor: float = 1e-4
    coarsest_size: int = 4
    sigma: float = 1.0
    slack: float = 0.05
    fill_factor: float | None = None
    beta: float | None = None
    equality: bool = False
    use_coarse: bool = True
    scheme: str = "fas"
    threads: int = field(default_factory=threads_from_env)

    def validate(self) -> None:
        if self.nu1 < 0 or self.nu2 < 0:
            raise ValueError("sweep counts must be >= 0")
        if self.window_size < 2 or self.window_size % 2:
            raise ValueError("window size must be an even integer >= 2")
        if self.window_max_iters < 1:
            raise ValueError("window_max_iters must be >= 1")
        if not 0 < self.sigma <= 1:
            raise ValueError("sigma must be in (0, 1]")
        if self.eps_factor <= 0:
            raise ValueError("eps_factor must be positive")
        if self.scheme not in ("fas", "cs"):
            raise ValueError("scheme must be 'fas' or 'cs'")


@dataclass
class Diagnostics:
    """Counters aggregated over a solve."""

    skipped_windows: int = 0
    beta_retries: int = 0

    def add(self, skipped: int, retries: int) -> None:
        self.skipped_windows += skipped
        self.beta_retries += retries
