"""Euler-Maruyama simulation on a uniform grid and path functionals.

All simulators are batched: ``n_paths`` paths advance together and stored
states have shape ``(n_steps + 1, n_paths, d)``. Brownian increments are always
drawn one step at a time as a ``(n_paths, d)`` standard normal block scaled by
``sqrt(h)``, so the EM path and the plain Brownian path built from the same
stream are driven by the same increments.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from .model import FunctionalKind, PathFunctional, ProblemKind, SdeProblem, validate_problem
from .sampling import RngStream


class NonFiniteDriftError(FloatingPointError):
    pass


@dataclass(frozen=True)
class Grid:
    horizon: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("a grid needs at least one step")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")

    @classmethod
    def from_step(cls, horizon: float, h: float, rtol: float = 1e-9) -> "Grid":
        """Grid with step ``h``; raises unless ``h = horizon / n`` for an integer n."""
        if not h > 0:
            raise ValueError("h must equal T/n for a positive integer n")
        n = round(horizon / h)
        if n < 1 or abs(n * h - horizon) > rtol * horizon:
            raise ValueError(f"h must equal T/n (got h={h!r}, T={horizon!r})")
        return cls(float(horizon), int(n))

    @property
    def h(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        t = np.arange(self.n_steps + 1) * self.h
        t[-1] = self.horizon
        return t

    def eta(self, s):
        """Left grid point ``k h`` of the step containing ``s``."""
        k = np.minimum(np.floor(np.asarray(s) / self.h), self.n_steps)
        return k * self.h

    def refine(self, factor: int) -> "Grid":
        return Grid(self.horizon, self.n_steps * int(factor))


@dataclass(frozen=True)
class GridPath:
    grid: Grid
    states: np.ndarray  # (n_steps + 1, n_paths, d)
    increments: np.ndarray  # (n_steps, n_paths, d): Brownian increments driving the path
    local_time: Optional[np.ndarray] = None  # (n_steps + 1, n_paths), reflected paths only

    @property
    def n_paths(self) -> int:
        return self.states.shape[1]


def brownian_increments(stream: RngStream, grid: Grid, dim: int, n_paths: int) -> Iterator[np.ndarray]:
    sqrt_h = math.sqrt(grid.h)
    for _ in range(grid.n_steps):
        yield sqrt_h * stream.standard_normal((n_paths, dim))


def drift_at(problem: SdeProblem, x: np.ndarray) -> np.ndarray:
    """Drift evaluated on a ``(n, d)`` batch; non-finite rows are returned as NaN."""
    b = np.asarray(problem.drift(x), dtype=float)
    b = np.broadcast_to(b, x.shape)
    bad = ~np.all(np.isfinite(b), axis=-1)
    if bad.any():
        b = b.copy()
        b[bad] = np.nan
    return b


def simulate_bm_path(stream: RngStream, grid: Grid, dim: int, n_paths: int = 1) -> np.ndarray:
    """Brownian motion on the grid, shape ``(n_steps + 1, n_paths, dim)`` with ``W_0 = 0``."""
    w = np.zeros((grid.n_steps + 1, n_paths, dim))
    for k, dw in enumerate(brownian_increments(stream, grid, dim, n_paths)):
        w[k + 1] = w[k] + dw
    return w


def _x0_batch(problem: SdeProblem, n_paths: int) -> np.ndarray:
    return np.broadcast_to(problem.x0, (n_paths, problem.dim)).copy()


def simulate_em_path(problem: SdeProblem, grid: Grid, stream: RngStream, n_paths: int = 1) -> GridPath:
    """Euler-Maruyama path ``X_{k+1} = X_k + b(X_k) h + sigma dW_k`` with every state stored."""
    if problem.kind is not ProblemKind.PLAIN and problem.kind is not ProblemKind.KILLED:
        raise ValueError(f"simulate_em_path needs a plain or killed problem, got {problem.kind.value}")
    validate_problem(problem).raise_if_invalid()
    sigma_t = problem.diffusion.sigma.T
    h = grid.h
    states = np.empty((grid.n_steps + 1, n_paths, problem.dim))
    incs = np.empty((grid.n_steps, n_paths, problem.dim))
    states[0] = _x0_batch(problem, n_paths)
    for k, dw in enumerate(brownian_increments(stream, grid, problem.dim, n_paths)):
        b = drift_at(problem, states[k])
        if np.isnan(b).any():
            raise NonFiniteDriftError(f"drift returned non-finite values at step {k}")
        states[k + 1] = states[k] + b * h + dw @ sigma_t
        incs[k] = dw
    return GridPath(grid, states, incs)


def evaluate_functional(path: GridPath, functional: PathFunctional) -> np.ndarray:
    """Functional value per path; non-finite values stay NaN/inf and count as invalid downstream."""
    states = path.states
    h = path.grid.h
    if functional.kind is FunctionalKind.TERMINAL:
        return np.asarray(functional.g(states[-1]), dtype=float)
    if functional.kind is FunctionalKind.INTEGRAL:
        total = h * sum(np.asarray(functional.g(states[k]), dtype=float) for k in range(path.grid.n_steps))
        return _apply_outer(functional, total)
    return np.asarray(functional.f(states), dtype=float)


def _apply_outer(functional: PathFunctional, value: np.ndarray) -> np.ndarray:
    return value if functional.f is None else np.asarray(functional.f(value), dtype=float)


class FunctionalAccumulator:
    """Evaluates a functional while a path is generated, without storing the path
    (except for grid-path functionals, which need every state)."""

    def __init__(self, functional: PathFunctional, grid: Grid):
        self.functional = functional
        self.h = grid.h
        self.n_steps = grid.n_steps
        self._sum = 0.0
        self._states: list[np.ndarray] = []

    def visit(self, k: int, x: np.ndarray) -> None:
        """Record the state at grid index ``k`` (called for k = 0..n)."""
        kind = self.functional.kind
        if kind is FunctionalKind.INTEGRAL and k < self.n_steps:
            self._sum = self._sum + np.asarray(self.functional.g(x), dtype=float)
        elif kind is FunctionalKind.GRID_PATH:
            self._states.append(x.copy())

    def value(self, x_final: np.ndarray) -> np.ndarray:
        kind = self.functional.kind
        if kind is FunctionalKind.TERMINAL:
            return np.asarray(self.functional.g(x_final), dtype=float)
        if kind is FunctionalKind.INTEGRAL:
            return _apply_outer(self.functional, self.h * self._sum)
        return np.asarray(self.functional.f(np.stack(self._states)), dtype=float)


def em_functional_samples(problem: SdeProblem, functional: PathFunctional, grid: Grid,
                          stream: RngStream, n_paths: int) -> np.ndarray:
    """``functional(X^h)`` for ``n_paths`` EM paths, streamed (states not stored)."""
    sigma_t = problem.diffusion.sigma.T
    h = grid.h
    x = _x0_batch(problem, n_paths)
    acc = FunctionalAccumulator(functional, grid)
    for k, dw in enumerate(brownian_increments(stream, grid, problem.dim, n_paths)):
        acc.visit(k, x)
        x = x + drift_at(problem, x) * h + dw @ sigma_t
    acc.visit(grid.n_steps, x)
    return acc.value(x)


def em_sampler(problem: SdeProblem, functional: PathFunctional, grid: Grid) -> Callable[[RngStream, int], np.ndarray]:
    validate_problem(problem).raise_if_invalid()
    if problem.kind is not ProblemKind.PLAIN:
        raise ValueError("em_sampler expects a plain problem")

    def sample(stream: RngStream, n: int) -> np.ndarray:
        return em_functional_samples(problem, functional, grid, stream, n)

    return sample


def nested_ratios(fine: Grid, coarse: Sequence[Grid]) -> list[int]:
    """Number of fine steps per coarse step; every coarse grid must nest in ``fine``."""
    out = []
    for g in coarse:
        if not math.isclose(g.horizon, fine.horizon) or fine.n_steps % g.n_steps:
            raise ValueError(f"grid with h={g.h!r} does not nest in the fine grid h={fine.h!r}")
        out.append(fine.n_steps // g.n_steps)
    return out


def em_ladder_samples(problem: SdeProblem, functional: PathFunctional, fine: Grid,
                      coarse: Sequence[Grid], stream: RngStream, n_paths: int) -> np.ndarray:
    """Functional values for the fine grid and every coarse grid, all driven by
    one fine Brownian path (coarse increments are sums of fine ones).

    Returns shape ``(n_paths, 1 + len(coarse))``; column 0 is the fine grid.
    """
    ratios = nested_ratios(fine, coarse)
    sigma_t = problem.diffusion.sigma.T
    grids = [fine, *coarse]
    steps = [1, *ratios]
    xs = [_x0_batch(problem, n_paths) for _ in grids]
    pending = [np.zeros((n_paths, problem.dim)) for _ in grids]
    accs = [FunctionalAccumulator(functional, g) for g in grids]
    for a, x in zip(accs, xs):
        a.visit(0, x)
    for j, dw in enumerate(brownian_increments(stream, fine, problem.dim, n_paths)):
        for i, r in enumerate(steps):
            pending[i] += dw
            if (j + 1) % r:
                continue
            x = xs[i]
            xs[i] = x + drift_at(problem, x) * grids[i].h + pending[i] @ sigma_t
            pending[i] = np.zeros_like(pending[i])
            accs[i].visit((j + 1) // r, xs[i])
    return np.column_stack([a.value(x) for a, x in zip(accs, xs)])


def write_path_csv(path_file, path: GridPath, index: int = 0) -> None:
    """Dump one simulated path as ``t, x1..xd[, L]`` rows (debugging aid)."""
    d = path.states.shape[2]
    header = ["t"] + [f"x{i + 1}" for i in range(d)]
    if path.local_time is not None:
        header.append("L")
    with open(path_file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k, t in enumerate(path.grid.times):
            row = [repr(float(t))] + [repr(float(v)) for v in path.states[k, index]]
            if path.local_time is not None:
                row.append(repr(float(path.local_time[k, index])))
            w.writerow(row)
