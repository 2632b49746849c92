"""Euler-Maruyama for the one-dimensional SDE reflected at 0.

One step with the drift frozen at ``X_k``:

    X_{k+1} = X_k + b(X_k) h + sigma dW_k + max(0, A_k - X_k)

where ``A_k`` is the supremum over the step of ``-b(X_k)(s - kh) - sigma (W_s - W_kh)``.
``(dW_k, A_k)`` is drawn exactly with :func:`sample_running_maximum` using scale
``-sigma`` and drift ``-b(X_k)``; the path inside a step is never built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .em import FunctionalAccumulator, Grid, GridPath, NonFiniteDriftError, drift_at, nested_ratios
from .mc import McEstimate, run_mc
from .model import PathFunctional, ProblemKind, SdeProblem, validate_problem
from .sampling import RngStream, exponential_variate, running_maximum_from, sample_running_maximum


def skorohod_map_discrete(z: float, y) -> tuple[np.ndarray, np.ndarray]:
    """Discrete Skorohod reflection of ``z + y`` at 0.

    ``l_k = max(0, max_{j<=k}(-z - y_j))`` and ``x_k = z + y_k + l_k``.
    """
    if z < 0:
        raise ValueError("starting point z must be >= 0")
    y = np.asarray(y, dtype=float)
    if y.size and y[0] != 0:
        raise ValueError("y must start at 0")
    ell = np.maximum(0.0, np.maximum.accumulate(-z - y))
    return z + y + ell, ell


@dataclass(frozen=True)
class ReflectedState:
    position: np.ndarray
    local_time: np.ndarray
    step_index: int = 0

    @classmethod
    def start(cls, x0: float, n_paths: int = 1) -> "ReflectedState":
        if x0 < 0:
            raise ValueError("reflected scheme starts in [0, inf)")
        return cls(np.full(n_paths, float(x0)), np.zeros(n_paths), 0)


def reflect_step(x: np.ndarray, b_val, sigma: float, h: float, u: np.ndarray, sup: np.ndarray):
    """Advance positions given the increment ``u`` and step supremum ``sup``; returns (x, dL)."""
    push = np.maximum(0.0, sup - x)
    # rounding guard: the exact update is >= 0 because sup >= -b h - sigma u
    return np.maximum(x + b_val * h + sigma * u + push, 0.0), push


def reflected_em_step(state: ReflectedState, b_val, sigma: float, h: float, stream: RngStream) -> ReflectedState:
    """One reflected EM step for every path in ``state``; ``b_val`` is ``b(X_k)`` per path."""
    x = np.asarray(state.position, dtype=float)
    if np.any(x < 0):
        raise ValueError("reflected positions must be >= 0")
    draw = sample_running_maximum(stream, -sigma, -np.asarray(b_val, dtype=float), h, size=x.shape)
    x_new, push = reflect_step(x, b_val, sigma, h, draw.increment, draw.running_max)
    return ReflectedState(x_new, state.local_time + push, state.step_index + 1)


def _scalar_sigma(problem: SdeProblem) -> float:
    if problem.kind is not ProblemKind.REFLECTED:
        raise ValueError(f"expected a reflected problem, got {problem.kind.value}")
    validate_problem(problem).raise_if_invalid()
    return float(problem.diffusion.sigma[0, 0])


def _drift_1d(problem: SdeProblem, x: np.ndarray) -> np.ndarray:
    return drift_at(problem, x[:, None])[:, 0]


def simulate_reflected_em_path(problem: SdeProblem, grid: Grid, stream: RngStream, n_paths: int = 1) -> GridPath:
    """Reflected EM paths with the local-time series; states shape ``(n+1, n_paths, 1)``."""
    sigma = _scalar_sigma(problem)
    state = ReflectedState.start(problem.x0[0], n_paths)
    xs = np.empty((grid.n_steps + 1, n_paths))
    ls = np.empty_like(xs)
    incs = np.empty((grid.n_steps, n_paths))
    xs[0], ls[0] = state.position, state.local_time
    for k in range(grid.n_steps):
        b = _drift_1d(problem, state.position)
        if np.isnan(b).any():
            raise NonFiniteDriftError(f"drift returned non-finite values at step {k}")
        draw = sample_running_maximum(stream, -sigma, -b, grid.h, size=(n_paths,))
        x_new, push = reflect_step(state.position, b, sigma, grid.h, draw.increment, draw.running_max)
        state = ReflectedState(x_new, state.local_time + push, k + 1)
        xs[k + 1], ls[k + 1], incs[k] = state.position, state.local_time, draw.increment
    return GridPath(grid, xs[:, :, None], incs[:, :, None], ls)


def reflected_samples(problem: SdeProblem, functional: PathFunctional, grid: Grid, stream: RngStream,
                      n_paths: int) -> np.ndarray:
    sigma = _scalar_sigma(problem)
    x = np.full(n_paths, float(problem.x0[0]))
    acc = FunctionalAccumulator(functional, grid)
    for k in range(grid.n_steps):
        acc.visit(k, x[:, None])
        b = _drift_1d(problem, x)
        draw = sample_running_maximum(stream, -sigma, -b, grid.h, size=(n_paths,))
        x, _ = reflect_step(x, b, sigma, grid.h, draw.increment, draw.running_max)
    acc.visit(grid.n_steps, x[:, None])
    return acc.value(x[:, None])


def reflected_sampler(problem: SdeProblem, functional: PathFunctional, grid: Grid) -> Callable[[RngStream, int], np.ndarray]:
    _scalar_sigma(problem)
    return lambda stream, n: reflected_samples(problem, functional, grid, stream, n)


def reflected_ladder_samples(problem: SdeProblem, functional: PathFunctional, fine: Grid,
                             coarse: Sequence[Grid], stream: RngStream, n_paths: int) -> np.ndarray:
    """Reflected EM on the fine grid and every coarse grid from shared randomness.

    Each fine sub-step carries a Gaussian increment and an independent
    exponential. A coarse step's supremum is the maximum over its fine
    sub-steps of (offset at the sub-step start + sub-step supremum), each
    sub-step supremum given by the running-maximum formula with the coarse
    level's frozen drift. Given the increments, sub-step suprema are
    conditionally independent and their conditional law depends on the drift
    only through the sub-step endpoint, so every level keeps its exact law.

    Returns shape ``(n_paths, 1 + len(coarse))``; column 0 is the fine grid.
    """
    sigma = _scalar_sigma(problem)
    ratios = nested_ratios(fine, coarse)
    hf = fine.h
    sd = math.sqrt(hf)
    a = -sigma
    x0 = float(problem.x0[0])

    x_ref = np.full(n_paths, x0)
    acc_ref = FunctionalAccumulator(functional, fine)
    acc_ref.visit(0, x_ref[:, None])
    levels = [_CoarseLevel(g, r, np.full(n_paths, x0), FunctionalAccumulator(functional, g))
              for g, r in zip(coarse, ratios)]
    for lv in levels:
        lv.acc.visit(0, lv.x[:, None])

    for j in range(fine.n_steps):
        u = sd * stream.standard_normal(n_paths)
        v = exponential_variate(stream, 2.0 * hf, size=n_paths)

        b = _drift_1d(problem, x_ref)
        sup = running_maximum_from(u, v, a, -b, hf)
        x_ref, _ = reflect_step(x_ref, b, sigma, hf, u, sup)
        acc_ref.visit(j + 1, x_ref[:, None])

        for lv in levels:
            if j % lv.ratio == 0:
                lv.begin_step(_drift_1d(problem, lv.x))
            c = -lv.b
            lv.sup = np.maximum(lv.sup, lv.offset + running_maximum_from(u, v, a, c, hf))
            lv.offset += a * u + c * hf
            lv.dw += u
            if (j + 1) % lv.ratio == 0:
                lv.x, _ = reflect_step(lv.x, lv.b, sigma, lv.grid.h, lv.dw, lv.sup)
                lv.acc.visit((j + 1) // lv.ratio, lv.x[:, None])

    cols = [acc_ref.value(x_ref[:, None])] + [lv.acc.value(lv.x[:, None]) for lv in levels]
    return np.column_stack(cols)


@dataclass
class _CoarseLevel:
    """State of one coarse level inside :func:`reflected_ladder_samples`."""

    grid: Grid
    ratio: int
    x: np.ndarray
    acc: FunctionalAccumulator
    b: np.ndarray = None
    offset: np.ndarray = None  # a (W_s - W_k) + c (s - t_k) at the current fine time
    sup: np.ndarray = None
    dw: np.ndarray = None

    def begin_step(self, b: np.ndarray) -> None:
        self.b = b
        self.offset = np.zeros_like(self.x)
        self.sup = np.zeros_like(self.x)
        self.dw = np.zeros_like(self.x)


@dataclass(frozen=True)
class ReflectedLawCheck:
    mean: McEstimate
    expected_mean: float
    ks_statistic: float
    ks_pvalue: float
    mean_tolerance: float = 0.01
    significance: float = 1e-3

    @property
    def passed(self) -> bool:
        return abs(self.mean.mean - self.expected_mean) <= self.mean_tolerance and self.ks_pvalue > self.significance

    def to_dict(self) -> dict:
        return {"mean": self.mean.mean, "stderr": self.mean.stderr, "expected_mean": self.expected_mean,
                "ks_statistic": self.ks_statistic, "ks_pvalue": self.ks_pvalue,
                "mean_tolerance": self.mean_tolerance, "significance": self.significance, "passed": self.passed}


def reflected_law_check(problem: SdeProblem, grid: Grid, n_paths: int, master_seed: int = 0,
                        mean_tolerance: float = 0.01, significance: float = 1e-3) -> ReflectedLawCheck:
    """Compare ``X^h_T`` of driftless reflected motion from 0 with ``|sigma W_T|`` (folded normal)."""
    sigma = _scalar_sigma(problem)
    if problem.x0[0] != 0.0:
        raise ValueError("the folded-normal reference needs x0 = 0")
    probe = np.linspace(-5, 5, 11)[:, None]
    if np.any(drift_at(problem, probe) != 0):
        raise ValueError("the folded-normal reference needs zero drift")
    terminal = PathFunctional.terminal(lambda x: x[:, 0], name="identity")
    xt = reflected_samples(problem, terminal, grid, RngStream(master_seed, 0), n_paths)
    est = McEstimate(float(xt.mean()), float(xt.std(ddof=1) / math.sqrt(n_paths)), n_paths)
    scale = abs(sigma) * math.sqrt(problem.horizon)
    ks = stats.kstest(xt, stats.halfnorm(scale=scale).cdf)
    return ReflectedLawCheck(est, scale * math.sqrt(2 / math.pi), float(ks.statistic), float(ks.pvalue),
                             mean_tolerance, significance)


def reflected_estimate(problem: SdeProblem, functional: PathFunctional, grid: Grid, n_paths: int,
                       master_seed: int = 0, n_batches: Optional[int] = None) -> McEstimate:
    return run_mc(reflected_sampler(problem, functional, grid), n_paths, n_batches, master_seed)
