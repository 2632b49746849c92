"""Diffusions killed on leaving an open domain, monitored at grid times only."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import ndtr

from .em import Grid, GridPath, brownian_increments, drift_at, nested_ratios
from .girsanov import IDENTITY_STREAM_OFFSET, IdentityCheck, _check_girsanov, weighted_samples
from .mc import LadderPoint, McEstimate, run_mc, run_mc_columns
from .model import DomainSpec, PathFunctional, ProblemKind, SdeProblem, validate_problem
from .sampling import RngStream

Payoff = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ExitRecord:
    """Per-path discrete exit information. ``exit_step`` is -1 for paths that never left."""

    exited: np.ndarray
    exit_step: np.ndarray

    @property
    def alive_at_T(self) -> np.ndarray:
        return ~self.exited


def discrete_exit_time(path: GridPath, domain: DomainSpec) -> ExitRecord:
    """First grid index with ``X^h_{t_k}`` outside the open domain (boundary counts as outside)."""
    if path.states.shape[2] != domain.dim:
        raise ValueError(f"path dimension {path.states.shape[2]} != domain dimension {domain.dim}")
    outside = ~domain.contains(path.states)  # (n+1, n_paths)
    exited = outside.any(axis=0)
    step = np.where(exited, outside.argmax(axis=0), -1)
    return ExitRecord(exited, step)


def _check_killed(problem: SdeProblem, g_sup: float) -> None:
    if problem.kind is not ProblemKind.KILLED:
        raise ValueError(f"expected a killed problem, got {problem.kind.value}")
    validate_problem(problem).raise_if_invalid()
    if not math.isfinite(g_sup):
        raise ValueError("killed payoffs must be bounded: declare a finite sup-norm for g")


def killed_samples(problem: SdeProblem, g: Payoff, grid: Grid, stream: RngStream, n_paths: int) -> np.ndarray:
    """``g(X^h_T) 1(tau^h_D > T)`` per path."""
    sigma_t = problem.diffusion.sigma.T
    x = np.broadcast_to(problem.x0, (n_paths, problem.dim)).copy()
    alive = np.ones(n_paths, dtype=bool)
    for dw in brownian_increments(stream, grid, problem.dim, n_paths):
        x = x + drift_at(problem, x) * grid.h + dw @ sigma_t
        alive &= problem.domain.contains(x)
    value = np.asarray(g(x), dtype=float)
    return np.where(alive, value, 0.0)


def killed_payoff_estimate(problem: SdeProblem, g: Payoff, grid: Grid, n_paths: int, master_seed: int = 0,
                           g_sup: float = 1.0, stream_offset: int = 0,
                           n_batches: Optional[int] = None) -> McEstimate:
    """Estimate ``E[g(X^h_T) 1(tau^h_D > T)]``; ``g_sup`` declares ``sup|g|``."""
    _check_killed(problem, g_sup)
    sampler = lambda s, n: killed_samples(problem, g, grid, s, n)  # noqa: E731
    return run_mc(sampler, n_paths, n_batches, master_seed, stream_offset)


def killed_ladder_samples(problem: SdeProblem, g: Payoff, fine: Grid, coarse: Sequence[Grid],
                          stream: RngStream, n_paths: int) -> np.ndarray:
    """Killed payoffs on nested grids driven by one fine Brownian path; column 0 is the fine grid."""
    ratios = [1, *nested_ratios(fine, coarse)]
    grids = [fine, *coarse]
    sigma_t = problem.diffusion.sigma.T
    xs = [np.broadcast_to(problem.x0, (n_paths, problem.dim)).copy() for _ in grids]
    pending = [np.zeros((n_paths, problem.dim)) for _ in grids]
    alive = [np.ones(n_paths, dtype=bool) for _ in grids]
    for j, dw in enumerate(brownian_increments(stream, fine, problem.dim, n_paths)):
        for i, r in enumerate(ratios):
            pending[i] += dw
            if (j + 1) % r:
                continue
            xs[i] = xs[i] + drift_at(problem, xs[i]) * grids[i].h + pending[i] @ sigma_t
            pending[i][:] = 0.0
            alive[i] &= problem.domain.contains(xs[i])
    return np.column_stack([np.where(a, np.asarray(g(x), dtype=float), 0.0) for a, x in zip(alive, xs)])


def reference_exit_probability(domain: DomainSpec, x0: float, sigma: float, horizon: float,
                               tol: float = 1e-12) -> float:
    """Probability that ``x0 + sigma W`` has NOT left the interval ``(a, b)`` by ``horizon``.

    With ``L = b - a`` and ``s = sigma^2 T``, the eigenfunction expansion of the
    killed heat equation gives

        P(tau > T) = sum_{n odd} 4/(n pi) sin(n pi (x0 - a)/L) exp(-n^2 pi^2 s / (2 L^2)),

    truncated once a term falls below ``tol``. For ``s / L^2 < 0.1`` that series
    converges slowly and the method-of-images sum is used instead:

        P(tau > T) = sum_k [Phi((b - x0 + 2kL)/sqrt(s)) - Phi((a - x0 + 2kL)/sqrt(s))]
                   - [Phi((b + x0 - 2a + 2kL)/sqrt(s)) - Phi((a + x0 - 2a + 2kL)/sqrt(s))]
    """
    if domain.shape != "interval":
        raise ValueError("reference survival probabilities exist for interval domains only")
    if not horizon > 0 or sigma == 0:
        raise ValueError("need horizon > 0 and sigma != 0")
    a, b = float(domain.lower[0]), float(domain.upper[0])
    if not a < x0 < b:
        return 0.0
    length = b - a
    s = sigma * sigma * horizon
    if s / length**2 < 0.1:
        return _survival_images(a, b, x0, s, tol)
    return _survival_eigen(a, length, x0, s, tol)


def _survival_eigen(a: float, length: float, x0: float, s: float, tol: float) -> float:
    total = 0.0
    n = 1
    while True:
        term = 4.0 / (n * math.pi) * math.sin(n * math.pi * (x0 - a) / length) \
            * math.exp(-(n * math.pi) ** 2 * s / (2.0 * length**2))
        total += term
        bound = 4.0 / ((n + 2) * math.pi) * math.exp(-((n + 2) * math.pi) ** 2 * s / (2.0 * length**2))
        if bound < tol:
            break
        n += 2
    return min(max(total, 0.0), 1.0)


def _survival_images(a: float, b: float, x0: float, s: float, tol: float) -> float:
    length = b - a
    sd = math.sqrt(s)
    total = 0.0
    k = 0
    while True:
        part = 0.0
        for kk in ({0} if k == 0 else {k, -k}):
            shift = 2.0 * kk * length
            part += ndtr((b - x0 + shift) / sd) - ndtr((a - x0 + shift) / sd)
            part -= ndtr((b + x0 - 2 * a + shift) / sd) - ndtr((x0 - a + shift) / sd)
        total += part
        if k > 0 and abs(part) < tol:
            break
        k += 1
    return min(max(total, 0.0), 1.0)


reference_survival_probability = reference_exit_probability


def killed_bias_ladder(problem: SdeProblem, g: Payoff, h_ladder: Sequence[float], n_paths: int,
                       reference: float, master_seed: int = 0, g_sup: float = 1.0) -> list[LadderPoint]:
    """Discrete-monitoring bias ``reference - E[g(X^h_T) 1(tau^h > T)]`` along a ladder.

    All levels share each sample's finest Brownian path, so every level is
    estimated from the same ``n_paths`` paths.
    """
    _check_killed(problem, g_sup)
    grids = sorted((Grid.from_step(problem.horizon, h) for h in h_ladder), key=lambda gr: gr.n_steps)
    fine = grids[-1]
    sampler = lambda s, n: killed_ladder_samples(problem, g, fine, grids[:-1], s, n)  # noqa: E731
    est = run_mc_columns(sampler, n_paths, None, master_seed)
    # sampler columns: fine grid first, then the coarser grids in ascending n_steps
    by_h = {gr.h: e for gr, e in zip([fine, *grids[:-1]], est)}
    return [LadderPoint(gr.h, reference - by_h[gr.h].mean, by_h[gr.h].stderr, reference, by_h[gr.h].mean)
            for gr in grids]


def killed_identity_test(problem: SdeProblem, g: Payoff, grid: Grid, n_paths: int, master_seed: int = 0,
                         g_sup: float = 1.0, tolerance: float = 3.0) -> IdentityCheck:
    """Check ``E[g(X^h_T) 1(tau^h > T)] = E[g(x0 + sigma W_T) Z^h_T 1(tau^{W,h} > T)]``
    with the two sides on independent streams."""
    _check_killed(problem, g_sup)
    _check_girsanov(problem)
    direct = killed_payoff_estimate(problem, g, grid, n_paths, master_seed, g_sup)
    terminal = PathFunctional.terminal(g, bounded=True)
    sampler = lambda s, n: weighted_samples(problem, terminal, grid, s, n, killing=True)  # noqa: E731
    weighted = run_mc(sampler, n_paths, None, master_seed, IDENTITY_STREAM_OFFSET)
    return IdentityCheck(direct, weighted, direct.z_score(weighted), tolerance)
