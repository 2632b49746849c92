"""Batched Monte Carlo estimation, weak-error ladders and log-log rate fitting.

Batch ``b`` of a run always draws from stream ``stream_offset + b`` of the master
seed, and batch statistics are merged in batch order, so a result depends only
on ``(master_seed, n_paths, n_batches)`` and never on the worker count. The
worker count comes from the ``EMWEAK_WORKERS`` environment variable (default 1).
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .model import ProblemKind, PathFunctional, SdeProblem, validate_problem
from .sampling import RngStream

Sampler = Callable[[RngStream, int], np.ndarray]

INVALID_FRACTION_LIMIT = 1e-4
DEFAULT_BATCH_SIZE = 1 << 16
LEVEL_STREAM_STRIDE = 1 << 20


@dataclass(frozen=True)
class SampleStats:
    """Sufficient statistics (count, mean, centred sum of squares) per column."""

    count: int
    mean: np.ndarray
    m2: np.ndarray
    invalid: np.ndarray

    @classmethod
    def from_samples(cls, x: np.ndarray) -> "SampleStats":
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        ok = np.isfinite(x)
        n = ok.sum(axis=0)
        filled = np.where(ok, x, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = np.where(n > 0, filled.sum(axis=0) / np.maximum(n, 1), 0.0)
        m2 = np.where(ok, (x - mean) ** 2, 0.0).sum(axis=0)
        # counts are tracked per column through ``invalid``; count is the row total
        return cls(x.shape[0], mean, m2, (~ok).sum(axis=0))

    @property
    def valid(self) -> np.ndarray:
        return self.count - self.invalid

    def merge(self, other: "SampleStats") -> "SampleStats":
        na, nb = self.valid, other.valid
        n = na + nb
        safe = np.maximum(n, 1)
        delta = other.mean - self.mean
        mean = self.mean + delta * nb / safe
        m2 = self.m2 + other.m2 + delta * delta * na * nb / safe
        return SampleStats(self.count + other.count, mean, m2, self.invalid + other.invalid)


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n_paths: int
    invalid_count: int = 0
    failed: bool = False
    notes: tuple[str, ...] = ()

    @classmethod
    def from_stats(cls, stats: SampleStats, column: int = 0, notes: Sequence[str] = ()) -> "McEstimate":
        n_valid = int(stats.valid[column])
        invalid = int(stats.invalid[column])
        if n_valid > 1:
            var = float(stats.m2[column]) / (n_valid - 1)
            se = math.sqrt(var / n_valid)
        else:
            se = math.nan
        failed = invalid > INVALID_FRACTION_LIMIT * stats.count
        return cls(float(stats.mean[column]), se, stats.count, invalid, failed, tuple(notes))

    def z_score(self, other: "McEstimate") -> float:
        """Difference in units of the combined (quadrature) standard error."""
        se = math.hypot(self.stderr, other.stderr)
        diff = self.mean - other.mean
        if se == 0.0:
            return 0.0 if diff == 0.0 else math.inf
        return abs(diff) / se


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("EMWEAK_WORKERS", "1")))
    except ValueError:
        return 1


def batch_sizes(n_paths: int, n_batches: int) -> list[int]:
    base, extra = divmod(n_paths, n_batches)
    return [base + (1 if b < extra else 0) for b in range(n_batches)]


def default_batches(n_paths: int) -> int:
    return max(1, math.ceil(n_paths / DEFAULT_BATCH_SIZE))


def run_batches(sampler: Sampler, n_paths: int, n_batches: Optional[int], master_seed: int,
                stream_offset: int = 0) -> list[SampleStats]:
    """Per-batch statistics, in batch order."""
    if n_paths < 100:
        raise ValueError("n_paths must be >= 100")
    n_batches = default_batches(n_paths) if n_batches is None else int(n_batches)
    if not 1 <= n_batches <= n_paths:
        raise ValueError("n_batches must lie in [1, n_paths]")
    sizes = batch_sizes(n_paths, n_batches)

    def one(b: int) -> SampleStats:
        stats = SampleStats.from_samples(sampler(RngStream(master_seed, stream_offset + b), sizes[b]))
        if np.any(stats.valid == 0):
            raise RuntimeError(f"batch {b}: every sample is invalid")
        return stats

    workers = min(worker_count(), n_batches)
    if workers == 1:
        return [one(b) for b in range(n_batches)]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(one, range(n_batches)))


def merge_all(stats: Sequence[SampleStats]) -> SampleStats:
    out = stats[0]
    for s in stats[1:]:
        out = out.merge(s)
    return out


def run_mc(sampler: Sampler, n_paths: int, n_batches: Optional[int] = None, master_seed: int = 0,
           stream_offset: int = 0, notes: Sequence[str] = ()) -> McEstimate:
    """Estimate ``E[sampler]`` for a sampler returning one value per path."""
    stats = merge_all(run_batches(sampler, n_paths, n_batches, master_seed, stream_offset))
    if stats.mean.size != 1:
        raise ValueError("sampler returned several columns; use run_mc_columns")
    return McEstimate.from_stats(stats, 0, notes)


def run_mc_columns(sampler: Sampler, n_paths: int, n_batches: Optional[int] = None, master_seed: int = 0,
                   stream_offset: int = 0) -> list[McEstimate]:
    """Like :func:`run_mc` for samplers returning ``(n, k)`` arrays; one estimate per column."""
    stats = merge_all(run_batches(sampler, n_paths, n_batches, master_seed, stream_offset))
    return [McEstimate.from_stats(stats, j) for j in range(stats.mean.size)]


@dataclass(frozen=True)
class LadderPoint:
    h: float
    error: float
    stderr: float
    reference: float = math.nan
    estimate: float = math.nan


@dataclass
class RateReport:
    ladder: list[LadderPoint]
    slope: float
    intercept: float
    fit_residual: float
    predicted: Optional[float] = None
    used: list[bool] = field(default_factory=list)
    below_noise_floor: bool = False
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "fit_residual": self.fit_residual,
            "predicted": self.predicted,
            "below_noise_floor": self.below_noise_floor,
            "used": list(self.used),
            "notes": list(self.notes),
            "ladder": [asdict(p) for p in self.ladder],
        }


ROUNDING_FLOOR = 1e-12


def _rounding_floor(p: LadderPoint) -> float:
    # coupled levels of an exact scheme differ only by summation order
    scale = abs(p.reference) if math.isfinite(p.reference) else 0.0
    return ROUNDING_FLOOR * max(1.0, scale)


class NoiseFloorError(ValueError):
    """Fewer than two ladder errors are distinguishable from Monte Carlo noise."""


def fit_rate(ladder: Sequence[LadderPoint], predicted: Optional[float] = None,
             noise_sigmas: float = 3.0) -> RateReport:
    """Least-squares slope of ``log|error|`` against ``log h``.

    Points with ``|error| <= noise_sigmas * stderr`` carry no slope information
    and are excluded; when more than half are excluded the report is flagged
    ``below_noise_floor``.
    """
    pts = sorted(ladder, key=lambda p: -p.h)
    if len(pts) < 2:
        raise ValueError("degenerate ladder: need at least two points")
    hs = [p.h for p in pts]
    if len(set(hs)) != len(hs):
        raise ValueError("ladder h values must be distinct")
    used = [math.isfinite(p.error) and abs(p.error) > max(noise_sigmas * p.stderr, _rounding_floor(p))
            for p in pts]
    n_used = sum(used)
    below = (len(pts) - n_used) * 2 > len(pts)
    if n_used < 2:
        raise NoiseFloorError(f"only {n_used} of {len(pts)} ladder errors exceed {noise_sigmas:g} stderr")
    x = np.log([p.h for p, u in zip(pts, used) if u])
    y = np.log([abs(p.error) for p, u in zip(pts, used) if u])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    notes = []
    if n_used < 4:
        notes.append(f"only {n_used} usable ladder points (4 recommended)")
    if below:
        notes.append("error below noise floor")
    return RateReport(pts, float(slope), float(intercept), float(np.sqrt(np.mean(resid**2))),
                      predicted, used, below, notes)


def _ladder_grids(horizon: float, h_ladder: Sequence[float], h_ref: float):
    from .em import Grid

    grids = [Grid.from_step(horizon, h) for h in h_ladder]
    ref = Grid.from_step(horizon, h_ref)
    if h_ref > min(g.h for g in grids) / 8 * (1 + 1e-12):
        raise ValueError("h_ref must be <= min(ladder)/8")
    return grids, ref


def weak_error_vs_reference(problem: SdeProblem, functional: PathFunctional, h_ladder: Sequence[float],
                            h_ref: float, n_paths: int, master_seed: int = 0, coupled: bool = False,
                            n_batches: Optional[int] = None) -> list[LadderPoint]:
    """``error(h) = E[f(X^{h_ref})] - E[f(X^h)]`` for every ``h`` of the ladder.

    Independent mode (default) runs each level on its own streams and combines
    standard errors in quadrature. ``coupled=True`` drives every level with one
    fine Brownian path per sample (requires nested grids); each marginal law is
    unchanged, and the error is estimated from per-path differences.
    """
    from . import em, reflected

    validate_problem(problem).raise_if_invalid()
    grids, ref = _ladder_grids(problem.horizon, h_ladder, h_ref)
    if problem.kind not in (ProblemKind.PLAIN, ProblemKind.REFLECTED):
        raise ValueError("weak_error_vs_reference handles plain and reflected problems")

    if coupled:
        if problem.kind is ProblemKind.PLAIN:
            base = lambda s, n: em.em_ladder_samples(problem, functional, ref, grids, s, n)  # noqa: E731
        else:
            base = lambda s, n: reflected.reflected_ladder_samples(problem, functional, ref, grids, s, n)  # noqa: E731

        def diffs(stream, n):
            v = base(stream, n)
            return np.column_stack([v[:, :1], v[:, :1] - v[:, 1:]])

        est = run_mc_columns(diffs, n_paths, n_batches, master_seed)
        ref_est = est[0]
        return [LadderPoint(g.h, e.mean, e.stderr, ref_est.mean, ref_est.mean - e.mean)
                for g, e in zip(grids, est[1:])]

    make = em.em_sampler if problem.kind is ProblemKind.PLAIN else reflected.reflected_sampler
    ref_est = run_mc(make(problem, functional, ref), n_paths, n_batches, master_seed, 0)
    out = []
    for i, g in enumerate(grids, start=1):
        e = run_mc(make(problem, functional, g), n_paths, n_batches, master_seed, i * LEVEL_STREAM_STRIDE)
        out.append(LadderPoint(g.h, ref_est.mean - e.mean, math.hypot(ref_est.stderr, e.stderr),
                               ref_est.mean, e.mean))
    return out


LADDER_COLUMNS = ("h", "error", "stderr", "reference")


def write_ladder_csv(path, ladder: Sequence[LadderPoint]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LADDER_COLUMNS)
        for p in ladder:
            w.writerow([repr(float(getattr(p, c))) for c in LADDER_COLUMNS])


def write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")
