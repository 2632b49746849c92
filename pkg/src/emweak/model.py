"""Problem description: drift regularity, constant diffusion, functionals, domains.

Everything here is immutable once built. Class-A membership and the growth class
of a drift are *declarations* made by whoever builds the :class:`DriftSpec`; they
cannot be checked from a function handle.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

ArrayFn = Callable[[np.ndarray], np.ndarray]


class SingularMatrixError(ValueError):
    pass


class GrowthClass(enum.IntEnum):
    """Growth of the drift at infinity. Ordered: bounded < ... < super-linear."""

    BOUNDED = 0
    SUB_LINEAR = 1
    LINEAR = 2
    SUPER_LINEAR = 3

    @classmethod
    def parse(cls, tag: "str | GrowthClass") -> "GrowthClass":
        if isinstance(tag, GrowthClass):
            return tag
        key = str(tag).strip().lower().replace("-", "_")
        try:
            return cls[key.upper()]
        except KeyError:
            raise ValueError(f"unknown growth class {tag!r}") from None

    @property
    def tag(self) -> str:
        return self.name.lower().replace("_", "-")


class ProblemKind(str, enum.Enum):
    PLAIN = "plain"
    REFLECTED = "reflected"
    KILLED = "killed"


class FunctionalKind(str, enum.Enum):
    TERMINAL = "terminal"
    INTEGRAL = "integral"
    GRID_PATH = "grid-path"


def _check_exponent(value: Optional[float], name: str) -> None:
    if value is not None and not (0.0 < value <= 1.0):
        raise ValueError(f"{name} must lie in (0, 1], got {value}")


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class DriftSpec:
    """Vectorised drift ``b: (n, d) -> (n, d)`` with its declared regularity.

    ``holder_alpha`` is the exponent of the Hölder part (``None`` when there is
    no Hölder part); ``class_a`` flags, per coordinate, that the remaining part
    of ``b_j`` belongs to class A.
    """

    eval: ArrayFn
    growth: GrowthClass
    holder_alpha: Optional[float] = None
    class_a: tuple[bool, ...] = ()
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "growth", GrowthClass.parse(self.growth))
        object.__setattr__(self, "class_a", tuple(bool(c) for c in self.class_a))
        _check_exponent(self.holder_alpha, "holder_alpha")
        if self.holder_alpha is None and not any(self.class_a):
            raise ValueError("drift must declare a Hölder part, a class-A part, or both")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.eval(x)

    @property
    def is_pure_class_a(self) -> bool:
        return self.holder_alpha is None


@dataclass(frozen=True)
class ConstantDiffusion:
    sigma: np.ndarray
    sigma_inv: np.ndarray

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.sigma, np.eye(self.dim)))


def inverse_diffusion(sigma) -> ConstantDiffusion:
    """Invert a constant diffusion matrix, refusing numerically singular input.

    A pivot of the LU factorisation below ``1e-12 * max row norm`` counts as
    singular; the inverse must also satisfy ``||sigma @ inv - I||_inf < 1e-10``.
    """
    s = np.atleast_2d(np.asarray(sigma, dtype=float))
    if s.ndim != 2 or s.shape[0] != s.shape[1] or s.shape[0] < 1:
        raise ValueError(f"sigma must be a non-empty square matrix, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("sigma has non-finite entries")
    scale = np.abs(s).sum(axis=1).max()
    if scale == 0.0:
        raise SingularMatrixError("sigma is the zero matrix")
    with warnings.catch_warnings():
        # singularity is reported below through our own pivot test
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(s, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() < 1e-12 * scale:
        raise SingularMatrixError(
            f"sigma is singular: pivot {pivots.min():.3e} below 1e-12 x row norm {scale:.3e}"
        )
    inv = scipy.linalg.lu_solve((lu, piv), np.eye(s.shape[0]), check_finite=False)
    residual = np.abs(s @ inv - np.eye(s.shape[0])).sum(axis=1).max()
    if residual >= 1e-10:
        raise SingularMatrixError(f"sigma is ill-conditioned: inversion residual {residual:.3e}")
    return ConstantDiffusion(_frozen(s), _frozen(inv))


@dataclass(frozen=True)
class DomainSpec:
    """Open domain used for killing: interval, axis-aligned box or ball.

    ``lower``/``upper`` hold the interval or box bounds; a ball stores its centre
    in ``lower`` and its radius in ``radius``.
    """

    shape: str
    lower: np.ndarray
    upper: Optional[np.ndarray] = None
    radius: Optional[float] = None
    support_gap_epsilon: float = 0.0
    holder_p: float = 2.0

    def __post_init__(self):
        if self.shape not in ("interval", "box", "ball"):
            raise ValueError(f"unknown domain shape {self.shape!r}")
        object.__setattr__(self, "lower", _frozen(np.atleast_1d(self.lower)))
        if self.upper is not None:
            object.__setattr__(self, "upper", _frozen(np.atleast_1d(self.upper)))
        if self.shape in ("interval", "box"):
            if self.upper is None or self.upper.shape != self.lower.shape:
                raise ValueError("interval/box needs matching lower and upper bounds")
            if self.shape == "interval" and self.lower.size != 1:
                raise ValueError("interval domains are one-dimensional; use a box")
            if not np.all(self.lower < self.upper):
                raise ValueError("domain bounds must satisfy lower < upper")
        else:
            if self.radius is None or not self.radius > 0:
                raise ValueError("ball radius must be > 0")
        if not self.support_gap_epsilon >= 0:
            raise ValueError("support_gap_epsilon must be >= 0")
        if not self.holder_p > 1:
            raise ValueError("holder_p must be > 1")

    @classmethod
    def interval(cls, a: float, b: float, **kw) -> "DomainSpec":
        return cls("interval", np.array([a]), np.array([b]), **kw)

    @classmethod
    def box(cls, lower, upper, **kw) -> "DomainSpec":
        return cls("box", np.asarray(lower, float), np.asarray(upper, float), **kw)

    @classmethod
    def ball(cls, centre, radius: float, **kw) -> "DomainSpec":
        return cls("ball", np.asarray(centre, float), radius=float(radius), **kw)

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Membership of the open set for points of shape ``(n, d)``; boundary is outside."""
        x = np.asarray(x, dtype=float)
        if self.shape == "ball":
            return np.sum((x - self.lower) ** 2, axis=-1) < self.radius**2
        return np.all((x > self.lower) & (x < self.upper), axis=-1)

    def distance_to_boundary(self, lo: float, hi: float) -> float:
        """Distance from the 1-d support ``[lo, hi]`` of a payoff to the interval boundary."""
        if self.shape != "interval":
            raise ValueError("support gaps are only computed for interval domains")
        a, b = float(self.lower[0]), float(self.upper[0])
        if lo <= a or hi >= b:
            return 0.0
        return min(lo - a, b - hi)

    def support_gap_ok(self, lo: float, hi: float) -> bool:
        return self.distance_to_boundary(lo, hi) >= 2.0 * self.support_gap_epsilon


@dataclass(frozen=True)
class SdeProblem:
    x0: np.ndarray
    horizon: float
    drift: DriftSpec
    diffusion: ConstantDiffusion
    kind: ProblemKind = ProblemKind.PLAIN
    domain: Optional[DomainSpec] = None

    def __post_init__(self):
        object.__setattr__(self, "x0", _frozen(np.atleast_1d(self.x0)))
        object.__setattr__(self, "kind", ProblemKind(self.kind))
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError(f"horizon must be a positive finite time, got {self.horizon}")

    @classmethod
    def build(
        cls,
        drift: DriftSpec,
        x0: "float | Sequence[float]" = 0.0,
        horizon: float = 1.0,
        sigma=1.0,
        kind: "str | ProblemKind" = ProblemKind.PLAIN,
        domain: Optional[DomainSpec] = None,
    ) -> "SdeProblem":
        return cls(np.atleast_1d(np.asarray(x0, float)), float(horizon), drift,
                   inverse_diffusion(sigma), ProblemKind(kind), domain)

    @property
    def dim(self) -> int:
        return self.x0.size


@dataclass(frozen=True)
class PathFunctional:
    """Payoff of a path.

    * terminal: ``g(X_T)``, with ``g: (n, d) -> (n,)``
    * integral: ``f(int_0^T g(X_s) ds)``, left-point Riemann sum on the grid
    * grid-path: ``f(X_{t_0}, ..., X_{t_n})`` with ``f: (n_steps+1, n, d) -> (n,)``
    """

    kind: FunctionalKind
    g: Optional[ArrayFn] = None
    f: Optional[ArrayFn] = None
    g_holder_beta: Optional[float] = None
    g_class_a: bool = False
    bounded: bool = False
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "kind", FunctionalKind(self.kind))
        _check_exponent(self.g_holder_beta, "g_holder_beta")
        if self.kind in (FunctionalKind.TERMINAL, FunctionalKind.INTEGRAL) and self.g is None:
            raise ValueError(f"{self.kind.value} functional needs g")
        if self.kind is FunctionalKind.GRID_PATH and self.f is None:
            raise ValueError("grid-path functional needs f")

    @classmethod
    def terminal(cls, g: ArrayFn, bounded: bool = False, name: str = "custom"):
        return cls(FunctionalKind.TERMINAL, g=g, bounded=bounded, name=name)

    @classmethod
    def integral(cls, g: ArrayFn, f: Optional[ArrayFn] = None, beta: Optional[float] = None,
                 class_a: bool = False, bounded: bool = False, name: str = "custom"):
        return cls(FunctionalKind.INTEGRAL, g=g, f=f, g_holder_beta=beta, g_class_a=class_a,
                   bounded=bounded, name=name)

    @classmethod
    def grid_path(cls, f: ArrayFn, bounded: bool = False, name: str = "custom"):
        return cls(FunctionalKind.GRID_PATH, f=f, bounded=bounded, name=name)


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str

    def __str__(self) -> str:
        return f"{self.field}: {self.rule}"


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[Violation, ...] = ()
    warnings: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_if_invalid(self) -> None:
        if self.violations:
            raise ValueError("invalid problem: " + "; ".join(map(str, self.violations)))


def validate_problem(problem: SdeProblem, girsanov: bool = False) -> ValidationResult:
    """Check the cross-field rules a problem must satisfy before simulation.

    Pass ``girsanov=True`` when weight-based estimators will be used; linear
    growth then produces a warning because the weight moments are no longer
    bounded uniformly in the step.
    """
    bad: list[Violation] = []
    warn: list[str] = []
    drift = problem.drift
    d = problem.dim

    if drift.growth is GrowthClass.SUPER_LINEAR:
        bad.append(Violation("drift.growth", "super-linear drift: Euler-Maruyama diverges"))
    if drift.class_a and len(drift.class_a) not in (1, d):
        bad.append(Violation("drift.class_a", f"expected 1 or {d} flags, got {len(drift.class_a)}"))
    if problem.diffusion.dim != d:
        bad.append(Violation("diffusion.sigma", f"sigma is {problem.diffusion.dim}x"
                             f"{problem.diffusion.dim} but x0 has dimension {d}"))

    if problem.kind is ProblemKind.REFLECTED:
        if d != 1:
            bad.append(Violation("kind", "reflected requires d=1"))
        elif problem.x0[0] < 0:
            bad.append(Violation("x0", "reflected requires x0 >= 0"))
    if problem.kind is ProblemKind.KILLED:
        if problem.domain is None:
            bad.append(Violation("domain", "killed requires a domain"))
        elif problem.domain.dim != d:
            bad.append(Violation("domain", f"domain dimension {problem.domain.dim} != {d}"))
        elif not problem.domain.contains(problem.x0[None, :])[0]:
            bad.append(Violation("x0", "killed requires x0 inside the open domain"))

    if girsanov and drift.growth is GrowthClass.LINEAR:
        warn.append("linear-growth drift: Girsanov weight moments may be infinite")
    return ValidationResult(tuple(bad), tuple(warn))


@dataclass(frozen=True)
class RateDescription:
    """Predicted weak order. ``exponent`` is None when only convergence is known."""

    exponent: Optional[float]
    barrier_exponent: Optional[float] = None
    note: str = ""
    extra_terms: tuple[str, ...] = field(default=())


def _effective_alpha(drift: DriftSpec, needs_holder: bool) -> float:
    if drift.holder_alpha is not None:
        return drift.holder_alpha
    if needs_holder:
        raise ValueError("a Hölder exponent alpha is required for this problem kind")
    # pure class-A drift: the Hölder part is zero, which is Hölder of every order <= 1
    return 1.0


def predicted_weak_order(problem: SdeProblem, functional: Optional[PathFunctional] = None) -> RateDescription:
    """Theoretical weak-order exponent for ``problem`` and ``functional``."""
    validate_problem(problem).raise_if_invalid()
    drift = problem.drift
    kind = problem.kind

    if kind is ProblemKind.REFLECTED:
        alpha = _effective_alpha(drift, needs_holder=True)
        if drift.growth > GrowthClass.SUB_LINEAR:
            return RateDescription(None, note="reflected scheme: rate needs sub-linear drift")
        return RateDescription(alpha / 2.0, note="reflected: h^(alpha/2)")

    alpha = _effective_alpha(drift, needs_holder=False)
    if drift.growth is GrowthClass.LINEAR:
        if functional is not None and functional.bounded:
            return RateDescription(None, note="convergence without rate (linear growth, bounded f)")
        return RateDescription(None, note="no guarantee: linear growth with unbounded f")

    base = min(alpha / 2.0, 0.25)
    if kind is ProblemKind.KILLED:
        p = problem.domain.holder_p if problem.domain is not None else 2.0
        return RateDescription(
            base, barrier_exponent=1.0 / (2.0 * p),
            note=f"killed: h^{base:g} + h^(1/(2p)) with p={p:g}",
            extra_terms=("C h^(min(alpha/2, 1/4))", f"C_p |g^p|_inf / (1 ^ eps^(4/p)) h^(1/{2 * p:g})"),
        )

    if functional is not None and functional.kind is FunctionalKind.INTEGRAL:
        if drift.growth is not GrowthClass.BOUNDED:
            return RateDescription(None, note="integral functional: rate needs bounded drift")
        if functional.g_holder_beta is not None:
            beta = functional.g_holder_beta
        elif functional.g_class_a:
            beta = 1.0
        else:
            raise ValueError("integral functional needs g_holder_beta or g_class_a")
        return RateDescription(min(base, beta / 2.0), note="integral: h^(min(alpha/2, beta/2, 1/4))")

    return RateDescription(base, note="plain: h^(min(alpha/2, 1/4))")
