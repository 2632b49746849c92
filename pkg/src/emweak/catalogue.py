"""Built-in drifts, payoffs and named problems with their regularity declared.

Every entry passes :func:`validate_problem`; drifts are component-wise so they
work in any dimension.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import (DomainSpec, DriftSpec, GrowthClass, PathFunctional, SdeProblem,
                    predicted_weak_order, validate_problem)

# ---- drifts ---------------------------------------------------------------


def zero_drift() -> DriftSpec:
    return DriftSpec(lambda x: np.zeros_like(x), GrowthClass.BOUNDED, holder_alpha=1.0,
                     class_a=(True,), name="zero")


def constant_drift(c: float = 0.3) -> DriftSpec:
    return DriftSpec(lambda x: np.full_like(x, c), GrowthClass.BOUNDED, holder_alpha=1.0,
                     class_a=(True,), name=f"constant({c:g})")


def sign_drift(scale: float = 1.0) -> DriftSpec:
    """``scale * sign(x)`` per coordinate: bounded, monotone, hence class A."""
    return DriftSpec(lambda x: scale * np.sign(x), GrowthClass.BOUNDED, class_a=(True,),
                     name="sign" if scale == 1 else f"{scale:g}*sign")


def step_drift(level: float = 1.0, threshold: float = 0.0) -> DriftSpec:
    """``level * 1(x > threshold)`` per coordinate."""
    return DriftSpec(lambda x: level * (x > threshold).astype(float), GrowthClass.BOUNDED,
                     class_a=(True,), name="step")


def holder_drift(alpha: float = 0.5) -> DriftSpec:
    """``sign(x) min(|x|, 1)^alpha``: alpha-Hölder with the tails clipped to stay bounded."""
    return DriftSpec(lambda x: np.sign(x) * np.minimum(np.abs(x), 1.0) ** alpha, GrowthClass.BOUNDED,
                     holder_alpha=alpha, name=f"holder({alpha:g})")


def ou_drift(theta: float = 1.0) -> DriftSpec:
    return DriftSpec(lambda x: -theta * x, GrowthClass.LINEAR, holder_alpha=1.0, name="ou")


def linear_drift(slope: float = 1.0) -> DriftSpec:
    return DriftSpec(lambda x: slope * x, GrowthClass.LINEAR, holder_alpha=1.0, name="linear")


def clipped_decay_drift(cap: float = 2.0) -> DriftSpec:
    """``-min(x, cap)`` on ``[0, inf)``, clipped to 0 below 0: bounded and Lipschitz."""
    return DriftSpec(lambda x: -np.clip(x, 0.0, cap), GrowthClass.BOUNDED, holder_alpha=1.0,
                     name=f"clipped_decay({cap:g})")


DRIFTS: dict[str, Callable[..., DriftSpec]] = {
    "zero": zero_drift,
    "constant": constant_drift,
    "sign": sign_drift,
    "step": step_drift,
    "holder": holder_drift,
    "ou": ou_drift,
    "linear": linear_drift,
    "clipped_decay": clipped_decay_drift,
}

# ---- payoffs --------------------------------------------------------------
# g acts on (n, d) states, f on (n,) values; both act on the first coordinate.

G_FUNCTIONS: dict[str, Callable[..., Callable]] = {
    "identity": lambda: (lambda x: x[:, 0]),
    "tanh": lambda: (lambda x: np.tanh(x[:, 0])),
    "one": lambda: (lambda x: np.ones(x.shape[0])),
    "zero": lambda: (lambda x: np.zeros(x.shape[0])),
    "abs": lambda: (lambda x: np.abs(x[:, 0])),
    "indicator_abs_le": lambda r=0.5: (lambda x: (np.abs(x[:, 0]) <= r).astype(float)),
    "indicator_le": lambda level=0.5: (lambda x: (x[:, 0] <= level).astype(float)),
}

F_FUNCTIONS: dict[str, Callable] = {
    "identity": lambda v: v,
    "tanh": np.tanh,
}

BOUNDED_G = {"tanh", "one", "zero", "indicator_abs_le", "indicator_le"}


def make_functional(spec: dict) -> PathFunctional:
    """Build a functional from ``{"kind": ..., "g": name, "g_params": {...}, "f": name, "beta": ...}``."""
    kind = spec.get("kind", "terminal")
    g_name = spec.get("g", "identity")
    if g_name not in G_FUNCTIONS:
        raise ValueError(f"unknown payoff function {g_name!r}")
    g = G_FUNCTIONS[g_name](**spec.get("g_params", {}))
    bounded = g_name in BOUNDED_G
    if kind == "terminal":
        return PathFunctional.terminal(g, bounded=bounded, name=g_name)
    if kind == "integral":
        f_name = spec.get("f", "identity")
        if f_name not in F_FUNCTIONS:
            raise ValueError(f"unknown outer function {f_name!r}")
        return PathFunctional.integral(g, F_FUNCTIONS[f_name], beta=spec.get("beta"),
                                       class_a=spec.get("class_a", False),
                                       bounded=f_name == "tanh", name=f"{f_name}(int {g_name})")
    raise ValueError(f"functional kind {kind!r} is not available from configuration")


# ---- named problems -------------------------------------------------------


@dataclass(frozen=True)
class Builtin:
    name: str
    description: str
    drift: str
    drift_params: dict = field(default_factory=dict)
    x0: float = 0.0
    horizon: float = 1.0
    sigma: float = 1.0
    kind: str = "plain"
    domain: Optional[tuple[float, float]] = None
    support_gap_epsilon: float = 0.0
    functional: dict = field(default_factory=lambda: {"kind": "terminal", "g": "tanh"})
    reference: str = ""

    def problem(self, **overrides) -> SdeProblem:
        params = {**self.drift_params, **overrides.pop("drift_params", {})}
        drift = DRIFTS[self.drift](**params)
        domain = None
        if self.domain is not None:
            domain = DomainSpec.interval(*self.domain, support_gap_epsilon=self.support_gap_epsilon)
        return SdeProblem.build(drift, x0=overrides.get("x0", self.x0),
                                horizon=overrides.get("horizon", self.horizon),
                                sigma=overrides.get("sigma", self.sigma), kind=self.kind, domain=domain)

    def default_functional(self) -> PathFunctional:
        return make_functional(self.functional)


BUILTINS: dict[str, Builtin] = {b.name: b for b in [
    Builtin("zero_drift", "driftless motion; every weak error vanishes", "zero",
            reference="E[tanh(X_T)] = 0 at x0 = 0"),
    Builtin("constant_drift", "constant drift 0.3; Euler-Maruyama is exact", "constant", {"c": 0.3},
            reference="X_T ~ N(x0 + 0.3 T, T)"),
    Builtin("ou_drift", "Ornstein-Uhlenbeck b(x) = -x from x0 = 1", "ou", x0=1.0,
            functional={"kind": "terminal", "g": "identity"},
            reference="E[X^h_T] = x0 (1 - h)^(T/h); E[X_T] = x0 exp(-T)"),
    Builtin("sign_drift", "b(x) = sign(x), class A by monotonicity", "sign",
            reference="Z^h_T is exactly lognormal(-T/2, T)"),
    Builtin("neg_sign_drift", "b(x) = -sign(x) from x0 = 0.5", "sign", {"scale": -1.0}, x0=0.5),
    Builtin("step_drift", "b(x) = 1(x > 0)", "step"),
    Builtin("holder_drift", "b(x) = sign(x) min(|x|, 1)^alpha", "holder", {"alpha": 0.5}, x0=0.2),
    Builtin("linear_drift", "b(x) = x; weight moments blow up", "linear"),
    Builtin("reflected_bm", "Brownian motion reflected at 0 from 0", "zero", kind="reflected",
            functional={"kind": "terminal", "g": "identity"},
            reference="X_T ~ |N(0, T)|, mean sqrt(2T/pi)"),
    Builtin("reflected_clipped", "reflected SDE with b(x) = -min(x, 2) from x0 = 0.5", "clipped_decay",
            {"cap": 2.0}, x0=0.5, kind="reflected",
            functional={"kind": "terminal", "g": "tanh"}),
    Builtin("killed_bm_interval", "Brownian motion killed outside (-1, 1)", "zero", kind="killed",
            domain=(-1.0, 1.0), functional={"kind": "terminal", "g": "one"},
            reference="P(tau > 1) = 0.3707 (eigenfunction series)"),
    Builtin("killed_sign_interval", "b(x) = -sign(x) killed outside (-1, 1)", "sign", {"scale": -1.0},
            kind="killed", domain=(-1.0, 1.0), support_gap_epsilon=0.25,
            functional={"kind": "terminal", "g": "indicator_abs_le", "g_params": {"r": 0.5}}),
]}


def get_builtin(name: str) -> Builtin:
    try:
        return BUILTINS[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; known: {', '.join(sorted(BUILTINS))}") from None


def list_builtins() -> list[dict]:
    """Catalogue rows: declared regularity, Girsanov warning flag and known reference."""
    rows = []
    for b in BUILTINS.values():
        problem = b.problem()
        drift = problem.drift
        check = validate_problem(problem, girsanov=True)
        rate = predicted_weak_order(problem, b.default_functional())
        rows.append({
            "name": b.name,
            "description": b.description,
            "kind": problem.kind.value,
            "drift": drift.name,
            "growth": drift.growth.tag,
            "holder_alpha": drift.holder_alpha,
            "class_a": all(drift.class_a) and bool(drift.class_a),
            "girsanov_warning": bool(check.warnings),
            "valid": check.ok,
            "predicted_order": rate.exponent,
            "reference": b.reference,
        })
    return rows
