"""Experiment runner: JSON config in, ladder CSV and JSON report out.

Exit status: 0 when the pipeline's acceptance rule passes, 1 when it fails,
2 for configuration errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import catalogue
from .em import Grid
from .girsanov import girsanov_identity_check, weight_moment_diagnostic
from .killed import killed_bias_ladder, killed_identity_test, reference_exit_probability
from .mc import NoiseFloorError, fit_rate, weak_error_vs_reference, write_json, write_ladder_csv
from .model import DomainSpec, ProblemKind, SdeProblem, predicted_weak_order, validate_problem
from .reflected import reflected_law_check

PIPELINES = ("weak_order", "identity_check", "reflected_law", "killed_bias", "weight_diagnostic")
EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """One experiment. ``problem`` is a built-in name or an inline mapping::

        {"drift": {"name": "sign", "params": {"scale": -1}}, "x0": [0.5], "horizon": 1.0,
         "sigma": [[1.0]], "kind": "killed",
         "domain": {"shape": "interval", "lower": [-1], "upper": [1], "support_gap_epsilon": 0.25}}
    """

    problem: Union[str, dict]
    pipeline: str = "weak_order"
    functional: Optional[dict] = None
    h_ladder: list = field(default_factory=lambda: [2.0**-k for k in range(3, 9)])
    h_ref: Optional[float] = None
    n_paths: int = 100_000
    seed: int = 0
    coupled: bool = False
    output_dir: str = "results"
    options: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if "problem" not in data:
            raise ConfigError("config needs a 'problem'")
        cfg = cls(**data)
        if cfg.pipeline not in PIPELINES:
            raise ConfigError(f"unknown pipeline {cfg.pipeline!r}; choose from {', '.join(PIPELINES)}")
        if not isinstance(cfg.h_ladder, list) or not cfg.h_ladder:
            raise ConfigError("h_ladder must be a non-empty list")
        cfg.h_ladder = [float(h) for h in cfg.h_ladder]
        if cfg.h_ref is not None:
            cfg.h_ref = float(cfg.h_ref)
        cfg.n_paths, cfg.seed = int(cfg.n_paths), int(cfg.seed)
        return cfg

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def build_problem(cfg: ExperimentConfig) -> SdeProblem:
    spec = cfg.problem
    if isinstance(spec, str):
        try:
            return catalogue.get_builtin(spec).problem()
        except KeyError as exc:
            raise ConfigError(exc.args[0]) from None
    drift_spec = spec.get("drift", {})
    name = drift_spec.get("name") if isinstance(drift_spec, dict) else drift_spec
    if name not in catalogue.DRIFTS:
        raise ConfigError(f"unknown drift {name!r}; known: {', '.join(sorted(catalogue.DRIFTS))}")
    params = drift_spec.get("params", {}) if isinstance(drift_spec, dict) else {}
    domain = None
    if spec.get("domain"):
        d = dict(spec["domain"])
        shape = d.pop("shape", "interval")
        if shape == "interval":
            domain = DomainSpec.interval(d.pop("lower")[0], d.pop("upper")[0], **d)
        elif shape == "box":
            domain = DomainSpec.box(d.pop("lower"), d.pop("upper"), **d)
        else:
            domain = DomainSpec.ball(d.pop("centre"), d.pop("radius"), **d)
    return SdeProblem.build(catalogue.DRIFTS[name](**params), x0=spec.get("x0", 0.0),
                            horizon=spec.get("horizon", 1.0), sigma=spec.get("sigma", 1.0),
                            kind=spec.get("kind", "plain"), domain=domain)


def build_functional(cfg: ExperimentConfig):
    if cfg.functional is not None:
        return catalogue.make_functional(cfg.functional)
    if isinstance(cfg.problem, str):
        return catalogue.get_builtin(cfg.problem).default_functional()
    return catalogue.make_functional({"kind": "terminal", "g": "tanh"})


def _grid(problem: SdeProblem, cfg: ExperimentConfig, default_h: float) -> Grid:
    return Grid.from_step(problem.horizon, float(cfg.options.get("h", default_h)))


def _rate_section(ladder, predicted, min_slope=None, band=None) -> tuple[bool, dict]:
    try:
        report = fit_rate(ladder, predicted)
    except NoiseFloorError as exc:
        return True, {"slope": None, "predicted": predicted, "below_noise_floor": True, "note": str(exc),
                      "passed": True}
    out = report.to_dict()
    ok = True
    if min_slope is not None:
        ok = report.slope >= min_slope
    if band is not None:
        ok = ok and band[0] <= report.slope <= band[1]
    out.update(min_slope=min_slope, slope_band=band, passed=ok)
    return ok, out


def _weak_order(problem, functional, cfg):
    if problem.kind is ProblemKind.KILLED:
        raise ConfigError("weak_order handles plain and reflected problems; use killed_bias")
    h_ref = cfg.h_ref if cfg.h_ref is not None else min(cfg.h_ladder) / 8
    ladder = weak_error_vs_reference(problem, functional, cfg.h_ladder, h_ref, cfg.n_paths, cfg.seed,
                                     coupled=cfg.coupled)
    rate = predicted_weak_order(problem, functional)
    min_slope = cfg.options.get("min_slope")
    if min_slope is None and rate.exponent is not None:
        min_slope = 0.8 * rate.exponent
    ok, section = _rate_section(ladder, rate.exponent, min_slope)
    report = {"predicted_kappa": rate.exponent, "predicted_note": rate.note,
              "measured_kappa": section.get("slope"), "h_ref": h_ref,
              "reference_scheme": "coupled fine grid" if cfg.coupled else "independent fine grid",
              "rate": section}
    return ok, report, ladder


def _identity(problem, functional, cfg):
    grid = _grid(problem, cfg, 2.0**-6)
    if problem.kind is ProblemKind.KILLED:
        res = killed_identity_test(problem, functional.g, grid, cfg.n_paths, cfg.seed)
    elif problem.kind is ProblemKind.PLAIN:
        res = girsanov_identity_check(problem, functional, grid, cfg.n_paths, cfg.seed)
    else:
        raise ConfigError("identity_check needs a plain or killed problem")
    return res.passed, {"h": grid.h, **res.to_dict()}, None


def _reflected_law(problem, functional, cfg):
    grid = _grid(problem, cfg, 2.0**-8)
    try:
        res = reflected_law_check(problem, grid, cfg.n_paths, cfg.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return res.passed, {"h": grid.h, **res.to_dict()}, None


def _killed_bias(problem, functional, cfg):
    if problem.kind is not ProblemKind.KILLED or problem.domain.shape != "interval":
        raise ConfigError("killed_bias needs a killed problem on an interval")
    probe = np.linspace(-3, 3, 13)[:, None]
    if np.any(problem.drift(probe) != 0):
        raise ConfigError("killed_bias compares against the driftless survival series; drift must be zero")
    sigma = float(problem.diffusion.sigma[0, 0])
    ref = reference_exit_probability(problem.domain, float(problem.x0[0]), sigma, problem.horizon)
    g = functional.g
    ladder = killed_bias_ladder(problem, g, cfg.h_ladder, cfg.n_paths, ref, cfg.seed)
    band = tuple(cfg.options.get("slope_band", (0.35, 0.65)))
    ok, section = _rate_section(ladder, None, band=band)
    dominated = all(p.estimate >= ref - 3 * p.stderr for p in ladder)
    rate = predicted_weak_order(problem, functional)
    report = {"reference_survival": ref, "monotone_dominance": dominated,
              "predicted_exponents": [rate.exponent, rate.barrier_exponent],
              "measured_kappa": section.get("slope"), "rate": section}
    return ok and dominated, report, ladder


def _weight_diagnostic(problem, functional, cfg):
    grid = _grid(problem, cfg, 2.0**-6)
    p = float(cfg.options.get("p", 2.0))
    schedule = [int(n) for n in cfg.options.get("schedule", (10_000, 100_000, 1_000_000))]
    diag = weight_moment_diagnostic(problem, grid, p, schedule, cfg.seed,
                                    estimator=cfg.options.get("estimator", "tilted"))
    return True, {"h": grid.h, **diag.to_dict()}, None


RUNNERS = {
    "weak_order": _weak_order,
    "identity_check": _identity,
    "reflected_law": _reflected_law,
    "killed_bias": _killed_bias,
    "weight_diagnostic": _weight_diagnostic,
}


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[Union[str, Path]] = None) -> int:
    """Run ``cfg`` and write ``report.json`` (and ``ladder.csv`` for ladder pipelines)."""
    try:
        problem = build_problem(cfg)
        check = validate_problem(problem)
        if not check.ok:
            raise ConfigError("; ".join(map(str, check.violations)))
        functional = build_functional(cfg)
        for h in cfg.h_ladder:
            Grid.from_step(problem.horizon, h)
        ok, report, ladder = RUNNERS[cfg.pipeline](problem, functional, cfg)
    except (ConfigError, ValueError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if ladder is not None:
        write_ladder_csv(out / "ladder.csv", ladder)
    payload = {"pipeline": cfg.pipeline, "problem": cfg.problem, "seed": cfg.seed, "n_paths": cfg.n_paths,
               "passed": bool(ok), **report}
    write_json(out / "report.json", _finite(payload))
    print(f"{cfg.pipeline}: {'PASS' if ok else 'FAIL'} -> {out}")
    return EXIT_PASS if ok else EXIT_FAIL


def _finite(obj):
    """Replace NaN/inf with None so the report is strict JSON."""
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not math.isfinite(obj):
        return None
    return obj


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="emweak", description=__doc__.splitlines()[0])
    parser.add_argument("--config", type=Path, help="experiment config (JSON)")
    parser.add_argument("--seed", type=int, help="master seed (overrides config)")
    parser.add_argument("--paths", type=int, help="Monte Carlo paths (overrides config)")
    parser.add_argument("--out", type=Path, help="output directory (overrides config)")
    parser.add_argument("--pipeline", choices=PIPELINES, help="pipeline (overrides config)")
    parser.add_argument("--list", action="store_true", help="list built-in problems and exit")
    args = parser.parse_args(argv)

    if args.list:
        for row in catalogue.list_builtins():
            print(json.dumps(row, sort_keys=True))
        return EXIT_PASS
    if args.config is None:
        parser.error("--config is required")
    try:
        cfg = ExperimentConfig.loads(args.config.read_text())
    except (OSError, ConfigError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.seed = args.seed
    if args.paths is not None:
        cfg.n_paths = args.paths
    if args.pipeline is not None:
        cfg.pipeline = args.pipeline
    return run_experiment(cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
