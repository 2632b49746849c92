import math

import numpy as np
import pytest

from emweak import catalogue
from emweak.em import Grid, NonFiniteDriftError, brownian_increments
from emweak.girsanov import (WeightAccumulator, accumulate_weight_step, bridge_refine, coupled_difference_samples,
                             coupled_weak_error_estimate, girsanov_identity_check, weight_moment_diagnostic,
                             weighted_payoff_estimate)
from emweak.model import PathFunctional
from emweak.sampling import RngStream

from conftest import identity_g, plain

ONE = PathFunctional.terminal(lambda x: np.ones(x.shape[0]), bounded=True, name="one")


def run_weight(drift_value, grid, n, seed=0):
    acc = WeightAccumulator.start(n)
    w = np.zeros((n, 1))
    for dw in brownian_increments(RngStream(seed), grid, 1, n):
        acc = accumulate_weight_step(acc, drift_value(w), dw, grid.h)
        w = w + dw
    return acc, w


def test_zero_drift_weight_is_one():
    acc, _ = run_weight(lambda w: np.zeros_like(w), Grid(1.0, 16), 100)
    assert np.all(acc.log_weight == 0) and np.all(acc.weight == 1)
    assert acc.steps_consumed == 16


def test_constant_drift_weight_telescopes():
    c = 0.7
    acc, w = run_weight(lambda w: np.full_like(w, c), Grid(2.0, 32), 100)
    np.testing.assert_allclose(acc.log_weight, c * w[:, 0] - c * c * 2.0 / 2, atol=1e-12)
    np.testing.assert_allclose(acc.weight, np.exp(acc.log_weight), rtol=1e-12)
    assert np.all(acc.weight > 0)


def test_accumulate_rejects_shape_mismatch_and_non_finite():
    acc = WeightAccumulator.start(2)
    with pytest.raises(ValueError):
        accumulate_weight_step(acc, np.zeros((2, 1)), np.zeros((2, 2)), 0.1)
    with pytest.raises(NonFiniteDriftError):
        accumulate_weight_step(acc, np.array([[np.nan], [0.0]]), np.zeros((2, 1)), 0.1)


def test_weight_mean_is_one_for_sign_drift():
    p = plain(catalogue.sign_drift())
    est = weighted_payoff_estimate(p, ONE, Grid(1.0, 16), 200_000, master_seed=1)
    assert abs(est.mean - 1) < 3 * est.stderr


def test_weighted_estimate_zero_drift_gives_x0():
    p = plain(x0=0.4)
    est = weighted_payoff_estimate(p, PathFunctional.terminal(identity_g), Grid(1.0, 8), 100_000)
    assert abs(est.mean - 0.4) < 3 * est.stderr


def test_weighted_estimate_constant_drift():
    p = plain(catalogue.constant_drift(0.3), x0=0.1)
    est = weighted_payoff_estimate(p, PathFunctional.terminal(identity_g), Grid(1.0, 8), 200_000, master_seed=2)
    assert abs(est.mean - 0.4) < 3 * est.stderr


def test_identity_check_negative_sign(terminal_tanh):
    p = plain(catalogue.sign_drift(-1.0))
    check = girsanov_identity_check(p, terminal_tanh, Grid(1.0, 32), 200_000, master_seed=5)
    assert check.passed, check.to_dict()


def test_identity_check_integral_functional():
    p = plain(catalogue.step_drift())
    fun = PathFunctional.integral(identity_g, f=np.tanh, beta=1.0, bounded=True)
    assert girsanov_identity_check(p, fun, Grid(1.0, 16), 100_000, master_seed=6).passed


def test_linear_drift_warning_becomes_a_note():
    p = plain(catalogue.ou_drift(), x0=1.0)
    with pytest.warns(RuntimeWarning, match="linear-growth"):
        est = weighted_payoff_estimate(p, ONE, Grid(1.0, 8), 1000)
    assert any("linear-growth" in n for n in est.notes)


def test_bridge_refine_sums_to_coarse_increment():
    dw = RngStream(0).standard_normal((10, 2))
    sub = bridge_refine(dw, 8, RngStream(1), 0.1)
    np.testing.assert_allclose(sub.sum(axis=0), dw, atol=1e-12)


def test_bridge_refine_has_brownian_law():
    # unconditional sub-increments of a refined N(0, h) increment are N(0, h/m) and uncorrelated
    h, m, n = 0.25, 4, 400_000
    dw = math.sqrt(h) * RngStream(2).standard_normal((n, 1))
    sub = bridge_refine(dw, m, RngStream(3), math.sqrt(h / m))[:, :, 0]
    assert np.all(np.abs(sub.var(axis=1) - h / m) < 0.003)
    assert abs(np.mean(sub[0] * sub[1])) < 0.003


def test_coupled_estimator_zero_for_exact_drifts(terminal_tanh):
    grid = Grid(1.0, 8)
    zero = coupled_difference_samples(plain(), terminal_tanh, grid, 4, RngStream(0), 1000)
    assert np.all(zero == 0)
    const = coupled_difference_samples(plain(catalogue.constant_drift(0.3)), terminal_tanh, grid, 4,
                                       RngStream(0), 1000)
    assert np.max(np.abs(const)) < 1e-12


def test_coupled_estimator_shrinks_with_h(terminal_tanh):
    p = plain(catalogue.sign_drift(-1.0), x0=0.5)
    errs = [abs(coupled_weak_error_estimate(p, terminal_tanh, Grid.from_step(1.0, h), int(h * 2**10), 20_000,
                                            master_seed=3).mean) for h in (2.0**-2, 2.0**-5)]
    assert errs[1] < errs[0]


def test_coupled_estimator_rejects_small_m(terminal_tanh):
    with pytest.raises(ValueError):
        coupled_weak_error_estimate(plain(), terminal_tanh, Grid(1.0, 4), 1, 100)


def test_moment_diagnostic_zero_drift_is_exact():
    diag = weight_moment_diagnostic(plain(), Grid(1.0, 8), 3.0, schedule=(1000, 2000))
    assert [r["moment"] for r in diag.records] == [1.0, 1.0]
    assert diag.stabilized and diag.warning is None


def test_moment_diagnostic_records_are_structured():
    diag = weight_moment_diagnostic(plain(catalogue.sign_drift()), Grid(1.0, 8), 2.0, schedule=(1000, 4000))
    rec = diag.records[0]
    assert set(rec) >= {"drift", "p", "n_paths", "moment"}
    assert rec["drift"] == "sign" and rec["n_paths"] == 1000


def test_moment_estimators_agree():
    p = catalogue.get_builtin("holder_drift").problem()
    res = {e: weight_moment_diagnostic(p, Grid(1.0, 16), 1.5, schedule=(200_000,), estimator=e).records[0]
           for e in ("plain", "tilted")}
    diff = abs(res["plain"]["moment"] - res["tilted"]["moment"])
    assert diff < 4 * math.hypot(res["plain"]["stderr"], res["tilted"]["stderr"])


def test_tilted_moment_exact_for_sign_drift():
    # |sign(W_k)| = 1 except at k = 0, so the tilted sample is exp((p^2 - p)/2 (T - h))
    grid = Grid(1.0, 64)
    diag = weight_moment_diagnostic(plain(catalogue.sign_drift()), grid, 4.0, schedule=(1000,))
    assert diag.records[0]["moment"] == pytest.approx(math.exp(6 * (1 - grid.h)), rel=1e-12)


def test_moment_diagnostic_rejects_unknown_estimator():
    with pytest.raises(ValueError):
        weight_moment_diagnostic(plain(), Grid(1.0, 4), 2.0, estimator="nope")
