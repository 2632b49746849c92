import math

import numpy as np
import pytest

from emweak import catalogue
from emweak.em import Grid, GridPath, simulate_em_path
from emweak.killed import (discrete_exit_time, killed_bias_ladder, killed_identity_test, killed_payoff_estimate,
                           reference_exit_probability)
from emweak.model import DomainSpec
from emweak.sampling import RngStream

from conftest import killed

ONE = lambda x: np.ones(x.shape[0])  # noqa: E731
INTERVAL = DomainSpec.interval(-1.0, 1.0)


def path_of(values):
    states = np.asarray(values, dtype=float)[:, None, None]
    return GridPath(Grid(1.0, len(values) - 1), states, np.diff(states, axis=0))


def test_exit_examples():
    rec = discrete_exit_time(path_of([0, 0.5, -0.9, 0.3]), INTERVAL)
    assert not rec.exited[0] and rec.exit_step[0] == -1 and rec.alive_at_T[0]
    rec = discrete_exit_time(path_of([0, 0.5, 1.2, 0.3]), INTERVAL)
    assert rec.exited[0] and rec.exit_step[0] == 2 and not rec.alive_at_T[0]
    rec = discrete_exit_time(path_of([0, 1.0, 0.0]), INTERVAL)
    assert rec.exited[0] and rec.exit_step[0] == 1


def test_exit_dimension_mismatch():
    with pytest.raises(ValueError):
        discrete_exit_time(path_of([0, 0.5]), DomainSpec.box([-1, -1], [1, 1]))


def test_exit_record_matches_simulated_paths():
    p = catalogue.get_builtin("killed_bm_interval").problem()
    path = simulate_em_path(p, Grid(1.0, 32), RngStream(0), n_paths=500)
    rec = discrete_exit_time(path, p.domain)
    inside = (np.abs(path.states[:, :, 0]) < 1).all(axis=0)
    assert np.array_equal(rec.alive_at_T, inside)
    assert np.all((rec.exit_step[rec.exited] >= 1) & (rec.exit_step[rec.exited] <= 32))


def test_huge_interval_never_kills():
    p = killed(a=-1e6, b=1e6)
    est = killed_payoff_estimate(p, ONE, Grid(1.0, 16), 10_000)
    assert est.mean == 1.0


def test_zero_payoff_gives_zero():
    est = killed_payoff_estimate(killed(), lambda x: np.zeros(x.shape[0]), Grid(1.0, 16), 1000, g_sup=0.0)
    assert est.mean == 0.0 and est.stderr == 0.0


def test_unbounded_payoff_rejected():
    with pytest.raises(ValueError, match="bounded"):
        killed_payoff_estimate(killed(), ONE, Grid(1.0, 4), 1000, g_sup=math.inf)


def test_non_killed_problem_rejected():
    with pytest.raises(ValueError):
        killed_payoff_estimate(catalogue.get_builtin("zero_drift").problem(), ONE, Grid(1.0, 4), 1000)


def test_reference_survival_examples():
    assert reference_exit_probability(INTERVAL, 1.0, 1.0, 1.0) == 0.0
    assert reference_exit_probability(INTERVAL, 0.0, 1.0, 1e-6) >= 1 - 1e-9
    assert reference_exit_probability(INTERVAL, 0.0, 1.0, 1.0) == pytest.approx(0.3707, abs=1e-4)


def test_reference_series_agrees_with_ten_term_formula():
    ten = 4 / math.pi * sum((-1) ** n / (2 * n + 1) * math.exp(-((2 * n + 1) ** 2) * math.pi**2 / 8)
                            for n in range(10))
    assert reference_exit_probability(INTERVAL, 0.0, 1.0, 1.0) == pytest.approx(ten, abs=1e-12)


@pytest.mark.parametrize("x0,sigma,t", [(0.3, 1.0, 0.2), (-0.5, 0.7, 0.05), (0.9, 2.0, 0.3)])
def test_reference_eigen_and_images_branches_agree(x0, sigma, t):
    from emweak.killed import _survival_eigen, _survival_images

    s = sigma * sigma * t
    assert _survival_eigen(-1.0, 2.0, x0, s, 1e-14) == pytest.approx(_survival_images(-1.0, 1.0, x0, s, 1e-14),
                                                                    abs=1e-10)


def test_reference_rejects_non_interval():
    with pytest.raises(ValueError):
        reference_exit_probability(DomainSpec.box([-1, -1], [1, 1]), 0.0, 1.0, 1.0)


def test_discrete_survival_decreases_towards_reference():
    p = catalogue.get_builtin("killed_bm_interval").problem()
    ref = reference_exit_probability(p.domain, 0.0, 1.0, 1.0)
    ladder = killed_bias_ladder(p, ONE, [2.0**-3, 2.0**-6], 50_000, ref, master_seed=1)
    assert ladder[0].estimate > ladder[1].estimate > ref - 3 * ladder[1].stderr
    assert all(pt.error == pytest.approx(ref - pt.estimate) for pt in ladder)


def test_identity_zero_drift():
    p = catalogue.get_builtin("killed_bm_interval").problem()
    assert killed_identity_test(p, ONE, Grid(1.0, 32), 100_000).passed


@pytest.mark.parametrize("drift", [catalogue.sign_drift(-1.0), catalogue.constant_drift(0.3)])
def test_identity_irregular_drift(drift):
    g = catalogue.G_FUNCTIONS["indicator_abs_le"](0.5)
    p = killed(drift, support_gap_epsilon=0.25)
    assert p.domain.support_gap_ok(-0.5, 0.5)
    check = killed_identity_test(p, g, Grid.from_step(1.0, 2.0**-6), 200_000, master_seed=2)
    assert check.passed, check.to_dict()
