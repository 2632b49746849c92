import numpy as np
import pytest
from hypothesis import given, strategies as st

from emweak import catalogue
from emweak.model import (DomainSpec, DriftSpec, GrowthClass, PathFunctional, SdeProblem,
                          SingularMatrixError, inverse_diffusion, predicted_weak_order, validate_problem)

from conftest import custom_drift, identity_g, plain


def test_growth_ordering_is_total():
    order = [GrowthClass.BOUNDED, GrowthClass.SUB_LINEAR, GrowthClass.LINEAR, GrowthClass.SUPER_LINEAR]
    assert order == sorted(order)
    assert GrowthClass.parse("sub-linear") is GrowthClass.SUB_LINEAR
    assert GrowthClass.LINEAR.tag == "linear"
    with pytest.raises(ValueError):
        GrowthClass.parse("quadratic")


def test_drift_spec_rejects_bad_alpha_and_missing_decomposition():
    with pytest.raises(ValueError):
        DriftSpec(lambda x: x, GrowthClass.BOUNDED, holder_alpha=1.5)
    with pytest.raises(ValueError):
        DriftSpec(lambda x: x, GrowthClass.BOUNDED, holder_alpha=0.0)
    with pytest.raises(ValueError, match="Hölder part, a class-A part"):
        DriftSpec(lambda x: x, GrowthClass.BOUNDED)
    DriftSpec(np.sign, GrowthClass.BOUNDED, class_a=(True,))


def test_inverse_diffusion_examples():
    inv = inverse_diffusion(np.eye(2))
    assert np.array_equal(inv.sigma_inv, np.eye(2))
    inv = inverse_diffusion(np.diag([2.0, 0.5]))
    np.testing.assert_allclose(inv.sigma_inv, np.diag([0.5, 2.0]))
    with pytest.raises(SingularMatrixError):
        inverse_diffusion([[1.0, 1.0], [1.0, 1.0]])


def test_inverse_diffusion_rejects_non_square_and_zero():
    with pytest.raises(ValueError):
        inverse_diffusion(np.ones((2, 3)))
    with pytest.raises(SingularMatrixError):
        inverse_diffusion(np.zeros((2, 2)))


@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_inverse_diffusion_residual_or_singular(entries):
    s = np.array(entries).reshape(2, 2) + 2.5 * np.eye(2)
    try:
        inv = inverse_diffusion(s)
    except SingularMatrixError:
        return
    assert np.abs(inv.sigma @ inv.sigma_inv - np.eye(2)).sum(axis=1).max() < 1e-10


def test_scalar_sigma_is_one_by_one():
    p = plain(sigma=2.0)
    assert p.diffusion.sigma.shape == (1, 1)
    assert p.diffusion.sigma_inv[0, 0] == 0.5


def test_domain_invariants_and_open_boundary():
    with pytest.raises(ValueError):
        DomainSpec.interval(1.0, -1.0)
    with pytest.raises(ValueError):
        DomainSpec.ball([0.0, 0.0], 0.0)
    with pytest.raises(ValueError):
        DomainSpec.interval(-1, 1, support_gap_epsilon=-0.1)
    d = DomainSpec.interval(-1, 1)
    assert d.contains(np.array([[0.0], [1.0], [-1.0], [0.999]])).tolist() == [True, False, False, True]
    ball = DomainSpec.ball([0.0, 0.0], 1.0)
    assert ball.contains(np.array([[0.5, 0.5], [1.0, 0.0]])).tolist() == [True, False]
    box = DomainSpec.box([0, 0], [1, 2])
    assert box.contains(np.array([[0.5, 1.9], [0.5, 2.0]])).tolist() == [True, False]


def test_support_gap_check():
    d = DomainSpec.interval(-1, 1, support_gap_epsilon=0.25)
    assert d.support_gap_ok(-0.5, 0.5)
    assert not d.support_gap_ok(-0.6, 0.6)


def test_validate_zero_drift_ok():
    assert validate_problem(plain()).ok


def test_validate_rejects_super_linear():
    drift = DriftSpec(lambda x: x**3, GrowthClass.SUPER_LINEAR, holder_alpha=1.0)
    result = validate_problem(plain(drift))
    assert not result.ok
    assert any("super-linear drift" in str(v) for v in result.violations)
    assert result.violations[0].field == "drift.growth"


def test_validate_rejects_reflected_in_two_dimensions():
    p = SdeProblem.build(catalogue.zero_drift(), x0=[0.0, 0.0], sigma=np.eye(2), kind="reflected")
    result = validate_problem(p)
    assert any("reflected requires d=1" in str(v) for v in result.violations)


def test_validate_reflected_negative_start_and_killed_rules():
    assert not validate_problem(plain(x0=-0.1, kind="reflected")).ok
    assert not validate_problem(plain(kind="killed")).ok
    outside = plain(x0=2.0, kind="killed", domain=DomainSpec.interval(-1, 1))
    assert any(v.field == "x0" for v in validate_problem(outside).violations)
    on_edge = plain(x0=1.0, kind="killed", domain=DomainSpec.interval(-1, 1))
    assert not validate_problem(on_edge).ok


def test_validate_linear_growth_warns_only_for_girsanov():
    p = plain(catalogue.ou_drift(), x0=1.0)
    assert validate_problem(p).warnings == ()
    result = validate_problem(p, girsanov=True)
    assert result.ok and result.warnings


def test_validate_is_pure():
    p = plain(catalogue.sign_drift())
    assert validate_problem(p) == validate_problem(p)


def test_predicted_order_examples():
    p = plain(custom_drift(np.tanh, GrowthClass.SUB_LINEAR, 1.0))
    assert predicted_weak_order(p).exponent == 0.25
    refl = plain(catalogue.holder_drift(0.5), x0=0.0, kind="reflected")
    assert predicted_weak_order(refl).exponent == 0.25
    integral = PathFunctional.integral(identity_g, beta=1 / 3)
    assert predicted_weak_order(plain(custom_drift(np.tanh)), integral).exponent == pytest.approx(1 / 6)


def test_predicted_order_killed_reports_both_exponents():
    p = plain(catalogue.zero_drift(), kind="killed", domain=DomainSpec.interval(-1, 1, holder_p=4.0))
    rate = predicted_weak_order(p)
    assert rate.exponent == 0.25 and rate.barrier_exponent == 0.125
    default = plain(kind="killed", domain=DomainSpec.interval(-1, 1))
    assert predicted_weak_order(default).barrier_exponent == 0.25


def test_predicted_order_linear_growth_without_rate():
    p = plain(catalogue.ou_drift(), x0=1.0)
    rate = predicted_weak_order(p, PathFunctional.terminal(np.tanh, bounded=True))
    assert rate.exponent is None and "without rate" in rate.note


def test_predicted_order_requires_alpha_for_reflected():
    with pytest.raises(ValueError, match="alpha"):
        predicted_weak_order(plain(catalogue.sign_drift(), kind="reflected"))


alphas = st.floats(0.01, 1.0)


@given(alphas, alphas, alphas, alphas)
def test_predicted_order_monotone_and_capped(a1, a2, b1, b2):
    a1, a2 = sorted((a1, a2))
    b1, b2 = sorted((b1, b2))

    def kappa(a, b=None, kind="plain"):
        p = plain(custom_drift(np.tanh, alpha=a), kind=kind)
        f = PathFunctional.integral(identity_g, beta=b) if b is not None else None
        return predicted_weak_order(p, f).exponent

    assert kappa(a1) <= kappa(a2) <= 0.25
    assert kappa(a1, b1) <= kappa(a2, b2) <= 0.25
    assert kappa(a1, b1) <= kappa(a1, b2)
    assert kappa(a2, kind="reflected") == a2 / 2


def test_path_functional_constructors():
    f = PathFunctional.integral(identity_g, beta=0.5)
    assert f.kind.value == "integral"
    with pytest.raises(ValueError):
        PathFunctional.integral(identity_g, beta=2.0)
    with pytest.raises(ValueError):
        PathFunctional("grid-path")
