import numpy as np
import pytest

from emweak import catalogue
from emweak.model import validate_problem


def rows():
    return {r["name"]: r for r in catalogue.list_builtins()}


def test_catalogue_contains_required_entries():
    names = set(rows())
    assert {"zero_drift", "constant_drift", "ou_drift", "sign_drift", "holder_drift", "reflected_bm",
            "killed_bm_interval"} <= names


def test_sign_drift_declared_bounded_class_a():
    r = rows()["sign_drift"]
    assert r["growth"] == "bounded" and r["class_a"]


def test_ou_drift_linear_with_warning():
    r = rows()["ou_drift"]
    assert r["growth"] == "linear" and r["girsanov_warning"]


def test_every_entry_validates():
    for name, b in catalogue.BUILTINS.items():
        assert validate_problem(b.problem()).ok, name
        assert rows()[name]["valid"]


def test_killed_sign_support_gap():
    b = catalogue.get_builtin("killed_sign_interval")
    r = b.functional["g_params"]["r"]
    assert b.problem().domain.support_gap_ok(-r, r)


def test_builtin_overrides():
    p = catalogue.get_builtin("holder_drift").problem(x0=0.7, drift_params={"alpha": 0.3})
    assert p.x0[0] == 0.7 and p.drift.holder_alpha == 0.3


def test_unknown_names():
    with pytest.raises(KeyError, match="unknown problem"):
        catalogue.get_builtin("nope")
    with pytest.raises(ValueError):
        catalogue.make_functional({"g": "nope"})
    with pytest.raises(ValueError):
        catalogue.make_functional({"kind": "grid-path"})


def test_drifts_are_componentwise():
    x = np.array([[-2.0, 0.5], [0.0, 3.0]])
    np.testing.assert_array_equal(catalogue.sign_drift()(x), np.sign(x))
    np.testing.assert_array_equal(catalogue.step_drift()(x), [[0, 1], [0, 1]])
    np.testing.assert_allclose(catalogue.holder_drift(0.5)(x), [[-1, 0.5**0.5], [0, 1]])
    np.testing.assert_array_equal(catalogue.clipped_decay_drift()(x), [[0, -0.5], [0, -2]])
