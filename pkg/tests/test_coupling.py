import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import expit

from ahvortex import (CouplingModel, builtin_classical, builtin_m_family, check_plane_conditions,
                      model_from_selector, validate_coupling)
from ahvortex.coupling import model_from_text

finite_t = st.floats(-700.0, 700.0, allow_nan=False)


def test_classical_vacuum_values():
    c = builtin_classical()
    assert c.sf_log(np.array(0.0)) == 0.5
    assert c.w_log(np.array(0.0)) == 0.0
    assert c.F_at_one == 1.0


def test_classical_saturates_without_overflow():
    c = builtin_classical()
    with np.errstate(all="raise"):
        assert c.sf_log(np.array(700.0)) == 1.0
        assert c.sf_log(np.array(-700.0)) >= 0.0
        assert c.w_log(np.array(700.0)) == -1.0


def test_m1_matches_classical():
    c, m1 = builtin_classical(), builtin_m_family(1)
    t = np.linspace(-50, 50, 1001)
    for name in ("sf_log", "sF_log", "w_log"):
        np.testing.assert_allclose(getattr(m1, name)(t), getattr(c, name)(t), rtol=0, atol=1e-15)


def test_m_family_closed_forms():
    m2 = builtin_m_family(2)
    assert m2.sf_log(np.array(0.0)) == 0.5
    assert m2.w_log(np.array(math.log(3.0))) == pytest.approx(-0.8, abs=1e-15)
    assert builtin_m_family(4).F_at_one == 4.0
    # F = -2 w'(s): in t, sF = -2 dw/dt
    t = np.linspace(-5, 5, 41)
    h = 1e-6
    fd = -2 * (m2.w_log(t + h) - m2.w_log(t - h)) / (2 * h)
    np.testing.assert_allclose(m2.sF_log(t), fd, atol=1e-8)


@pytest.mark.parametrize("bad", [0, -1, 1.5, True])
def test_m_family_rejects_bad_m(bad):
    with pytest.raises(ValueError):
        builtin_m_family(bad)


@settings(max_examples=200, deadline=None)
@given(finite_t, st.integers(1, 6))
def test_identities_hold_everywhere(t, m):
    model = builtin_m_family(m)
    ta = np.array(t)
    sf, w, sF = model.sf_log(ta), model.w_log(ta), model.sF_log(ta)
    assert 0.0 <= sf <= 1.0
    assert abs(w - (1 - 2 * sf)) <= 1e-15
    assert sF >= 0.0 and np.isfinite(sF)


@settings(max_examples=100, deadline=None)
@given(st.floats(-30, 30), st.integers(1, 5))
def test_c2_symmetry_for_m_family(t, m):
    model = builtin_m_family(m)
    assert model.sf_log(np.array(t)) + model.sf_log(np.array(-t)) == pytest.approx(1.0, abs=1e-15)


def test_validate_classical_and_family():
    assert validate_coupling(builtin_classical(), t_range=(-30, 30), samples=1000).passed
    assert validate_coupling(builtin_m_family(3)).passed


def test_validate_broken_model_locates_violations():
    broken = CouplingModel("broken", lambda t: expit(t) - 0.1)
    rep = validate_coupling(broken)
    assert not rep.passed
    conds = {v[0] for v in rep.violations}
    assert "sf>=0" in conds and "sf(0)=1/2" in conds
    where = [v[1] for v in rep.violations if v[0] == "sf>=0"]
    assert all(expit(t) - 0.1 < 0 for t in where)


def test_plane_conditions_builtins():
    for model in (builtin_classical(), builtin_m_family(2), builtin_m_family(3)):
        rep = check_plane_conditions(model)
        assert rep.passed and rep.c2_equality


def test_plane_conditions_broken_c1():
    broken = CouplingModel("linear", lambda t: np.exp(np.minimum(t, 0.0)))
    rep = check_plane_conditions(broken)
    assert not rep.passed
    c1 = [v for v in rep.violations if v[0] == "C1"]
    assert c1
    # sf(s) = s violates 4 s <= 1 + s exactly for s > 1/3, e.g. 4 > 2 at s = 1
    for _, t, lhs, rhs in c1:
        assert t > math.log(1 / 3) and lhs > rhs
        assert lhs == pytest.approx(4 * math.exp(t)) and rhs == pytest.approx(1 + math.exp(t))
    only_one = check_plane_conditions(CouplingModel("linear", lambda t: np.exp(np.minimum(t, 0.0))),
                                      samples=2)
    assert any(v[0] == "C1" and v[1] == 0.0 and v[2] == 4.0 and v[3] == 2.0 for v in only_one.violations)


def test_lambda_condition_runs():
    rep = validate_coupling(builtin_classical(), t_range=(-10, 10), samples=64, lam=0.1)
    assert rep.sampled_points == 65


def test_selectors_and_custom(tmp_path):
    assert model_from_selector("classical").name == "classical"
    assert model_from_selector("m:3").F_at_one == 3.0
    p = tmp_path / "half.txt"
    p.write_text("name = half\nsf_log = expit(0.5 * t)\n")
    model = model_from_selector(f"custom:{p}")
    assert model.F_at_one == pytest.approx(0.5, rel=1e-8)
    with pytest.raises(ValueError):
        model_from_selector("nope")
    with pytest.raises(ValueError):
        model_from_text("sf_log = __import__('os')")
