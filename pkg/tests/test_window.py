import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from luckock import errors
from luckock.analytic import Classification, classify
from luckock.model import power, uniform
from luckock.window import (
    master_residual, phi, phi_boundaries, phi_minus, phi_plus, symmetric_classify, v_luckock,
)

from oracles import uniform_phi

V_L_UNIFORM = 0.7821882942802  # frozen from brentq on oracles.uniform_phi(v) = 4


def test_phi_matches_quadrature():
    spec = uniform()
    for v in (0.55, 0.6, 0.75, 0.9):
        assert float(phi(spec, v)) == pytest.approx(uniform_phi(v), rel=1e-11)


def test_v_luckock_of_uniform():
    res = v_luckock(uniform())
    oracle = brentq(lambda v: uniform_phi(v) - 4.0, 0.55, 0.99, xtol=1e-15)
    assert res.v_l == pytest.approx(oracle, abs=1e-12)
    assert res.v_l == pytest.approx(V_L_UNIFORM, abs=1e-12)
    assert res.v_w == pytest.approx(0.5)
    assert res.j_lo == pytest.approx(1 - res.v_l, abs=1e-12)
    assert res.j_hi == pytest.approx(res.v_l, abs=1e-12)
    assert not res.saturated


def test_master_identity_at_v_luckock():
    res = v_luckock(uniform())
    r_plus, r_minus = master_residual(uniform(), res.v_l)
    assert abs(float(r_plus)) < 1e-10 and abs(float(r_minus)) < 1e-10


@settings(max_examples=20, deadline=None)
@given(st.floats(0.55, 0.95))
def test_master_identity_holds_for_every_window(v):
    # V_W^-2 - Phi(V) equals Lambda on the symmetric window for any V, not only at V_L
    r_plus, r_minus = master_residual(uniform(), v)
    assert abs(float(r_plus)) < 1e-8 and abs(float(r_minus)) < 1e-8


def test_symmetric_classification_switches_at_v_luckock():
    spec = uniform()
    assert symmetric_classify(spec, 0.7) == 1
    assert symmetric_classify(spec, 0.9) == -1
    assert classify(uniform(1 - V_L_UNIFORM, V_L_UNIFORM)) is Classification.NULL_BOUNDARY


def test_symmetric_classification_errors():
    with pytest.raises(errors.OutOfRange):
        symmetric_classify(uniform(), 0.4)
    with pytest.raises(errors.NotInterior):
        symmetric_classify(uniform(), 1.0)


@pytest.mark.parametrize("alpha,saturated", [(0.4, True), (0.5, True), (0.8, False), (2.0, False)])
def test_saturation_of_power_models(alpha, saturated):
    res = v_luckock(power(alpha))
    assert res.saturated is saturated
    if saturated:
        assert res.v_l == res.v_max
    else:
        assert res.v_w < res.v_l < res.v_max


def test_boundary_curves_meet_at_luckock_window():
    spec = uniform()
    a = np.array([1 - V_L_UNIFORM])
    assert float(phi_plus(spec, a)[0]) == pytest.approx(V_L_UNIFORM, abs=1e-9)
    assert float(phi_minus(spec, np.array([V_L_UNIFORM]))[0]) == pytest.approx(1 - V_L_UNIFORM, abs=1e-9)


def test_region_grid():
    grid = phi_boundaries(uniform(), 16)
    a, b = grid.intersection
    assert a == pytest.approx(1 - V_L_UNIFORM, abs=1e-8)
    assert b == pytest.approx(V_L_UNIFORM, abs=1e-8)
    # a window well inside the region and one reaching almost to the ends
    i = int(np.searchsorted(grid.samples, 0.3))
    j = int(np.searchsorted(grid.samples, 0.7))
    assert grid.membership[i, j]
    assert not grid.membership[0, -1]
    assert not grid.membership[j, i]  # a >= b is never a window
    assert len(list(grid.rows())) == 16 * 16


def test_region_resolution_floor():
    with pytest.raises(ValueError):
        phi_boundaries(uniform(), 8)
