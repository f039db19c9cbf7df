import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from luckock import analytic as A
from luckock import errors
from luckock.model import Constant, ModelSpec, uniform
from luckock.sim import OrderBook
from luckock.window import v_luckock

from conftest import closed_form_specs, piecewise_asymmetric
from oracles import luckock_ode, uniform_gamma

# frozen from oracles.luckock_ode at np.linspace(lo, hi, 9)
UNIFORM_03_09_F_MINUS = [0.38035795, 0.59803394, 0.76283743, 0.88613072, 0.974204,
                         1.03028774, 1.05524183, 1.04729527, 1.0]
UNIFORM_03_09_F_PLUS = [1.0, 0.94375145, 0.85605553, 0.73450264, 0.57396246,
                        0.36511742, 0.09070406, -0.28520693, -0.85892615]
PIECEWISE_F_MINUS = [-4.78048262, -2.55381691, -1.42529074, -0.58980531, 0.10665126,
                     0.4275403, 0.68688055, 0.882916, 1.0]
PIECEWISE_F_PLUS = [1.0, 1.46471167, 1.77783279, 1.93953203, 1.97719998,
                    1.91211604, 1.73839813, 1.38596077, 0.60975869]
UNIFORM_025_075_F_MINUS = [0.13810878, 0.3592629, 0.53405432, 0.67362301, 0.7845272,
                           0.87078601, 0.93481092, 0.97782915, 1.0]


def test_gamma_of_uniform_matches_antiderivative():
    assert A.gamma(uniform(0.3, 0.9)) == pytest.approx(uniform_gamma(0.3, 0.9), rel=1e-10)


def test_gamma_two_forms_agree(closed_spec):
    sol = A.solve_luckock(closed_spec)
    a, b = sol.gamma_forms
    assert a == pytest.approx(b, rel=1e-9)


def test_constant_model_is_trivial():
    spec = ModelSpec(0.0, 1.0, Constant(2.0), Constant(3.0))
    sol = A.solve_luckock(spec)
    assert sol.gamma == pytest.approx(1 / 6)
    assert sol.kappa == pytest.approx(5.0)
    assert np.allclose(sol.f_minus.values, 1.0)
    assert np.allclose(sol.f_plus.values, 1.0)
    assert sol.classification is A.Classification.POSITIVE_RECURRENT


@pytest.mark.parametrize("spec,fm,fp", [
    (uniform(0.3, 0.9), UNIFORM_03_09_F_MINUS, UNIFORM_03_09_F_PLUS),
    (piecewise_asymmetric(), PIECEWISE_F_MINUS, PIECEWISE_F_PLUS),
    (uniform(0.25, 0.75), UNIFORM_025_075_F_MINUS, UNIFORM_025_075_F_MINUS[::-1]),
], ids=["uniform_0.3_0.9", "piecewise", "uniform_0.25_0.75"])
def test_laws_match_frozen_ode_values(spec, fm, fp):
    x = np.linspace(spec.interval_lo, spec.interval_hi, 9)
    sol = A.solve_luckock(spec)
    assert np.allclose(sol.f_minus_at(x), fm, atol=1e-8)
    assert np.allclose(sol.f_plus_at(x), fp, atol=1e-8)


def test_laws_match_live_ode_oracle(closed_spec):
    x = np.linspace(closed_spec.interval_lo, closed_spec.interval_hi, 7)
    ref = luckock_ode(closed_spec, x)
    sol = A.solve_luckock(closed_spec)
    assert np.allclose(sol.f_minus_at(x), ref[:, 0], atol=1e-8)
    assert np.allclose(sol.f_plus_at(x), ref[:, 1], atol=1e-8)


def test_restricted_uniform_is_not_positive_recurrent():
    sol = A.solve_luckock(uniform(0.3, 0.9))
    assert sol.f_plus_hi < 0
    assert min(sol.f_minus_lo, sol.f_plus_hi) < 0
    assert sol.classification is A.Classification.NOT_POSITIVE_RECURRENT


@pytest.mark.parametrize("lo,hi,expected", [
    (0.25, 0.75, A.Classification.POSITIVE_RECURRENT),
    (0.1, 0.9, A.Classification.NOT_POSITIVE_RECURRENT),
])
def test_symmetric_uniform_classification(lo, hi, expected):
    assert A.classify(uniform(lo, hi)) is expected


def test_luckock_window_is_the_null_boundary():
    v = v_luckock(uniform()).v_l
    assert A.classify(uniform(1 - v, v)) is A.Classification.NULL_BOUNDARY


def test_pointwise_identity(closed_spec):
    sol = A.solve_luckock(closed_spec)
    x = sol.f_minus.grid
    lhs = sol.f_minus.values / closed_spec.lam_minus(x) + sol.f_plus.values / closed_spec.lam_plus(x)
    rhs = sol.kappa / (closed_spec.lam_minus(x) * closed_spec.lam_plus(x))
    assert np.max(np.abs(lhs - rhs)) < 1e-9


def test_volume_of_trade_agrees_between_sides(closed_spec):
    sol = A.solve_luckock(closed_spec)
    A.volume_of_trade(closed_spec, sol)  # raises on disagreement


def test_u_functions_sum_identity(closed_spec):
    u = A.u_functions(closed_spec)
    x = u.u_mp.grid
    p = 1.0 / (closed_spec.lam_minus(x) * closed_spec.lam_plus(x))
    g = A.gamma(closed_spec)
    assert np.max(np.abs(u.u_mp.values + u.u_pm.values - p / g - 1.0)) < 1e-9


def test_boundary_signs_follow_lambda_functionals(closed_spec):
    sol = A.solve_luckock(closed_spec)
    assert np.sign(sol.f_minus_lo) == np.sign(sol.lambda_minus_functional)
    assert np.sign(sol.f_plus_hi) == np.sign(sol.lambda_plus_functional)


def test_boundary_signs_follow_extremal_weight_sums(closed_spec):
    sol = A.solve_luckock(closed_spec)
    c = A.lyapunov_constants(closed_spec)
    assert (sol.f_plus_hi > 0) == (c.inf_buy_sum > 0)
    assert (sol.f_minus_lo > 0) == (c.inf_sell_sum > 0)


@pytest.mark.parametrize("side", ["minus", "plus"])
@pytest.mark.parametrize("z", [0.35, 0.5, 0.75])
def test_generator_closure(side, z):
    spec = piecewise_asymmetric()
    w = A.special_weights(spec, z, side)
    bids = np.array([0.0, 0.1, 0.34, 0.35, 0.5, 0.6])
    asks = np.array([0.2, 0.4, 0.35, 0.75, 0.9, 1.0])
    got = A.generator_apply(spec, w, bids, asks)
    assert np.max(np.abs(got - A.generator_target(w, bids, asks))) < 1e-8


def test_generator_of_empty_book():
    spec = uniform(0.3, 0.9)
    w = A.special_weights(spec, 0.6, "minus")
    sol = A.solve_luckock(spec)
    # the empty book has best bid lo <= z
    assert A.generator_apply(spec, w, 0.3, 0.9) == pytest.approx(1.0 - float(sol.f_minus_at(0.6)), abs=1e-9)


def test_generator_of_constant_weights():
    # w_minus = -1 and w_plus = 1 inside the interval.  Every buy below the ask joins
    # the book (-1), every buy at or above it removes a sell (-1); sells mirror this,
    # so the drift is lam_plus(hi) - lam_minus(lo) when both sides are occupied
    spec = uniform(0.3, 0.9)
    w = A.WeightTable.from_callables(spec, lambda x: -np.ones_like(x), lambda x: np.ones_like(x))
    expected = float(spec.lam_plus(0.9) - spec.lam_minus(0.3))
    for bid, ask in ((0.45, 0.6), (0.31, 0.89)):
        assert A.generator_apply(spec, w, bid, ask) == pytest.approx(expected, abs=1e-9)
    # an empty book has no executions, only the limit orders that join it
    empty = float(-(spec.lam_minus(0.3) - spec.lam_minus(0.9)) + (spec.lam_plus(0.9) - spec.lam_plus(0.3)))
    assert A.generator_apply(spec, w, 0.3, 0.9) == pytest.approx(empty, abs=1e-9)


def test_extremal_weights_match_simplified_formulas(closed_spec):
    low, high = A.extremal_weights(closed_spec)
    simple = A.extremal_weights_simplified(closed_spec)
    x = np.linspace(closed_spec.interval_lo, closed_spec.interval_hi, 41)[1:-1]
    assert np.allclose(low.w_minus_fn(x), simple["minus_w_minus"](x), atol=1e-9)
    assert np.allclose(low.w_plus_fn(x), simple["minus_w_plus"](x), atol=1e-9)
    assert np.allclose(high.w_minus_fn(x), simple["plus_w_minus"](x), atol=1e-9)
    assert np.allclose(high.w_plus_fn(x), simple["plus_w_plus"](x), atol=1e-9)


def test_weight_shape_on_the_plus_side():
    spec = uniform(0.25, 0.75)
    w = A.special_weights(spec, 0.6, "plus")
    x = np.linspace(0.26, 0.74, 49)
    wm, wp = w.w_minus_fn(x), w.w_plus_fn(x)
    # buys always pull the functional down, sells below z push it up
    assert np.all(wm <= 1e-12)
    assert np.all(wp[x < 0.6] > 0)
    assert np.argmax(wp) == np.argmin(np.abs(x - 0.6)) or x[np.argmax(wp)] < 0.6
    assert float(w.w_minus_fn(0.25)) == 0.0 and float(w.w_plus_fn(0.75)) == 0.0


def test_special_weights_reject_bad_input():
    spec = uniform(0.3, 0.9)
    with pytest.raises(errors.OutOfRange):
        A.special_weights(spec, 0.95, "minus")
    with pytest.raises(ValueError):
        A.special_weights(spec, 0.5, "middle")


def test_solve_inverse_recovers_special_weights():
    spec = uniform(0.3, 0.9)
    z = 0.6
    table, const = A.solve_inverse(spec, lambda x: (x <= z) * 1.0, lambda x: 0.0 * x, jumps=(z,))
    ref = A.special_weights(spec, z, "minus")
    x = np.linspace(0.3, 0.9, 101)
    assert const == pytest.approx(ref.target_constant, abs=1e-10)
    assert np.max(np.abs(table.w_minus_fn(x) - ref.w_minus_fn(x))) < 1e-9
    assert np.max(np.abs(table.w_plus_fn(x) - ref.w_plus_fn(x))) < 1e-9


def test_solve_inverse_smooth_targets():
    spec = piecewise_asymmetric()
    gm, gp = (lambda x: np.sin(3 * x)), (lambda x: x ** 2)
    table, const = A.solve_inverse(spec, gm, gp)
    bids = np.array([0.0, 0.2, 0.5, 0.7])
    asks = np.array([0.3, 0.6, 0.9, 1.0])
    got = A.generator_apply(spec, table, bids, asks)
    assert np.max(np.abs(got - (gm(bids) + gp(asks) - const))) < 1e-8


@settings(max_examples=30, deadline=None)
@given(st.floats(0.3, 0.6), st.floats(0.05, 0.3))
def test_lambda_difference_identity(j_lo, width):
    spec = piecewise_asymmetric()
    res = A.lambda_difference_residual(spec, j_lo, j_lo + width)
    assert abs(float(res)) < 1e-9


def test_lyapunov_function_of_books():
    spec = uniform(0.25, 0.75)
    assert A.lyapunov(spec, OrderBook((), ())) == 0.0
    low, high = A.extremal_weights(spec)
    v = A.lyapunov(spec, OrderBook((0.4,), ()))
    f1, f2 = float(low.w_minus_fn(0.4)), float(high.w_minus_fn(0.4))
    assert v == pytest.approx(np.hypot(max(f1, 0), max(f2, 0)))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.26, 0.49), max_size=30), st.lists(st.floats(0.51, 0.74), max_size=30))
def test_lyapunov_grows_linearly_with_size(buys, sells):
    spec = uniform(0.25, 0.75)
    c = A.lyapunov_constants(spec)
    assert c.delta > 0
    v = A.lyapunov(spec, OrderBook(tuple(sorted(buys)), tuple(sorted(sells))))
    assert v >= c.delta * (len(buys) + len(sells)) / np.sqrt(2) - 1e-9


def test_solve_needs_market_orders():
    with pytest.raises(errors.AssumptionViolation):
        A.solve_luckock(uniform())


def test_every_closed_spec_solves():
    for name, spec in closed_form_specs().items():
        assert A.solve_luckock(spec).gamma > 0, name
