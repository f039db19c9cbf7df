import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from luckock import errors
from luckock.analytic import Classification
from luckock.discrete import (
    AtomicAdapter, TickBook, TickModel, brute_force_generator, check_book, discrete_vs_continuous,
    discretize, enumerate_books, extremal_tick_weights, fast_lyapunov_generator, luckock_residuals,
    random_tick_book, random_tick_model, tick_generator_exact, tick_luckock_map, tick_lyapunov_generator,
    tick_solve, tick_weights, lyapunov_search, verify_lyapunov,
)
from luckock.model import uniform
from luckock.sim import OrderBook

from conftest import MODELS, load_example


def tick6() -> TickModel:
    d = json.loads((MODELS / "tick6.json").read_text())["tick"]
    return TickModel.from_rates(d["buy_rates"], d["sell_rates"], exact=True)


def test_two_level_model_matches_birth_death_chain():
    # one limit level per side: the book is k buys (k > 0) or -k sells, a birth-death
    # chain with up-rate 1 (2 when sells rest) and down-rate 1 (2 when buys rest),
    # so pi_k = pi_0 / 2^|k| and pi_0 = 1/3
    sol = tick_solve(TickModel.from_rates([1, 1], [1, 1], exact=True))
    assert sol.f_minus == (Fraction(2, 3), Fraction(1))
    assert sol.f_plus == (Fraction(1), Fraction(2, 3))
    assert sol.classification is Classification.POSITIVE_RECURRENT


def test_tick6_exact_solution():
    sol = tick_solve(tick6())
    assert sol.gamma == Fraction(568069329, 2625382760)
    assert sol.gamma_forms[0] == sol.gamma_forms[1]
    assert sol.f_minus[0] == Fraction(-583572422, 5112623961)
    assert sol.classification is Classification.NOT_POSITIVE_RECURRENT


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 7), st.integers(0, 2 ** 32 - 1))
def test_exact_residuals_vanish(n, seed):
    model = random_tick_model(np.random.default_rng(seed), n, exact=True)
    sol = tick_solve(model)
    odd, even, boundary = luckock_residuals(sol)
    assert all(r == 0 for r in odd + even + list(boundary))
    assert sol.gamma_forms[0] == sol.gamma_forms[1]


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2 ** 32 - 1))
def test_float_solution_matches_linear_solve(n, seed):
    # independent oracle: the 2n difference equations and boundary conditions
    # assembled as a dense linear system
    model = random_tick_model(np.random.default_rng(seed), n)
    lm, lp = model.lm, model.lp
    M = np.zeros((2 * n, 2 * n))
    rhs = np.zeros(2 * n)
    fm = lambda x: (x - 3) // 2  # noqa: E731  f_minus unknowns on odd points
    fp = lambda x: n + (x - 2) // 2  # noqa: E731  f_plus unknowns on even points
    row = 0
    for x in range(3, 2 * n, 2):
        M[row, fm(x)] = lp(x + 1) - lp(x - 1)
        M[row, fp(x + 1)] += lm(x)
        M[row, fp(x - 1)] -= lm(x)
        row += 1
    for x in range(4, 2 * n + 1, 2):
        M[row, fp(x)] = lm(x + 1) - lm(x - 1)
        M[row, fm(x + 1)] += lp(x)
        M[row, fm(x - 1)] -= lp(x)
        row += 1
    M[row, fp(2)] = 1.0
    rhs[row] = 1.0
    M[row + 1, fm(2 * n + 1)] = 1.0
    rhs[row + 1] = 1.0
    ref = np.linalg.solve(M, rhs)
    sol = tick_solve(model)
    assert np.allclose(sol.f_minus, ref[:n], atol=1e-9)
    assert np.allclose(sol.f_plus, ref[n:], atol=1e-9)


def test_zero_market_rate():
    with pytest.raises(errors.ZeroMarketRate):
        tick_solve(TickModel.from_rates([1, 0], [1, 1]))


def test_bad_models_and_books():
    with pytest.raises(ValueError):
        TickModel(2, (1.0, 2.0), (1.0, 2.0))  # demand increasing
    model = TickModel.from_rates([1, 1, 1], [1, 1, 1])
    with pytest.raises(errors.ParityError):
        model.lm(4)
    with pytest.raises(errors.ParityError):
        tick_weights(model, 4, "minus")
    with pytest.raises(errors.OffGrid):
        check_book(model, TickBook((5,), ()))
    with pytest.raises(errors.OffGrid):
        check_book(model, TickBook((6,), (5,)))


def test_tick_map_examples():
    model = TickModel.from_rates([1, 1, 1], [1, 1, 1])
    book = TickBook((4,), (5,))
    assert tick_luckock_map(model, book, 6, "buy") == TickBook((4,), ())  # crosses the ask
    assert tick_luckock_map(model, book, 4, "buy") == TickBook((4, 4), (5,))
    assert tick_luckock_map(model, book, 8, "buy") == TickBook((4,), ())  # market buy
    assert tick_luckock_map(model, book, 3, "sell") == TickBook((), (5,))
    assert tick_luckock_map(model, TickBook(), 1, "sell") == TickBook()  # market sell into nothing


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2 ** 32 - 1))
def test_closed_form_generator_matches_brute_force(n, seed):
    rng = np.random.default_rng(seed)
    model = random_tick_model(rng, n)
    w_minus = rng.normal(size=n)
    w_plus = rng.normal(size=n)
    w_minus[0] = 0.0
    w_plus[-1] = 0.0

    def functional(b):
        return sum(w_minus[(p - 2) // 2] for p in b.buys) + sum(w_plus[(p - 3) // 2] for p in b.sells)

    book = random_tick_book(rng, n, 8)
    got = tick_generator_exact(model, book, w_minus, w_plus)
    assert got == pytest.approx(brute_force_generator(model, book, functional), abs=1e-12)


@pytest.mark.parametrize("side", ["minus", "plus"])
def test_special_tick_weights_close_exactly(side):
    model = tick6()
    sol = tick_solve(model)
    grid = model.odd_grid if side == "minus" else model.even_grid
    for z in grid:
        w = tick_weights(model, z, side, sol)
        for book in enumerate_books(model.n, 3):
            gen = brute_force_generator(model, book, w.functional)
            assert gen == w.target(book, model.n)


def test_enumerate_books_counts():
    books = list(enumerate_books(3, 2))
    assert len(books) == len(set(books))
    assert TickBook() in books
    for b in books:
        check_book(TickModel.from_rates([1, 1, 1], [1, 1, 1]), b)


@pytest.mark.parametrize("name", ["uniform_0.25_0.75", "uniform_0.3_0.9"])
def test_discretisation_converges_first_order(name):
    spec = uniform(*[float(v) for v in name.split("_")[1:]])
    errs = [discrete_vs_continuous(spec, n) for n in (50, 100, 200)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[1] / errs[2] > 1.8
    assert errs[2] < 0.05


def test_discretize_preserves_market_rates():
    spec = uniform(0.3, 0.9)
    model = discretize(spec, 10)
    assert model.buy_market_rate == pytest.approx(float(spec.lam_minus(0.9)))
    assert model.sell_market_rate == pytest.approx(float(spec.lam_plus(0.3)))


def test_atomic_adapter_round_trip(atomic_spec):
    ad = AtomicAdapter.build(atomic_spec)
    book = OrderBook((0.2, 0.4), (0.6, 0.8))
    tb = ad.to_tick_book(book)
    assert ad.from_tick_book(tb) == (book.buys, book.sells)
    with pytest.raises(errors.OffGrid):
        ad.level(0.33)
    assert ad.model.total_rate == pytest.approx(atomic_spec.total_rate)


def test_atomic_model_is_positive_recurrent(atomic_spec):
    sol = tick_solve(AtomicAdapter.build(atomic_spec).model)
    assert sol.classification is Classification.POSITIVE_RECURRENT
    assert float(sol.margin) > 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_fast_lyapunov_generator_matches_brute_force(seed):
    model = AtomicAdapter.build(load_example("atomic")).model
    weights = extremal_tick_weights(model)
    book = random_tick_book(np.random.default_rng(seed), model.n, 30)
    fast = fast_lyapunov_generator(model, book, weights)
    assert fast == pytest.approx(tick_lyapunov_generator(model, book, weights), abs=1e-12)


def test_lyapunov_search_and_held_out_check(atomic_spec):
    model = AtomicAdapter.build(atomic_spec).model
    # the calibration sample must be large: with 2000 books a held-out book
    # above the threshold still violated the descent bound
    search = lyapunov_search(model)
    assert search.N > 0 and search.epsilon > 0
    check = verify_lyapunov(model, search)
    assert check.large_states > 0
    assert check.passed


def test_lyapunov_search_needs_positive_recurrence():
    model = TickModel(tick6().n, tick6().lambda_minus, tick6().lambda_plus)
    with pytest.raises(errors.AssumptionViolation):
        lyapunov_search(model, states=10)
