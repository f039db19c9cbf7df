"""Exact solution of the order-book model on a tick grid.

Prices are kept in the internal doubled parametrisation: resting buy orders
live on the even points ``{4, ..., 2n}`` (a buy at ``2n + 2`` is a market
order and ``2`` marks an empty buy side), resting sell orders on the odd
points ``{3, ..., 2n - 1}`` (a sell at ``1`` is a market order and ``2n + 1``
marks an empty sell side).  A buy and a sell placed at the same user tick
``k`` land on ``2k + 2`` and ``2k + 1`` and therefore still match.

The demand function ``lam_minus`` lives on the odd grid ``{3, ..., 2n+1}``
and the supply function ``lam_plus`` on the even grid ``{2, ..., 2n}``.
Every quantity is a finite sum, so with ``Fraction`` inputs the results are
exact.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from . import errors
from .analytic import MINUS, PLUS, Classification, classify_value
from .model import ModelSpec

EXACT_MAX_N = 64


def _num(x, exact: bool):
    if exact:
        return x if isinstance(x, Fraction) else Fraction(x)
    return float(x)


@dataclass(frozen=True)
class TickModel:
    """Tick-grid model with ``n`` levels.

    ``lambda_minus[i]`` is the demand at odd point ``2i + 3`` and
    ``lambda_plus[i]`` the supply at even point ``2i + 2`` (``i < n``).
    """

    n: int
    lambda_minus: tuple
    lambda_plus: tuple
    exact: bool = False

    def __post_init__(self):
        n = int(self.n)
        if n < 2:
            raise ValueError("a tick model needs n >= 2 levels")
        lm = tuple(_num(v, self.exact) for v in self.lambda_minus)
        lp = tuple(_num(v, self.exact) for v in self.lambda_plus)
        if len(lm) != n or len(lp) != n:
            raise ValueError(f"need {n} demand and {n} supply values, got {len(lm)} and {len(lp)}")
        if any(b > a for a, b in zip(lm, lm[1:])) or any(b < a for a, b in zip(lp, lp[1:])):
            raise ValueError("demand must be nonincreasing and supply nondecreasing")
        if min(lm[-1], lp[0]) < 0:
            raise ValueError("intensities must be nonnegative")
        if self.exact and n > EXACT_MAX_N:
            raise ValueError(f"exact mode is limited to n <= {EXACT_MAX_N}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "lambda_minus", lm)
        object.__setattr__(self, "lambda_plus", lp)

    # grids -----------------------------------------------------------------
    @property
    def odd_grid(self) -> range:
        """``I_1 = {3, 5, ..., 2n + 1}``."""
        return range(3, 2 * self.n + 2, 2)

    @property
    def even_grid(self) -> range:
        """``I_0 = {2, 4, ..., 2n}``."""
        return range(2, 2 * self.n + 1, 2)

    def lm(self, x: int):
        if x % 2 != 1 or not 3 <= x <= 2 * self.n + 1:
            raise errors.ParityError(f"demand is defined on odd points 3..{2 * self.n + 1}, got {x}")
        return self.lambda_minus[(x - 3) // 2]

    def lp(self, x: int):
        if x % 2 != 0 or not 2 <= x <= 2 * self.n:
            raise errors.ParityError(f"supply is defined on even points 2..{2 * self.n}, got {x}")
        return self.lambda_plus[(x - 2) // 2]

    @property
    def buy_market_rate(self):
        return self.lambda_minus[-1]

    @property
    def sell_market_rate(self):
        return self.lambda_plus[0]

    @property
    def total_rate(self):
        return self.lambda_minus[0] + self.lambda_plus[-1]

    def atoms(self) -> list[tuple[int, str, object]]:
        """Every arrival ``(internal price, side, rate)`` with positive rate."""
        n = self.n
        out = []
        for k in range(1, n + 1):
            nxt = self.lm(2 * k + 3) if k < n else 0
            r = self.lm(2 * k + 1) - nxt
            if r > 0:
                out.append((2 * k + 2, "buy", r))
        for k in range(1, n + 1):
            prev = self.lp(2 * k - 2) if k > 1 else 0
            r = self.lp(2 * k) - prev
            if r > 0:
                out.append((2 * k - 1, "sell", r))
        return out

    def exact_copy(self) -> "TickModel":
        return TickModel(self.n, self.lambda_minus, self.lambda_plus, exact=True)

    @classmethod
    def from_levels(cls, demand, supply, exact: bool = False) -> "TickModel":
        """Build from user tick levels ``0..n``.

        ``demand[k]`` is the rate of buy orders at levels ``>= k`` for
        ``k = 1..n`` and ``supply[k]`` the rate of sell orders at levels
        ``<= k`` for ``k = 0..n-1``; both sequences have length ``n``.
        """
        return cls(len(demand), tuple(demand), tuple(supply), exact)

    @classmethod
    def from_rates(cls, buy_rates, sell_rates, exact: bool = False) -> "TickModel":
        """Build from per-level rates.

        ``buy_rates[k-1]`` is the rate of buys at level ``k`` (``k = 1..n``,
        level ``n`` being market buys) and ``sell_rates[k]`` the rate of
        sells at level ``k`` (``k = 0..n-1``, level ``0`` being market sells).
        """
        conv = Fraction if exact else float
        b = [conv(r) for r in buy_rates]
        s = [conv(r) for r in sell_rates]
        demand = [sum(b[k:], conv(0)) for k in range(len(b))]
        supply = list(itertools.accumulate(s))
        return cls(len(b), tuple(demand), tuple(supply), exact)


@dataclass(frozen=True)
class TickBook:
    """Resting orders at internal tick prices (buys even, sells odd)."""

    buys: tuple[int, ...] = ()
    sells: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "buys", tuple(sorted(int(p) for p in self.buys)))
        object.__setattr__(self, "sells", tuple(sorted(int(p) for p in self.sells)))

    @property
    def size(self) -> int:
        return len(self.buys) + len(self.sells)

    def best_bid(self) -> int:
        return self.buys[-1] if self.buys else 2

    def best_ask(self, n: int) -> int:
        return self.sells[0] if self.sells else 2 * n + 1


def check_book(model: TickModel, book) -> None:
    n = model.n
    for p in book.buys:
        if p != int(p) or int(p) % 2 or not 4 <= p <= 2 * n:
            raise errors.OffGrid(f"buy price {p} is not on the even grid 4..{2 * n}")
    for p in book.sells:
        if p != int(p) or int(p) % 2 == 0 or not 3 <= p <= 2 * n - 1:
            raise errors.OffGrid(f"sell price {p} is not on the odd grid 3..{2 * n - 1}")
    if book.buys and book.sells and max(book.buys) >= min(book.sells):
        raise errors.OffGrid("book is crossed")


def tick_luckock_map(model: TickModel, book: TickBook, price: int, side: str) -> TickBook:
    """One arrival on the tick grid; a deliberately plain reference version."""
    buys, sells = list(book.buys), list(book.sells)
    n = model.n
    if side == "buy":
        if sells and price > sells[0]:
            sells.pop(0)
        elif price <= 2 * n:
            buys.append(price)
    else:
        if buys and price < max(buys):
            buys.remove(max(buys))
        elif price >= 3:
            sells.append(price)
    return TickBook(tuple(buys), tuple(sells))


# --------------------------------------------------------------------------
# Solution
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TickSolution:
    """Closed-form solution of the tick model.

    ``u_mp`` and ``f_plus`` are indexed by the even grid ``{2, ..., 2n}``;
    ``u_pm`` and ``f_minus`` by the odd grid ``{3, ..., 2n + 1}``.
    ``f_minus(z) = P[best bid < z]`` and ``f_plus(z) = P[best ask > z]``.
    """

    model: TickModel
    gamma: object
    gamma_forms: tuple
    kappa: object
    u_mp: tuple
    u_pm: tuple
    f_minus: tuple
    f_plus: tuple
    classification: Classification = Classification.NULL_BOUNDARY

    def u_mp_at(self, x: int):
        return self.u_mp[(x - 2) // 2]

    def u_pm_at(self, x: int):
        return self.u_pm[(x - 3) // 2]

    def f_minus_at(self, x: int):
        return self.f_minus[(x - 3) // 2]

    def f_plus_at(self, x: int):
        return self.f_plus[(x - 2) // 2]

    @property
    def margin(self):
        """``f_minus(3) ^ f_plus(2n)``: probabilities of an empty buy/sell side."""
        return min(self.f_minus[0], self.f_plus[-1])

    def to_dict(self) -> dict:
        return {
            "n": self.model.n,
            "gamma": float(self.gamma),
            "kappa": float(self.kappa),
            "f_minus_empty_bids": float(self.f_minus[0]),
            "f_plus_empty_asks": float(self.f_plus[-1]),
            "classification": self.classification.value,
            "exact": self.model.exact,
        }


def _terms(model: TickModel):
    """``A(x) = (1/lam_minus) d(1/lam_plus)`` on odd ``3..2n-1`` and
    ``B(x) = (1/lam_plus) d(1/lam_minus)`` on even ``4..2n``."""
    n = model.n
    if model.buy_market_rate <= 0 or model.sell_market_rate <= 0:
        raise errors.ZeroMarketRate("market-order rates lam_minus(2n+1) and lam_plus(2) must be positive")
    one = Fraction(1) if model.exact else 1.0
    A = {x: (one / model.lm(x)) * (one / model.lp(x + 1) - one / model.lp(x - 1)) for x in range(3, 2 * n, 2)}
    B = {x: (one / model.lp(x)) * (one / model.lm(x + 1) - one / model.lm(x - 1)) for x in range(4, 2 * n + 1, 2)}
    return one, A, B


def tick_solve(model: TickModel) -> TickSolution:
    """Gamma, the u functions and the equilibrium laws of the best quotes."""
    n = model.n
    one, A, B = _terms(model)
    top = one / (model.lm(2 * n + 1) * model.lp(2 * n))
    bottom = one / (model.lm(3) * model.lp(2))
    g1 = top - sum(A.values(), 0 * one)
    g2 = bottom + sum(B.values(), 0 * one)
    if model.exact:
        if g1 != g2:
            raise errors.IdentityViolation("exact gamma forms disagree")
        gamma = g1
    else:
        if abs(g1 - g2) > 1e-12 * max(abs(g1), abs(g2)):
            raise errors.IdentityViolation(f"gamma forms disagree: {g1} vs {g2}")
        gamma = 0.5 * (g1 + g2)
    kappa = (one / model.buy_market_rate + one / model.sell_market_rate) / gamma

    # suffix sums of A over odd y in [x+1, 2n-1] and prefix sums of B over even y in [4, x-1]
    u_mp, f_plus = [], []
    suffix_a = sum(A.values(), 0 * one)
    prefix_a = 0 * one
    for x in model.even_grid:
        # here suffix_a = sum A(y) for odd y >= x+1, prefix_a = sum A(y) for odd y <= x-1
        u_mp.append((top - suffix_a) / gamma)
        f_plus.append(model.lp(x) * (one / model.sell_market_rate + kappa * prefix_a))
        if x + 1 in A:
            suffix_a -= A[x + 1]
            prefix_a += A[x + 1]
    u_pm, f_minus = [], []
    prefix_b = 0 * one
    suffix_b = sum(B.values(), 0 * one)
    for x in model.odd_grid:
        # prefix_b = sum B(y) for even y <= x-1, suffix_b = sum B(y) for even y >= x+1
        u_pm.append((bottom + prefix_b) / gamma)
        f_minus.append(model.lm(x) * (one / model.buy_market_rate - kappa * suffix_b))
        if x + 1 in B:
            prefix_b += B[x + 1]
            suffix_b -= B[x + 1]
    margin = min(f_minus[0], f_plus[-1])
    if model.exact:
        cls = (Classification.POSITIVE_RECURRENT if margin > 0 else
               Classification.NULL_BOUNDARY if margin == 0 else Classification.NOT_POSITIVE_RECURRENT)
    else:
        cls = classify_value(margin)
    return TickSolution(model, gamma, (g1, g2), kappa, tuple(u_mp), tuple(u_pm),
                        tuple(f_minus), tuple(f_plus), cls)


def luckock_residuals(sol: TickSolution) -> tuple[list, list, tuple]:
    """Residuals of the difference equations and the boundary conditions.

    Returns ``(odd, even, boundary)`` where ``odd[x]`` is
    ``f_minus d lam_plus + lam_minus d f_plus`` at odd interior points,
    ``even`` the mirrored expression at even interior points and
    ``boundary = (f_plus(2) - 1, f_minus(2n+1) - 1)``.
    """
    m, n = sol.model, sol.model.n
    odd = [sol.f_minus_at(x) * (m.lp(x + 1) - m.lp(x - 1)) + m.lm(x) * (sol.f_plus_at(x + 1) - sol.f_plus_at(x - 1))
           for x in range(3, 2 * n, 2)]
    even = [sol.f_plus_at(x) * (m.lm(x + 1) - m.lm(x - 1)) + m.lp(x) * (sol.f_minus_at(x + 1) - sol.f_minus_at(x - 1))
            for x in range(4, 2 * n + 1, 2)]
    one = Fraction(1) if m.exact else 1.0
    return odd, even, (sol.f_plus_at(2) - one, sol.f_minus_at(2 * n + 1) - one)


# --------------------------------------------------------------------------
# Weights and generator
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TickWeights:
    """``w_minus`` on the even grid ``{2..2n}``, ``w_plus`` on the odd grid ``{3..2n+1}``."""

    z: int
    side: str
    w_minus: tuple
    w_plus: tuple
    target_constant: object

    def w_minus_at(self, x: int):
        return self.w_minus[(x - 2) // 2]

    def w_plus_at(self, x: int):
        return self.w_plus[(x - 3) // 2]

    def functional(self, book) -> object:
        return (sum((self.w_minus_at(p) for p in book.buys), 0 * self.target_constant)
                + sum((self.w_plus_at(p) for p in book.sells), 0 * self.target_constant))

    def target(self, book, n: int):
        """The value the generator of a special functional must take on ``book``."""
        one = 1 + 0 * self.target_constant
        if self.side == MINUS:
            hit = TickBook(book.buys, book.sells).best_bid() < self.z
        else:
            hit = TickBook(book.buys, book.sells).best_ask(n) > self.z
        return (one if hit else 0 * one) - self.target_constant


def tick_weights(model: TickModel, z: int, side: str, sol: TickSolution | None = None) -> TickWeights:
    """Weights whose functional has generator ``1{M- < z} - f_minus(z)``
    (side minus, ``z`` odd) or ``1{M+ > z} - f_plus(z)`` (side plus, ``z`` even)."""
    sol = sol or tick_solve(model)
    n = model.n
    g = sol.gamma
    one = Fraction(1) if model.exact else 1.0
    zero = 0 * one
    if side == MINUS:
        if z % 2 != 1 or not 3 <= z <= 2 * n + 1:
            raise errors.ParityError(f"side minus needs z on the odd grid 3..{2 * n + 1}, got {z}")
        c = model.lm(z) * g
        upz = sol.u_pm_at(z)
        w_minus = []
        for x in model.even_grid:
            ind = one if x < z else zero
            w_minus.append(c * (upz - ind) * (sol.u_mp_at(x) - ind))
        w_plus = [c * (sol.u_pm_at(max(x, z)) - one) * sol.u_pm_at(min(x, z)) for x in model.odd_grid]
        target = sol.f_minus_at(z)
    elif side == PLUS:
        if z % 2 != 0 or not 2 <= z <= 2 * n:
            raise errors.ParityError(f"side plus needs z on the even grid 2..{2 * n}, got {z}")
        c = model.lp(z) * g
        umz = sol.u_mp_at(z)
        w_minus = [c * (sol.u_mp_at(min(x, z)) - one) * sol.u_mp_at(max(x, z)) for x in model.even_grid]
        w_plus = []
        for x in model.odd_grid:
            ind = one if x > z else zero
            w_plus.append(c * (umz - ind) * (sol.u_pm_at(x) - ind))
        target = sol.f_plus_at(z)
    else:
        raise ValueError(f"side must be '{MINUS}' or '{PLUS}', got {side!r}")
    w_minus[0] = zero  # w_minus(2) := 0
    w_plus[-1] = zero  # w_plus(2n+1) := 0
    return TickWeights(z, side, tuple(w_minus), tuple(w_plus), target)


def tick_generator_exact(model: TickModel, book, w_minus: Sequence, w_plus: Sequence):
    """Generator of the linear functional with tick weights, by the closed-form sum.

    ``w_minus`` is indexed by the even grid ``{2..2n}`` and ``w_plus`` by the
    odd grid ``{3..2n+1}``.  Only the best quotes of ``book`` matter.
    """
    check_book(model, book)
    n = model.n
    wm = lambda x: w_minus[(x - 2) // 2]  # noqa: E731
    wp = lambda x: w_plus[(x - 3) // 2]  # noqa: E731
    tb = TickBook(book.buys, book.sells)
    bid, ask = tb.best_bid(), tb.best_ask(n)
    zero = 0 * model.total_rate
    add_sells = sum((wp(x) * (model.lp(x + 1) - model.lp(x - 1)) for x in range(bid + 1, 2 * n, 2)), zero)
    add_buys = sum((wm(x) * (model.lm(x + 1) - model.lm(x - 1)) for x in range(4, ask, 2)), zero)
    return add_sells - wm(bid) * model.lp(bid) - add_buys - wp(ask) * model.lm(ask)


def brute_force_generator(model: TickModel, book, functional) -> object:
    """``sum over arrival atoms of rate * (F(after) - F(before))``.

    ``functional`` maps a ``TickBook`` to a number; nothing about its form is
    assumed, so this also evaluates the generator of nonlinear functions.
    """
    tb = TickBook(book.buys, book.sells)
    before = functional(tb)
    total = 0 * model.total_rate
    for price, side, rate in model.atoms():
        total += rate * (functional(tick_luckock_map(model, tb, price, side)) - before)
    return total


def brute_force_drift(model: TickModel, book, functional) -> object:
    """Expected one-step change of ``functional`` in the embedded chain."""
    return brute_force_generator(model, book, functional) / model.total_rate


def extremal_tick_weights(model: TickModel, sol: TickSolution | None = None) -> tuple[TickWeights, TickWeights]:
    sol = sol or tick_solve(model)
    return tick_weights(model, 3, MINUS, sol), tick_weights(model, 2 * model.n, PLUS, sol)


def tick_lyapunov(model: TickModel, book, weights: tuple[TickWeights, TickWeights] | None = None) -> float:
    """``sqrt((F1 v 0)^2 + (F2 v 0)^2)`` for the two extremal functionals."""
    w1, w2 = weights or extremal_tick_weights(model)
    f1, f2 = float(w1.functional(book)), float(w2.functional(book))
    return math.hypot(max(f1, 0.0), max(f2, 0.0))


def tick_lyapunov_generator(model: TickModel, book, weights=None) -> float:
    """Exact generator of the Lyapunov function on one book."""
    weights = weights or extremal_tick_weights(model)
    return float(brute_force_generator(model, book, lambda b: tick_lyapunov(model, b, weights)))


@dataclass(frozen=True)
class TickLyapunovConstants:
    W: float
    K: float
    delta: float
    epsilon: float


def tick_lyapunov_constants(model: TickModel, sol: TickSolution | None = None) -> TickLyapunovConstants:
    """Drift-bound constants: weight size ``W``, ``K = W |mu|``, ``delta`` and ``epsilon``."""
    sol = sol or tick_solve(model)
    w1, w2 = extremal_tick_weights(model, sol)
    # resting buys live on 4..2n (index 1..), resting sells on 3..2n-1
    buy = [(float(a), float(b)) for a, b in zip(w1.w_minus[1:], w2.w_minus[1:])]
    sell = [(float(a), float(b)) for a, b in zip(w1.w_plus[:-1], w2.w_plus[:-1])]
    W = max(math.hypot(a, b) for a, b in buy + sell)
    delta = min(min(a + b for a, b in buy), min(a + b for a, b in sell))
    return TickLyapunovConstants(W=W, K=W * float(model.total_rate), delta=delta, epsilon=float(sol.margin))


# --------------------------------------------------------------------------
# Adapters
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AtomicAdapter:
    """Links a model with atomic intensities to its tick model.

    The union of atom prices and interval endpoints gives levels
    ``p_0 = lo < p_1 < ... < p_n = hi``; a buy at ``p_k`` becomes internal
    price ``2k + 2`` and a sell at ``p_k`` becomes ``2k + 1``.
    """

    spec: ModelSpec
    levels: tuple[float, ...]
    model: TickModel
    _index: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, spec: ModelSpec, exact: bool = False) -> "AtomicAdapter":
        lo, hi = spec.interval_lo, spec.interval_hi
        pts = set(spec.demand.knots()) | set(spec.supply.knots()) | {lo, hi}
        levels = sorted(p for p in pts if lo <= p <= hi)
        if len(levels) < 3:
            levels = sorted(set(levels) | {0.5 * (lo + hi)})
        n = len(levels) - 1
        demand = [float(spec.lam_minus(levels[k])) for k in range(1, n + 1)]
        supply = [float(spec.lam_plus(levels[k - 1])) for k in range(1, n + 1)]
        if spec.demand.atom_at(lo) or spec.supply.atom_at(hi):
            raise errors.AssumptionViolation("atoms of buys at lo or sells at hi are not allowed", ("a2",))
        model = TickModel(n, tuple(demand), tuple(supply), exact=exact)
        return cls(spec, tuple(levels), model, {p: k for k, p in enumerate(levels)})

    def level(self, price: float) -> int:
        try:
            return self._index[float(price)]
        except KeyError:
            raise errors.OffGrid(f"price {price} is not an atom of the model") from None

    def to_tick_book(self, book) -> TickBook:
        return TickBook(tuple(2 * self.level(p) + 2 for p in book.buys),
                        tuple(2 * self.level(p) + 1 for p in book.sells))

    def from_tick_book(self, tb: TickBook) -> tuple[tuple[float, ...], tuple[float, ...]]:
        return (tuple(self.levels[(p - 2) // 2] for p in tb.buys),
                tuple(self.levels[(p - 1) // 2] for p in tb.sells))


def atomic_lyapunov(spec: ModelSpec, book) -> float:
    adapter = AtomicAdapter.build(spec)
    return tick_lyapunov(adapter.model, adapter.to_tick_book(book))


def discretize(spec: ModelSpec, n: int) -> TickModel:
    """Tick model on ``n`` equal steps of a continuous model.

    Levels are ``p_k = lo + k h``.  Buy mass on ``[p_k, p_{k+1})`` and sell
    mass on ``(p_{k-1}, p_k]`` are put on level ``p_k``, so the market-order
    rates are preserved exactly.
    """
    lo, hi = spec.interval_lo, spec.interval_hi
    p = np.linspace(lo, hi, n + 1)
    demand = spec.lam_minus(p[1:])
    supply = spec.lam_plus(p[:-1])
    return TickModel(n, tuple(float(v) for v in demand), tuple(float(v) for v in supply))


def discrete_vs_continuous(spec: ModelSpec, n: int, cells: int | None = None) -> float:
    """Sup distance between tick and continuous equilibrium laws.

    The tick law ``f_minus(2k+1) = P[bid level < k]`` is compared with the
    continuous ``f_minus`` at the cell midpoint ``p_k - h/2``, and
    ``f_plus(2k) = P[ask level >= k]`` with ``f_plus`` at ``p_k - h/2``.
    """
    from .analytic import solve_luckock

    sol = solve_luckock(spec, cells)
    tick = tick_solve(discretize(spec, n))
    lo, hi = spec.interval_lo, spec.interval_hi
    h = (hi - lo) / n
    mid = lo + (np.arange(1, n + 1) - 0.5) * h
    fm = np.array([float(v) for v in tick.f_minus])
    fp = np.array([float(v) for v in tick.f_plus])
    return float(max(np.max(np.abs(fm - sol.f_minus_at(mid))), np.max(np.abs(fp - sol.f_plus_at(mid)))))


def random_tick_model(rng: np.random.Generator, n: int, exact: bool = False, scale: float = 1.0) -> TickModel:
    """Random per-level rates with positive market-order rates."""
    buy = rng.uniform(0.0, scale, n)
    sell = rng.uniform(0.0, scale, n)
    buy[-1] = rng.uniform(0.1, 1.0) * scale
    sell[0] = rng.uniform(0.1, 1.0) * scale
    if exact:
        buy = [Fraction(int(round(b * 64)) or 1, 64) for b in buy]
        sell = [Fraction(int(round(s * 64)) or 1, 64) for s in sell]
    return TickModel.from_rates(buy, sell, exact=exact)


def random_tick_book(rng: np.random.Generator, n: int, max_orders: int) -> TickBook:
    """A random uncrossed book with at most ``max_orders`` orders."""
    size = int(rng.integers(0, max_orders + 1))
    split = int(rng.integers(1, n + 1))  # buys at levels < split, sells at levels >= split
    buys, sells = [], []
    for _ in range(size):
        if rng.random() < 0.5 and split > 1:
            buys.append(2 * int(rng.integers(1, split)) + 2)
        elif split <= n - 1:
            sells.append(2 * int(rng.integers(split, n)) + 1)
    return TickBook(tuple(buys), tuple(sells))


def enumerate_books(n: int, max_orders: int) -> Iterable[TickBook]:
    """All uncrossed books with at most ``max_orders`` orders (small ``n`` only)."""
    for size in range(max_orders + 1):
        for nb in range(size + 1):
            for buys in itertools.combinations_with_replacement(range(4, 2 * n + 1, 2), nb):
                top = max(buys) if buys else 2
                for sells in itertools.combinations_with_replacement(range(top + 1, 2 * n, 2), size - nb):
                    yield TickBook(buys, sells)


# --------------------------------------------------------------------------
# Lyapunov threshold search
# --------------------------------------------------------------------------


def fast_lyapunov_generator(model: TickModel, book, weights: tuple[TickWeights, TickWeights]) -> float:
    """Exact generator of ``V`` using that each arrival changes one order.

    Gives the same value as ``tick_lyapunov_generator`` (which rebuilds the
    book for every arrival) at a cost independent of the book size once the
    two functionals are known.
    """
    w1, w2 = weights
    n = model.n
    tb = TickBook(book.buys, book.sells)
    f1, f2 = float(w1.functional(tb)), float(w2.functional(tb))
    v0 = math.hypot(max(f1, 0.0), max(f2, 0.0))
    bid, ask = tb.best_bid(), tb.best_ask(n)
    total = 0.0
    for price, side, rate in model.atoms():
        if side == "buy":
            if tb.sells and price > ask:
                d1, d2 = -float(w1.w_plus_at(ask)), -float(w2.w_plus_at(ask))
            elif price <= 2 * n:
                d1, d2 = float(w1.w_minus_at(price)), float(w2.w_minus_at(price))
            else:
                continue
        else:
            if tb.buys and price < bid:
                d1, d2 = -float(w1.w_minus_at(bid)), -float(w2.w_minus_at(bid))
            elif price >= 3:
                d1, d2 = float(w1.w_plus_at(price)), float(w2.w_plus_at(price))
            else:
                continue
        total += float(rate) * (math.hypot(max(f1 + d1, 0.0), max(f2 + d2, 0.0)) - v0)
    return total


@dataclass(frozen=True)
class LyapunovSearch:
    """Outcome of the search for the size threshold ``N`` of the drift bound.

    ``N`` is one more than the largest calibration book whose generator
    exceeded ``-epsilon``; ``epsilon`` is half the equilibrium margin.
    """

    N: int
    epsilon: float
    K: float
    W: float
    states: int
    max_generator: float

    def to_dict(self) -> dict:
        return {"N": self.N, "epsilon": self.epsilon, "K": self.K, "W": self.W,
                "states": self.states, "max_generator": self.max_generator}


@dataclass(frozen=True)
class LyapunovCheck:
    states: int
    large_states: int
    descent_violations: int
    bound_violations: int
    worst_large: float
    worst_overall: float

    @property
    def passed(self) -> bool:
        return self.descent_violations == 0 and self.bound_violations == 0


def _sample_generators(model, weights, rng, states, max_orders):
    sizes = np.empty(states, dtype=np.int64)
    gv = np.empty(states)
    for i in range(states):
        book = random_tick_book(rng, model.n, max_orders)
        sizes[i] = book.size
        gv[i] = fast_lyapunov_generator(model, book, weights)
    return sizes, gv


def lyapunov_search(model: TickModel, states: int = 10_000, max_orders: int = 120, seed: int = 0,
                    sol: TickSolution | None = None) -> LyapunovSearch:
    """Find ``N`` such that sampled books with at least ``N`` orders have ``GV <= -epsilon``."""
    sol = sol or tick_solve(model)
    if sol.classification is not Classification.POSITIVE_RECURRENT:
        raise errors.AssumptionViolation("the drift bound needs a positive recurrent model", ("recurrence",))
    weights = extremal_tick_weights(model, sol)
    const = tick_lyapunov_constants(model, sol)
    eps = 0.5 * float(sol.margin)
    sizes, gv = _sample_generators(model, weights, np.random.default_rng(seed), states, max_orders)
    bad = sizes[gv > -eps]
    N = int(bad.max()) + 1 if bad.size else 0
    return LyapunovSearch(N=N, epsilon=eps, K=const.K, W=const.W, states=states, max_generator=float(gv.max()))


def verify_lyapunov(model: TickModel, search: LyapunovSearch, states: int = 10_000, max_orders: int = 120,
                    seed: int = 1) -> LyapunovCheck:
    """Check the drift bounds on fresh books (``seed`` should differ from the search)."""
    weights = extremal_tick_weights(model)
    sizes, gv = _sample_generators(model, weights, np.random.default_rng(seed), states, max_orders)
    large = sizes >= search.N
    return LyapunovCheck(
        states=states,
        large_states=int(large.sum()),
        descent_violations=int(np.sum(gv[large] > -search.epsilon)),
        bound_violations=int(np.sum(gv > search.K)),
        worst_large=float(gv[large].max()) if large.any() else float("-inf"),
        worst_overall=float(gv.max()),
    )
