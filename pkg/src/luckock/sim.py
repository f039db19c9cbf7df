"""Monte Carlo simulation of the order book chain.

Arrivals form a Poisson process of total rate ``|mu| = lam_minus(lo) +
lam_plus(hi)``.  Each arrival is a buy with probability ``lam_minus(lo)/|mu|``
and its price ``U`` satisfies ``P[U >= x] = lam_minus(x)/lam_minus(lo)``, so a
buy at ``hi`` (probability ``lam_minus(hi)/lam_minus(lo)``) is a market
order; sells are the mirror image.  Prices are drawn by exact inversion of
the model intensities.

The hot loop lives in a compiled kernel (``_kernel``) with a pure-Python
twin (``_pykernel``) used when the extension is missing or when the
environment variable ``LUCKOCK_PURE_PYTHON=1`` is set.  Both consume the same
pre-drawn arrival arrays, so a seed fixes the output whichever kernel runs.
"""

from __future__ import annotations

import bisect
import os
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats as sps

from . import errors
from ._pykernel import ChainState as PyChainState
from .model import Atomic, ModelSpec, inverse_demand, inverse_supply, validate

try:
    from ._kernel import ChainState as CChainState
except ImportError:  # extension not built
    CChainState = None

if CChainState is not None and os.environ.get("LUCKOCK_PURE_PYTHON", "") not in ("1", "true", "yes"):
    ChainState = CChainState
    KERNEL = "cython"
else:
    ChainState = PyChainState
    KERNEL = "python"

BUY = "buy"
SELL = "sell"
CHUNK = 1 << 16
BURN_FRACTION = 0.1
N_BATCHES = 50
MIN_BALANCE_STEPS = 10_000


def kernel_class(name: str | None = None):
    """The chain-state implementation called ``name`` (default: the one selected at import)."""
    if name is None:
        return ChainState
    if name == "python":
        return PyChainState
    if name == "cython":
        if CChainState is None:
            raise ImportError("the compiled kernel is not built")
        return CChainState
    raise ValueError(f"unknown kernel {name!r}")


# --------------------------------------------------------------------------
# Books and the one-step map
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class OrderBook:
    """Resting orders as sorted tuples of prices (repeated prices allowed)."""

    buys: tuple[float, ...] = ()
    sells: tuple[float, ...] = ()

    def __post_init__(self):
        buys = tuple(sorted(float(p) for p in self.buys))
        sells = tuple(sorted(float(p) for p in self.sells))
        if buys and sells and buys[-1] >= sells[0]:
            raise errors.NonEvaluable(f"crossed book: best bid {buys[-1]} >= best ask {sells[0]}")
        object.__setattr__(self, "buys", buys)
        object.__setattr__(self, "sells", sells)

    @classmethod
    def from_lists(cls, buys: Iterable[float] = (), sells: Iterable[float] = ()) -> "OrderBook":
        return cls(tuple(buys), tuple(sells))

    def best_bid(self, lo: float) -> float:
        return self.buys[-1] if self.buys else lo

    def best_ask(self, hi: float) -> float:
        return self.sells[0] if self.sells else hi

    @property
    def size(self) -> int:
        return len(self.buys) + len(self.sells)

    def cumulative(self, x: float) -> int:
        """Signed count ``#sells <= x - #buys <= x``."""
        return bisect.bisect_right(self.sells, x) - bisect.bisect_right(self.buys, x)

    def to_dict(self) -> dict:
        return {"buys": list(self.buys), "sells": list(self.sells)}


@dataclass(frozen=True)
class Arrival:
    price: float
    side: str
    timestamp: float = 0.0

    def __post_init__(self):
        if self.side not in (BUY, SELL):
            raise ValueError(f"side must be {BUY!r} or {SELL!r}")


def apply_luckock_map(book: OrderBook, arrival: Arrival, lo: float, hi: float) -> OrderBook:
    """Book after one arrival.

    A buy at ``u`` takes the best ask if ``u`` reaches it; otherwise it rests
    when ``lo < u < hi`` and vanishes when it is a market order facing an
    empty ask side.  Sells are symmetric.
    """
    u = arrival.price
    if not lo <= u <= hi:
        raise errors.OutOfRange(f"arrival price {u} outside [{lo}, {hi}]")
    if arrival.side == BUY:
        if book.sells and u >= book.sells[0]:
            return OrderBook(book.buys, book.sells[1:])
        if lo < u < hi:
            return OrderBook(book.buys + (u,), book.sells)
        return book
    if book.buys and u <= book.buys[-1]:
        return OrderBook(book.buys[:-1], book.sells)
    if lo < u < hi:
        return OrderBook(book.buys, book.sells + (u,))
    return book


# --------------------------------------------------------------------------
# Arrival sampling
# --------------------------------------------------------------------------


class Sampler:
    """Draws arrival streams for one model."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.lo, self.hi = spec.interval_lo, spec.interval_hi
        self.buy_rate = float(spec.buy_rate)
        self.sell_rate = float(spec.sell_rate)
        self.total_rate = self.buy_rate + self.sell_rate
        if not self.total_rate > 0:
            raise errors.ZeroMarketRate("the model has no arrivals")
        self.p_buy = self.buy_rate / self.total_rate
        self._buy_atoms = self._atoms(spec.demand)
        self._sell_atoms = self._atoms(spec.supply)

    def _atoms(self, family):
        if not isinstance(family, Atomic):
            return None
        p = np.clip(np.asarray(family.prices, dtype=float), self.lo, self.hi)
        r = np.asarray(family.rates, dtype=float)
        keep = r > 0
        return p[keep], np.cumsum(r[keep]) / np.sum(r[keep])

    def buy_prices(self, u: np.ndarray) -> np.ndarray:
        """Buy prices from uniforms in ``(0, 1]``."""
        if self._buy_atoms is not None:
            p, cdf = self._buy_atoms
            return p[np.minimum(np.searchsorted(cdf, u, side="left"), p.size - 1)]
        return inverse_demand(self.spec, u * self.buy_rate)

    def sell_prices(self, u: np.ndarray) -> np.ndarray:
        if self._sell_atoms is not None:
            p, cdf = self._sell_atoms
            return p[np.minimum(np.searchsorted(cdf, u, side="left"), p.size - 1)]
        return inverse_supply(self.spec, u * self.sell_rate)

    def draw(self, rng: np.random.Generator, size: int):
        """``(prices, is_buy, waiting_times)`` for ``size`` arrivals."""
        side_u = rng.random(size)
        price_u = 1.0 - rng.random(size)  # in (0, 1]
        dts = rng.exponential(1.0 / self.total_rate, size)
        is_buy = side_u < self.p_buy
        prices = np.empty(size)
        if np.any(is_buy):
            prices[is_buy] = self.buy_prices(price_u[is_buy])
        if np.any(~is_buy):
            prices[~is_buy] = self.sell_prices(price_u[~is_buy])
        return prices, is_buy.astype(np.uint8), dts


def make_rng(seed: int) -> np.random.Generator:
    """The pinned generator: numpy's Philox counter-based bit generator."""
    return np.random.Generator(np.random.Philox(int(seed)))


def sample_arrival(spec: ModelSpec, rng: np.random.Generator, sampler: Sampler | None = None) -> Arrival:
    """One arrival; ``timestamp`` is the waiting time since the previous one."""
    sampler = sampler or Sampler(spec)
    prices, is_buy, dts = sampler.draw(rng, 1)
    return Arrival(float(prices[0]), BUY if is_buy[0] else SELL, float(dts[0]))


# --------------------------------------------------------------------------
# Runs
# --------------------------------------------------------------------------


@dataclass
class Collectors:
    """What ``run`` records.

    ``functionals`` holds weight pairs ``(w_minus, w_plus)`` (vectorised
    callables, e.g. from ``analytic.special_weights``) whose linear
    functionals are sampled every ``sample_every`` steps; with ``lyapunov``
    the two extremal functionals are appended and ``V`` is reported too.
    """

    f_grid: Sequence[float] | None = None
    f_points: int = 16
    regions: Sequence[tuple[float, float]] = ()
    sample_every: int = 0
    functionals: Sequence[tuple[Callable, Callable]] = ()
    lyapunov: bool = False
    burn_fraction: float = BURN_FRACTION
    n_batches: int = N_BATCHES
    check_invariants: bool = False


@dataclass(eq=False)
class SimStats:
    steps: int
    burn: int
    time: float
    f_grid: np.ndarray
    empirical_f_minus: np.ndarray
    empirical_f_plus: np.ndarray
    f_minus_se: np.ndarray
    f_plus_se: np.ndarray
    return_times: np.ndarray
    capped: int
    book_size_series: np.ndarray
    running_min_bid: np.ndarray
    running_max_ask: np.ndarray
    functional_series: np.ndarray | None
    regions: tuple[tuple[float, float], ...]
    counters: np.ndarray
    final_book: OrderBook
    max_size: int
    kernel: str = KERNEL
    seed: int | None = None

    @property
    def liminf_bid(self) -> float:
        """Minimum best bid over the last batch (tail estimate of the liminf)."""
        return float(self.running_min_bid[-1])

    @property
    def limsup_ask(self) -> float:
        return float(self.running_max_ask[-1])

    def region_counts(self, region: tuple[float, float]) -> dict:
        key = (float(region[0]), float(region[1]))
        if key not in self.regions:
            raise KeyError(f"region {region} was not tracked; pass it in Collectors.regions")
        c = self.counters[self.regions.index(key)]
        return {"sell_adds": int(c[0]), "sell_removes": int(c[1]), "buy_adds": int(c[2]), "buy_removes": int(c[3])}

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "burn": self.burn,
            "time": self.time,
            "kernel": self.kernel,
            "seed": self.seed,
            "f_grid": self.f_grid.tolist(),
            "empirical_f_minus": self.empirical_f_minus.tolist(),
            "f_minus_se": self.f_minus_se.tolist(),
            "empirical_f_plus": self.empirical_f_plus.tolist(),
            "f_plus_se": self.f_plus_se.tolist(),
            "returns": int(self.return_times.size),
            "mean_return_time": float(self.return_times.mean()) if self.return_times.size else None,
            "capped": self.capped,
            "liminf_bid": self.liminf_bid,
            "limsup_ask": self.limsup_ask,
            "max_size": self.max_size,
            "final_size": self.final_book.size,
            "regions": [
                {"region": list(r), **self.region_counts(r)} for r in self.regions
            ],
        }


def _weights_for(prices, is_buy, pairs) -> np.ndarray:
    out = np.zeros((prices.size, len(pairs)))
    buy = is_buy.astype(bool)
    for k, (wm, wp) in enumerate(pairs):
        if np.any(buy):
            out[buy, k] = wm(prices[buy])
        if np.any(~buy):
            out[~buy, k] = wp(prices[~buy])
    return out


def _empirical(hist: np.ndarray, upper: bool):
    """Per-grid-point frequency and batch-means standard error from a histogram."""
    totals = hist.sum(axis=1)
    used = totals > 0
    hist, totals = hist[used], totals[used]
    if upper:
        # bins come from bisect_right: bin i holds grid[i-1] <= ask < grid[i]; ask >= grid[j] iff i >= j + 1
        cum = np.cumsum(hist[:, ::-1], axis=1)[:, ::-1][:, 1:]
    else:
        # bins come from bisect_left: bin i holds grid[i-1] < bid <= grid[i]; bid <= grid[j] iff i <= j
        cum = np.cumsum(hist, axis=1)[:, :-1]
    freq = cum.sum(axis=0) / totals.sum()
    per_batch = cum / totals[:, None]
    b = per_batch.shape[0]
    se = per_batch.std(axis=0, ddof=1) / np.sqrt(b) if b > 1 else np.full(freq.shape, np.nan)
    return freq, se


def default_f_grid(spec: ModelSpec, points: int = 16) -> np.ndarray:
    """``points`` equally spaced interior prices."""
    lo, hi = spec.interval_lo, spec.interval_hi
    return lo + (hi - lo) * np.arange(1, points + 1) / (points + 1)


def _start_chain(spec, steps, collectors, cap, n_weights, kernel):
    lo, hi = spec.interval_lo, spec.interval_hi
    grid = np.asarray(collectors.f_grid if collectors.f_grid is not None
                      else default_f_grid(spec, collectors.f_points), dtype=float)
    burn = int(collectors.burn_fraction * steps)
    n_batches = max(1, min(collectors.n_batches, steps - burn))
    batch_len = max(1, (steps - burn) // n_batches)
    regions = np.asarray([tuple(map(float, r)) for r in collectors.regions], dtype=float).reshape(-1, 2)
    cls = kernel_class(kernel)
    state = cls(lo, hi, n_weights, grid, burn, batch_len, n_batches, regions,
                collectors.sample_every, cap, collectors.check_invariants)
    return state, grid, burn


def run(spec: ModelSpec, steps: int, seed: int = 0, collectors: Collectors | None = None,
        initial: OrderBook | None = None, cap: int = 0, kernel: str | None = None) -> SimStats:
    """Simulate ``steps`` arrivals of the embedded chain.

    The first ``burn_fraction`` of steps is excluded from occupation
    statistics and add/remove counters.  With ``cap > 0`` an excursion
    lasting ``cap`` steps without emptying the book is recorded as capped and
    the book is reset to empty.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    validate(spec)
    collectors = collectors or Collectors()
    pairs = list(collectors.functionals)
    if collectors.lyapunov:
        from .analytic import extremal_weights

        lo_w, hi_w = extremal_weights(spec)
        pairs += [(lo_w.w_minus_fn, lo_w.w_plus_fn), (hi_w.w_minus_fn, hi_w.w_plus_fn)]
    state, grid, burn = _start_chain(spec, steps, collectors, cap, len(pairs), kernel)
    if initial is not None:
        for p in initial.buys:
            state.insert(p, True, [float(wm(np.asarray(p))) for wm, _ in pairs])
        for p in initial.sells:
            state.insert(p, False, [float(wp(np.asarray(p))) for _, wp in pairs])
    sampler = Sampler(spec)
    rng = make_rng(seed)
    done = 0
    while done < steps:
        m = min(CHUNK, steps - done)
        prices, is_buy, dts = sampler.draw(rng, m)
        w = _weights_for(prices, is_buy, pairs)
        state.advance(prices, is_buy, dts, np.ascontiguousarray(w, dtype=float))
        done += m

    fm, fm_se = _empirical(np.asarray(state.hist_minus), upper=False)
    fp, fp_se = _empirical(np.asarray(state.hist_plus), upper=True)
    samples = state.sample_array()
    series = None
    if pairs and samples.shape[0]:
        series = samples[:, [0] + list(range(3, samples.shape[1]))]
        if collectors.lyapunov:
            f1, f2 = series[:, -2], series[:, -1]
            series = np.column_stack((series, np.hypot(np.maximum(f1, 0), np.maximum(f2, 0))))
    buys, sells = state.book()
    bmin = np.asarray(state.batch_min_bid)
    bmax = np.asarray(state.batch_max_ask)
    return SimStats(
        steps=steps,
        burn=burn,
        time=float(state.time),
        f_grid=grid,
        empirical_f_minus=fm,
        empirical_f_plus=fp,
        f_minus_se=fm_se,
        f_plus_se=fp_se,
        return_times=state.return_time_array(),
        capped=int(state.capped),
        book_size_series=samples[:, :3].astype(np.int64),
        running_min_bid=bmin[np.isfinite(bmin)],
        running_max_ask=bmax[np.isfinite(bmax)],
        functional_series=series,
        regions=tuple(tuple(map(float, r)) for r in collectors.regions),
        counters=np.asarray(state.counters),
        final_book=OrderBook(tuple(buys), tuple(sells)),
        max_size=int(state.max_size),
        kernel=kernel or KERNEL,
        seed=seed,
    )


def _replica(args):
    spec, steps, seed, collectors, kernel = args
    return run(spec, steps, seed, collectors, kernel=kernel)


def run_replicas(spec: ModelSpec, steps: int, seeds: Sequence[int], collectors: Collectors | None = None,
                 workers: int = 1, kernel: str | None = None) -> list[SimStats]:
    """Independent runs, one Philox stream per seed, returned in the order of ``seeds``.

    With ``workers > 1`` the runs are spread over processes; the output does
    not depend on ``workers``.  Collectors holding lambdas cannot be sent to
    worker processes, so use ``workers=1`` for those.
    """
    jobs = [(spec, steps, int(s), collectors, kernel) for s in seeds]
    if workers <= 1 or len(jobs) <= 1:
        return [_replica(j) for j in jobs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_replica, jobs))


# --------------------------------------------------------------------------
# Recurrence diagnostics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ReturnTimeStats:
    episodes: int
    mean: float
    count_capped: int
    cap: int
    steps: int

    @property
    def capped_fraction(self) -> float:
        return self.count_capped / self.episodes if self.episodes else 0.0

    def to_dict(self) -> dict:
        return {"episodes": self.episodes, "mean": self.mean, "count_capped": self.count_capped,
                "capped_fraction": self.capped_fraction, "cap": self.cap, "steps": self.steps}


def return_time_stats(spec: ModelSpec, episodes: int, cap: int, seed: int = 0,
                      kernel: str | None = None) -> ReturnTimeStats:
    """Excursions from the empty book, each cut off after ``cap`` steps.

    ``mean`` averages the uncapped return times (``nan`` if all were capped).
    """
    if episodes < 1 or cap < 1:
        raise ValueError("episodes and cap must be positive")
    validate(spec)
    collectors = Collectors(f_points=1, n_batches=1, burn_fraction=0.0)
    state, _, _ = _start_chain(spec, 1, collectors, cap, 0, kernel)
    sampler = Sampler(spec)
    rng = make_rng(seed)
    empty_w = np.zeros((CHUNK, 0))
    steps = 0
    while len(state.return_time_array()) + state.capped < episodes:
        prices, is_buy, dts = sampler.draw(rng, CHUNK)
        steps += state.advance(prices, is_buy, dts, empty_w, episodes)
    times = state.return_time_array()
    mean = float(times.mean()) if times.size else float("nan")
    return ReturnTimeStats(episodes=int(times.size + state.capped), mean=mean,
                           count_capped=int(state.capped), cap=cap, steps=steps)


@dataclass(frozen=True)
class GrowthFit:
    slope: float
    stderr: float
    intercept: float
    p_positive: float

    def positive(self, confidence: float = 0.99) -> bool:
        """One-sided test of ``slope > 0`` at the given confidence."""
        return self.slope > 0 and self.p_positive < 1.0 - confidence


def growth_slope(stats: SimStats) -> GrowthFit:
    """Least-squares line through the sampled book sizes after burn-in."""
    s = stats.book_size_series
    s = s[s[:, 0] > stats.burn]
    if s.shape[0] < 3:
        raise errors.InsufficientData("need at least three size samples after burn-in; set sample_every")
    size = s[:, 1] + s[:, 2]
    fit = sps.linregress(s[:, 0].astype(float), size.astype(float))
    t = fit.slope / fit.stderr if fit.stderr > 0 else (np.inf if fit.slope > 0 else -np.inf)
    p = float(sps.t.sf(t, s.shape[0] - 2))
    return GrowthFit(slope=float(fit.slope), stderr=float(fit.stderr), intercept=float(fit.intercept), p_positive=p)


@dataclass(frozen=True)
class BalanceReport:
    region: tuple[float, float]
    sell_adds: int
    sell_removes: int
    buy_adds: int
    buy_removes: int
    p_sell: float
    p_buy: float
    alpha: float

    @property
    def p_value(self) -> float:
        return min(self.p_sell, self.p_buy)

    @property
    def balanced(self) -> bool:
        return self.p_value > self.alpha

    def to_dict(self) -> dict:
        return {"region": list(self.region), "sell_adds": self.sell_adds, "sell_removes": self.sell_removes,
                "buy_adds": self.buy_adds, "buy_removes": self.buy_removes, "p_sell": self.p_sell,
                "p_buy": self.p_buy, "balanced": self.balanced}


def _binom_p(adds: int, removes: int) -> float:
    if adds + removes == 0:
        return 1.0
    return float(sps.binomtest(adds, adds + removes, 0.5).pvalue)


def balance_test(stats: SimStats, region: tuple[float, float], alpha: float = 0.01) -> BalanceReport:
    """Two-sided binomial tests that orders in ``region`` are added as often as removed.

    Sells and buys are tested separately; the report is balanced when both
    p-values exceed ``alpha``.  A region that saw no events passes vacuously.
    """
    if stats.steps - stats.burn < MIN_BALANCE_STEPS:
        raise errors.InsufficientData(f"need at least {MIN_BALANCE_STEPS} steps after burn-in")
    c = stats.region_counts(region)
    return BalanceReport(
        region=(float(region[0]), float(region[1])),
        **c,
        p_sell=_binom_p(c["sell_adds"], c["sell_removes"]),
        p_buy=_binom_p(c["buy_adds"], c["buy_removes"]),
        alpha=alpha,
    )


# --------------------------------------------------------------------------
# One-step replays from a fixed state
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DriftEstimate:
    mean: float
    se: float
    replays: int

    def within(self, value: float, k: float = 3.0) -> bool:
        return abs(self.mean - value) <= k * self.se + 1e-12


def replay_drift(spec: ModelSpec, book: OrderBook, fn: Callable[[OrderBook], float], replays: int,
                 seed: int = 0) -> DriftEstimate:
    """Monte Carlo mean of ``fn(X_1) - fn(X_0)`` over ``replays`` draws of one arrival from ``book``.

    ``fn`` is evaluated once per distinct arrival, so atomic models with
    expensive functions (such as the Lyapunov function) stay cheap.
    """
    sampler = Sampler(spec)
    prices, is_buy, _ = sampler.draw(make_rng(seed), replays)
    lo, hi = spec.interval_lo, spec.interval_hi
    before = fn(book)
    keys, inverse = np.unique(np.column_stack((prices, is_buy)), axis=0, return_inverse=True)
    deltas = np.empty(keys.shape[0])
    for k, (p, b) in enumerate(keys):
        after = apply_luckock_map(book, Arrival(float(p), BUY if b else SELL), lo, hi)
        deltas[k] = fn(after) - before
    d = deltas[np.ravel(inverse)]
    return DriftEstimate(mean=float(d.mean()), se=float(d.std(ddof=1) / np.sqrt(replays)), replays=replays)


# --------------------------------------------------------------------------
# Figure data
# --------------------------------------------------------------------------


def book_profile(book: OrderBook, lo: float, hi: float) -> np.ndarray:
    """Step function ``x -> X([lo, x])`` as ``(x, value)`` rows at every order price and both ends."""
    xs = np.unique(np.concatenate(([lo], book.buys, book.sells, [hi])))
    return np.column_stack((xs, [book.cumulative(x) for x in xs]))


def figure1_data(spec: ModelSpec, steps: int = 10_000, seed: int = 0) -> tuple[OrderBook, np.ndarray]:
    """Book after ``steps`` arrivals from empty and its cumulative profile."""
    stats = run(spec, steps, seed, Collectors(f_points=1, n_batches=1))
    return stats.final_book, book_profile(stats.final_book, spec.interval_lo, spec.interval_hi)
