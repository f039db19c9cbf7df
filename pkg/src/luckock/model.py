"""Model specifications: demand/supply intensities on a price interval.

A model is a price interval ``[lo, hi]`` together with two cumulative
intensities.  The demand intensity ``lam_minus(x)`` is the arrival rate of
buy orders with limit price at least ``x`` and is nonincreasing; the supply
intensity ``lam_plus(x)`` is the rate of sell orders with limit price at
most ``x`` and is nondecreasing.  Orders placed at the far end of the
interval (buys at ``hi``, sells at ``lo``) are market orders.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any

import numpy as np

from . import errors
from ._roots import bisect_switch

DEMAND = "demand"
SUPPLY = "supply"

MONOTONE_TOL = 1e-12
VALIDATION_POINTS = 4096


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


# --------------------------------------------------------------------------
# Function families
# --------------------------------------------------------------------------


class FunctionFamily:
    """Base class for the parametric intensity shapes.

    Each family knows how to evaluate itself as a demand curve or as a
    supply curve, its derivative (the density of its Stieltjes measure away
    from knots), and the knots where it fails to be smooth.
    """

    kind = "abstract"
    continuous = True

    def value(self, x, side: str) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, x, side: str) -> np.ndarray:
        raise NotImplementedError

    def knots(self) -> tuple[float, ...]:
        return ()

    def atom_at(self, x: float) -> float:
        """Mass of the intensity's jump located exactly at ``x``."""
        return 0.0

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True)
class Uniform(FunctionFamily):
    """``1 - x`` as demand and ``x`` as supply."""

    kind = "uniform"

    def value(self, x, side):
        x = _as_array(x)
        return 1.0 - x if side == DEMAND else x.copy()

    def derivative(self, x, side):
        x = _as_array(x)
        return np.full_like(x, -1.0 if side == DEMAND else 1.0)

    def to_dict(self):
        return {"family": self.kind}


@dataclass(frozen=True)
class Power(FunctionFamily):
    """``(1 - x)**alpha`` as demand and ``x**alpha`` as supply."""

    alpha: float = 1.0
    kind = "power"

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise errors.NonEvaluable(f"power exponent must be positive, got {self.alpha}")

    def value(self, x, side):
        x = _as_array(x)
        base = 1.0 - x if side == DEMAND else x
        with np.errstate(invalid="ignore"):
            return np.where(base >= 0, np.abs(base) ** self.alpha, np.nan)

    def derivative(self, x, side):
        x = _as_array(x)
        base = 1.0 - x if side == DEMAND else x
        sign = -1.0 if side == DEMAND else 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            d = sign * self.alpha * np.abs(base) ** (self.alpha - 1.0)
        return np.where(base >= 0, d, np.nan)

    def to_dict(self):
        return {"family": self.kind, "alpha": self.alpha}


@dataclass(frozen=True)
class PiecewiseLinear(FunctionFamily):
    """Linear interpolation through ``(price, value)`` knots.

    Outside the knot range the first/last value is held constant.
    """

    points: tuple[tuple[float, float], ...] = ()
    kind = "piecewise_linear"

    def __post_init__(self):
        pts = tuple((float(a), float(b)) for a, b in self.points)
        if len(pts) < 2:
            raise errors.NonEvaluable("piecewise_linear needs at least two knots")
        xs = [p[0] for p in pts]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise errors.NonEvaluable("piecewise_linear knots must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @property
    def _xs(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def _ys(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    def value(self, x, side):
        return np.interp(_as_array(x), self._xs, self._ys)

    def derivative(self, x, side):
        x = _as_array(x)
        xs, ys = self._xs, self._ys
        slopes = np.concatenate(([0.0], np.diff(ys) / np.diff(xs), [0.0]))
        idx = np.searchsorted(xs, x, side="right")
        return slopes[idx]

    def knots(self):
        return tuple(p[0] for p in self.points)

    def to_dict(self):
        return {"family": self.kind, "knots": [list(p) for p in self.points]}


@dataclass(frozen=True)
class Atomic(FunctionFamily):
    """Finitely many price atoms with given arrival rates.

    As demand, the intensity at ``x`` is the total rate of atoms at prices
    ``>= x`` (left-continuous); as supply it is the total rate at prices
    ``<= x`` (right-continuous).
    """

    prices: tuple[float, ...] = ()
    rates: tuple[float, ...] = ()
    kind = "atomic"
    continuous = False

    def __post_init__(self):
        prices = tuple(float(p) for p in self.prices)
        rates = tuple(float(r) for r in self.rates)
        if len(prices) != len(rates) or not prices:
            raise errors.NonEvaluable("atomic family needs equally many prices and rates")
        if any(b <= a for a, b in zip(prices, prices[1:])):
            raise errors.NonEvaluable("atomic prices must be strictly increasing")
        if any(r < 0 or not math.isfinite(r) for r in rates):
            raise errors.NonEvaluable("atomic rates must be finite and nonnegative")
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "rates", rates)

    def value(self, x, side):
        x = _as_array(x)
        p = np.asarray(self.prices)
        cum = np.concatenate(([0.0], np.cumsum(self.rates)))
        if side == DEMAND:
            # rate of atoms at prices >= x
            return cum[-1] - cum[np.searchsorted(p, x, side="left")]
        return cum[np.searchsorted(p, x, side="right")]

    def derivative(self, x, side):
        return np.zeros_like(_as_array(x))

    def knots(self):
        return self.prices

    def atom_at(self, x):
        for p, r in zip(self.prices, self.rates):
            if p == x:
                return r
        return 0.0

    def to_dict(self):
        return {"family": self.kind, "prices": list(self.prices), "rates": list(self.rates)}


@dataclass(frozen=True)
class Constant(FunctionFamily):
    """A constant intensity (all orders of that side are market orders)."""

    level: float = 1.0
    kind = "constant"

    def value(self, x, side):
        return np.full_like(_as_array(x), self.level)

    def derivative(self, x, side):
        return np.zeros_like(_as_array(x))

    def to_dict(self):
        return {"family": self.kind, "value": self.level}


def family_from_dict(d: dict[str, Any]) -> FunctionFamily:
    """Build a family from its JSON description."""
    try:
        kind = d["family"]
    except (KeyError, TypeError):
        raise errors.NonEvaluable(f"family description lacks a 'family' key: {d!r}") from None
    if kind == "uniform":
        return Uniform()
    if kind == "power":
        return Power(float(d["alpha"]))
    if kind == "piecewise_linear":
        return PiecewiseLinear(tuple(tuple(p) for p in d["knots"]))
    if kind == "atomic":
        return Atomic(tuple(d["prices"]), tuple(d["rates"]))
    if kind == "constant":
        return Constant(float(d["value"]))
    raise errors.NonEvaluable(f"unknown family {kind!r}")


# --------------------------------------------------------------------------
# Model specification
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    """A price interval plus demand and supply intensities."""

    interval_lo: float
    interval_hi: float
    demand: FunctionFamily
    supply: FunctionFamily

    def __post_init__(self):
        lo, hi = float(self.interval_lo), float(self.interval_hi)
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise errors.BadInterval(f"need finite lo < hi, got ({lo}, {hi})")
        object.__setattr__(self, "interval_lo", lo)
        object.__setattr__(self, "interval_hi", hi)

    # evaluation ------------------------------------------------------------
    def lam_minus(self, x) -> np.ndarray:
        return self.demand.value(x, DEMAND)

    def lam_plus(self, x) -> np.ndarray:
        return self.supply.value(x, SUPPLY)

    def dlam_minus(self, x) -> np.ndarray:
        return self.demand.derivative(x, DEMAND)

    def dlam_plus(self, x) -> np.ndarray:
        return self.supply.derivative(x, SUPPLY)

    def chi(self, x) -> np.ndarray:
        """``lam_plus - lam_minus``, the excess supply."""
        return self.lam_plus(x) - self.lam_minus(x)

    @property
    def width(self) -> float:
        return self.interval_hi - self.interval_lo

    @property
    def buy_market_rate(self) -> float:
        return float(self.lam_minus(self.interval_hi))

    @property
    def sell_market_rate(self) -> float:
        return float(self.lam_plus(self.interval_lo))

    @property
    def buy_rate(self) -> float:
        return float(self.lam_minus(self.interval_lo))

    @property
    def sell_rate(self) -> float:
        return float(self.lam_plus(self.interval_hi))

    @property
    def total_rate(self) -> float:
        return self.buy_rate + self.sell_rate

    @property
    def is_continuous(self) -> bool:
        return self.demand.continuous and self.supply.continuous

    def knots(self) -> np.ndarray:
        """Sorted family knots lying strictly inside the interval."""
        ks = set(self.demand.knots()) | set(self.supply.knots())
        ks = [k for k in ks if self.interval_lo < k < self.interval_hi]
        return np.array(sorted(ks), dtype=float)

    def grid(self, n: int = VALIDATION_POINTS) -> np.ndarray:
        """Uniform grid with ``n`` cells, merged with the interior knots."""
        base = np.linspace(self.interval_lo, self.interval_hi, n + 1)
        return np.unique(np.concatenate((base, self.knots())))

    # serialisation ---------------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        return {
            "interval": [self.interval_lo, self.interval_hi],
            "demand": self.demand.to_dict(),
            "supply": self.supply.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ModelSpec":
        try:
            lo, hi = d["interval"]
            demand = family_from_dict(d["demand"])
            supply = family_from_dict(d["supply"])
        except (KeyError, TypeError, ValueError) as exc:
            raise errors.NonEvaluable(f"malformed model description: {exc}") from None
        return cls(float(lo), float(hi), demand, supply)

    @classmethod
    def load(cls, path: str | Path) -> "ModelSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def uniform(lo: float = 0.0, hi: float = 1.0) -> ModelSpec:
    """The uniform model, optionally restricted to ``[lo, hi]``."""
    return ModelSpec(lo, hi, Uniform(), Uniform())


def power(alpha: float, lo: float = 0.0, hi: float = 1.0) -> ModelSpec:
    return ModelSpec(lo, hi, Power(alpha), Power(alpha))


# --------------------------------------------------------------------------
# Inverses and the Walrasian point
# --------------------------------------------------------------------------


def _snap(x: np.ndarray, lo: np.ndarray, hi: np.ndarray, knots: np.ndarray, scale: float) -> np.ndarray:
    """Replace bisection results by a knot lying inside the final bracket.

    Step intensities switch exactly at knots, so when the bracket has
    collapsed onto one the knot itself is the exact answer.
    """
    if knots.size == 0:
        return x
    slack = 8 * np.finfo(float).eps * max(scale, 1.0)
    idx = np.clip(np.searchsorted(knots, lo - slack), 0, knots.size - 1)
    k = knots[idx]
    inside = (k >= lo - slack) & (k <= hi + slack)
    return np.where(inside, k, x)


def _all_knots(spec: ModelSpec) -> np.ndarray:
    ks = set(spec.demand.knots()) | set(spec.supply.knots())
    ks = [k for k in ks if spec.interval_lo <= k <= spec.interval_hi]
    return np.array(sorted(ks), dtype=float)


def inverse_demand(spec: ModelSpec, v) -> np.ndarray:
    """``sup{x in [lo, hi] : lam_minus(x) >= v}`` (``lo`` when empty)."""
    v = _as_array(v)
    lo = np.full_like(v, spec.interval_lo)
    hi = np.full_like(v, spec.interval_hi)
    at_hi = spec.lam_minus(spec.interval_hi) >= v
    empty = spec.lam_minus(spec.interval_lo) < v
    blo, bhi = bisect_switch(lambda x: spec.lam_minus(x) >= v, lo, hi)
    x = _snap(blo, blo, bhi, _all_knots(spec), abs(spec.interval_hi) + abs(spec.interval_lo))
    x = np.where(at_hi, spec.interval_hi, np.where(empty, spec.interval_lo, x))
    return x


def inverse_supply(spec: ModelSpec, v) -> np.ndarray:
    """``inf{x in [lo, hi] : lam_plus(x) >= v}`` (``hi`` when empty)."""
    v = _as_array(v)
    lo = np.full_like(v, spec.interval_lo)
    hi = np.full_like(v, spec.interval_hi)
    at_lo = spec.lam_plus(spec.interval_lo) >= v
    empty = spec.lam_plus(spec.interval_hi) < v
    # predicate "lam_plus(x) < v" is true left of the switch
    blo, bhi = bisect_switch(lambda x: spec.lam_plus(x) < v, lo, hi)
    x = _snap(bhi, blo, bhi, _all_knots(spec), abs(spec.interval_hi) + abs(spec.interval_lo))
    x = np.where(at_lo, spec.interval_lo, np.where(empty, spec.interval_hi, x))
    return x


def walras_point(spec: ModelSpec) -> tuple[float, float]:
    """Leftmost crossing ``x_W`` of supply over demand and ``V_W``.

    ``V_W`` is the supremum over the interval of ``min(lam_minus, lam_plus)``.
    The crossing is found by bisection on the monotone excess supply; the
    supremum is then taken over the crossing, the grid and all knots so the
    answer is also right for step intensities.
    """
    lo, hi = spec.interval_lo, spec.interval_hi
    if spec.chi(lo) >= 0:
        x_w = lo
        pts = np.array([lo])
    elif spec.chi(hi) < 0:
        x_w = hi
        pts = np.array([hi])
    else:
        blo, bhi = bisect_switch(lambda x: spec.chi(x) < 0, lo, hi)
        blo, bhi = float(blo), float(bhi)
        x_w = float(_snap(np.array(bhi), np.array(blo), np.array(bhi), _all_knots(spec), abs(hi) + abs(lo)))
        pts = np.array([blo, bhi, x_w])
    if spec.is_continuous:
        cand = pts
    else:
        cand = np.concatenate((pts, spec.grid(), _all_knots(spec)))
    mins = np.minimum(spec.lam_minus(cand), spec.lam_plus(cand))
    return x_w, float(np.max(mins))


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of checking the standing assumptions on a dense grid."""

    a1: bool  # monotone, nonnegative intensities
    a2: bool  # no demand atom at lo, no supply atom at hi
    a3: bool  # continuous and monotone
    a4: bool  # excess supply strictly increasing
    a5: bool  # positive intensities inside the interval
    a6: bool  # positive market-order rates
    a7: bool  # V_W < V_max
    walras_price: float | None
    walras_volume: float
    v_max: float
    total_rate: float = 0.0

    def holds(self, *names: str) -> bool:
        return all(getattr(self, n) for n in names)

    def require(self, *names: str) -> None:
        failed = tuple(n for n in names if not getattr(self, n))
        if failed:
            raise errors.AssumptionViolation(
                f"assumption(s) {', '.join(f.upper() for f in failed)} fail for this model", failed
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "a1": self.a1, "a2": self.a2, "a3": self.a3, "a4": self.a4,
            "a5": self.a5, "a6": self.a6, "a7": self.a7,
            "walras_price": self.walras_price,
            "walras_volume": self.walras_volume,
            "v_max": self.v_max,
            "total_rate": self.total_rate,
        }


@lru_cache(maxsize=256)
def validate(spec: ModelSpec) -> AssumptionReport:
    """Check assumptions A1-A7 on a 4096-cell grid plus all knots."""
    grid = spec.grid(VALIDATION_POINTS)
    try:
        lm = spec.lam_minus(grid)
        lp = spec.lam_plus(grid)
    except Exception as exc:  # families may raise arbitrary numeric errors
        raise errors.NonEvaluable(f"cannot evaluate intensities: {exc}") from exc
    if not (np.all(np.isfinite(lm)) and np.all(np.isfinite(lp))):
        raise errors.NonEvaluable("intensities are not finite on the closed interval")

    lo, hi = spec.interval_lo, spec.interval_hi
    a1 = bool(
        np.all(np.diff(lm) <= MONOTONE_TOL)
        and np.all(np.diff(lp) >= -MONOTONE_TOL)
        and lm.min() >= 0
        and lp.min() >= 0
        and spec.total_rate > 0
    )
    a2 = spec.demand.atom_at(lo) == 0 and spec.supply.atom_at(hi) == 0
    a3 = a1 and spec.is_continuous
    a4 = bool(np.all(np.diff(lp - lm) > 0))
    inner = slice(1, -1)
    a5 = bool(np.all(lm[inner] > 0) and np.all(lp[inner] > 0))
    a6 = bool(spec.sell_market_rate > 0 and spec.buy_market_rate > 0)
    v_max = float(min(spec.buy_rate, spec.sell_rate))
    x_w, v_w = walras_point(spec)
    a7 = v_w < v_max
    walras_price = x_w if (a3 and a4 and a7) else None
    return AssumptionReport(
        a1=a1, a2=bool(a2), a3=bool(a3), a4=a4, a5=a5, a6=a6, a7=bool(a7),
        walras_price=walras_price, walras_volume=v_w, v_max=v_max,
        total_rate=spec.total_rate,
    )


def restrict(spec: ModelSpec, j_lo: float, j_hi: float) -> ModelSpec:
    """The same intensities viewed on the subinterval ``[j_lo, j_hi]``.

    Orders beyond the new endpoints become market orders, so the new
    market-order rates are ``lam_plus(j_lo)`` and ``lam_minus(j_hi)``.
    """
    lo, hi = spec.interval_lo, spec.interval_hi
    if not (lo <= j_lo < j_hi <= hi):
        raise errors.BadInterval(f"[{j_lo}, {j_hi}] is not a nonempty subinterval of [{lo}, {hi}]")
    return ModelSpec(float(j_lo), float(j_hi), spec.demand, spec.supply)


# --------------------------------------------------------------------------
# Standard form
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MonotoneMap:
    """Right-continuous inverse ``psi`` of the excess supply of ``source``.

    ``psi(x) = sup{y : chi(y) <= x}`` with ``chi = lam_plus - lam_minus``.
    An identity map is represented by ``source=None``.
    """

    source: ModelSpec | None

    def __call__(self, x) -> np.ndarray:
        x = _as_array(x)
        if self.source is None:
            return x.copy()
        src = self.source
        lo, hi = src.interval_lo, src.interval_hi
        c_lo, c_hi = float(src.chi(lo)), float(src.chi(hi))
        blo, bhi = bisect_switch(lambda y: src.chi(y) <= x, np.full_like(x, lo), np.full_like(x, hi))
        y = _snap(blo, blo, bhi, _all_knots(src), abs(hi) + abs(lo))
        # outside the image, and at its left end, use psi(I_-) = I'_-
        return np.where(x >= c_hi, hi, np.where(x <= c_lo, lo, y))

    @property
    def breakpoints(self) -> list[tuple[float, float, float]]:
        """Flat pieces ``(x_start, x_end, y)`` of ``psi`` caused by atoms."""
        if self.source is None:
            return []
        out = []
        src = self.source
        for p in _all_knots(src):
            jump_sell = src.supply.atom_at(p)
            jump_buy = src.demand.atom_at(p)
            if jump_sell + jump_buy > 0:
                c = float(src.chi(p))
                out.append((c - jump_sell, c + jump_buy, float(p)))
        return out


@dataclass(frozen=True)
class StandardFormFamily(FunctionFamily):
    """One intensity of the standard-form version of ``source``.

    With ``y = psi(x)`` the supply side is ``min(lam'_+(y), lam'_-(y) + x)``
    and the demand side is that minus ``x``.  Inside the image of an atom
    this splits the atom into a sell block followed by a buy block.
    """

    source: ModelSpec = field(default=None)  # type: ignore[assignment]
    side: str = SUPPLY
    kind = "standard_form"

    def _parts(self, x):
        x = _as_array(x)
        y = MonotoneMap(self.source)(x)
        return x, y, self.source.lam_plus(y), self.source.lam_minus(y)

    def value(self, x, side):
        x, y, lp, lm = self._parts(x)
        sup = np.minimum(lp, lm + x)
        return sup if side == SUPPLY else sup - x

    def derivative(self, x, side):
        x, y, lp, lm = self._parts(x)
        dlp = self.source.dlam_plus(y)
        dlm = self.source.dlam_minus(y)
        dchi = dlp - dlm
        with np.errstate(divide="ignore", invalid="ignore"):
            chain = np.where(dchi > 0, dlp / dchi, 0.0)
        scale = 1e-12 * (1.0 + np.abs(lp))
        sell_block = lm + x < lp - scale
        buy_block = lm + x > lp + scale
        dsup = np.where(sell_block, 1.0, np.where(buy_block, 0.0, chain))
        return dsup if side == SUPPLY else dsup - 1.0

    def knots(self):
        src = self.source
        ks = []
        for p in _all_knots(src):
            c = float(src.chi(p))
            ks.extend([c - src.supply.atom_at(p), c, c + src.demand.atom_at(p)])
        return tuple(sorted(set(ks)))

    def to_dict(self):
        """Serialise by sampling onto a piecewise-linear family."""
        src = self.source
        lo, hi = float(src.chi(src.interval_lo)), float(src.chi(src.interval_hi))
        xs = np.unique(np.concatenate((np.linspace(lo, hi, 4097), self.knots())))
        xs = xs[(xs >= lo) & (xs <= hi)]
        vals = self.value(xs, self.side)
        return {"family": "piecewise_linear", "knots": [[float(a), float(b)] for a, b in zip(xs, vals)]}


def to_standard_form(spec: ModelSpec) -> tuple[ModelSpec, MonotoneMap]:
    """Reparametrise prices so that ``lam_plus(x) - lam_minus(x) = x``."""
    rep = validate(spec)
    rep.require("a1", "a2")
    lo, hi = spec.interval_lo, spec.interval_hi
    c_lo, c_hi = float(spec.chi(lo)), float(spec.chi(hi))
    if not c_hi > c_lo:
        raise errors.Degenerate("excess supply is constant; the standard form has an empty interval")
    grid = spec.grid()
    if np.max(np.abs(spec.chi(grid) - grid)) <= MONOTONE_TOL:
        return spec, MonotoneMap(None)
    new = ModelSpec(c_lo, c_hi, StandardFormFamily(spec, DEMAND), StandardFormFamily(spec, SUPPLY))
    return new, MonotoneMap(spec)
