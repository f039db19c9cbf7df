"""Closed-form equilibrium theory of the order book.

Everything here is expressed through two running integrals of the model,

    R1(x) = int^x (1/lam_minus) d(1/lam_plus),
    R2(x) = int^x (1/lam_plus)  d(1/lam_minus),

which are computed once per model by high-order quadrature (see
``stieltjes.RunningIntegral``).  The normalising constant ``gamma``, the
equilibrium laws ``f_minus(x) = P[best bid <= x]`` and
``f_plus(x) = P[best ask >= x]``, the ``u`` functions, the boundary
functionals ``Lambda_minus``/``Lambda_plus`` and the special weight functions
are all short closed forms in ``R1`` and ``R2``.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable

import numpy as np

from . import errors
from .model import ModelSpec, validate
from .stieltjes import BVFunction, RunningIntegral, graded_breaks

DEFAULT_GRID = 4096
ZERO_BAND = 1e-9
GAMMA_RTOL = 1e-6
IDENTITY_TOL = 1e-8

MINUS = "minus"
PLUS = "plus"


def default_grid() -> int:
    """Grid size, overridable through the ``LUCKOCK_GRID`` environment variable."""
    raw = os.environ.get("LUCKOCK_GRID")
    if raw is None:
        return DEFAULT_GRID
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"LUCKOCK_GRID must be an integer, got {raw!r}") from None
    if n < 16:
        raise ValueError("LUCKOCK_GRID must be at least 16")
    return n


class Classification(str, enum.Enum):
    POSITIVE_RECURRENT = "PositiveRecurrent"
    NULL_BOUNDARY = "NullBoundary"
    NOT_POSITIVE_RECURRENT = "NotPositiveRecurrent"


def classify_value(m: float, band: float = ZERO_BAND) -> Classification:
    if m > band:
        return Classification.POSITIVE_RECURRENT
    if m >= -band:
        return Classification.NULL_BOUNDARY
    return Classification.NOT_POSITIVE_RECURRENT


def _sign(v: float, band: float = ZERO_BAND) -> int:
    return 0 if abs(v) <= band else (1 if v > 0 else -1)


# --------------------------------------------------------------------------
# Per-model quadrature core
# --------------------------------------------------------------------------


class Core:
    """Running integrals and derived constants of one model.

    The core only needs the intensities to be continuous and positive inside
    the interval; boundary quantities (``gamma`` and friends) additionally
    need positive market-order rates and are computed lazily.
    """

    def __init__(self, spec: ModelSpec, cells: int):
        self.spec = spec
        self.lo, self.hi = spec.interval_lo, spec.interval_hi
        self.cells = cells
        self.breaks = graded_breaks(self.lo, self.hi, cells, spec.knots())
        self.table_grid = spec.grid(cells)
        lm, lp, dlm, dlp = spec.lam_minus, spec.lam_plus, spec.dlam_minus, spec.dlam_plus
        # (1/lm) d(1/lp) and (1/lp) d(1/lm) as densities in x
        self.R1 = RunningIntegral(lambda t: -dlp(t) / (lm(t) * lp(t) ** 2), self.breaks)
        self.R2 = RunningIntegral(lambda t: -dlm(t) / (lp(t) * lm(t) ** 2), self.breaks)

    # intensities -----------------------------------------------------------
    def lm(self, x):
        return self.spec.lam_minus(x)

    def lp(self, x):
        return self.spec.lam_plus(x)

    def P(self, x):
        """``1/(lam_minus * lam_plus)``."""
        return 1.0 / (self.lm(x) * self.lp(x))

    # boundary constants ----------------------------------------------------
    @property
    def i1(self) -> float:
        return float(self.R1.between(self.lo, self.hi))

    @property
    def i2(self) -> float:
        return float(self.R2.between(self.lo, self.hi))

    @property
    def gamma_forms(self) -> tuple[float, float]:
        a = float(self.P(self.hi)) - self.i1
        b = float(self.P(self.lo)) + self.i2
        return a, b

    @property
    def gamma(self) -> float:
        a, b = self.gamma_forms
        return 0.5 * (a + b)

    @property
    def kappa(self) -> float:
        return (1.0 / float(self.lm(self.hi)) + 1.0 / float(self.lp(self.lo))) / self.gamma

    # closed forms ----------------------------------------------------------
    def f_plus(self, x):
        x = np.asarray(x, dtype=float)
        v = 1.0 / float(self.lp(self.lo)) + self.kappa * (self.R1(x) - self.R1(self.lo))
        return self.lp(x) * v

    def f_minus(self, x):
        x = np.asarray(x, dtype=float)
        v = 1.0 / float(self.lm(self.hi)) - self.kappa * (self.R2(self.hi) - self.R2(x))
        return self.lm(x) * v

    def u_mp(self, x):
        """``u_{-+}``: nonincreasing, equal to 1 at the left end."""
        x = np.asarray(x, dtype=float)
        return (float(self.P(self.hi)) - (self.R1(self.hi) - self.R1(x))) / self.gamma

    def u_pm(self, x):
        """``u_{+-}``: nondecreasing, equal to 1 at the right end."""
        x = np.asarray(x, dtype=float)
        return (float(self.P(self.lo)) + (self.R2(x) - self.R2(self.lo))) / self.gamma

    def u_mp_alt(self, x):
        x = np.asarray(x, dtype=float)
        return (self.P(x) + (self.R2(self.hi) - self.R2(x))) / self.gamma

    def u_pm_alt(self, x):
        x = np.asarray(x, dtype=float)
        return (self.P(x) - (self.R1(x) - self.R1(self.lo))) / self.gamma

    def lambda_functionals(self, j_lo, j_hi) -> tuple[np.ndarray, np.ndarray]:
        """``(Lambda_minus, Lambda_plus)`` of the model restricted to ``[j_lo, j_hi]``."""
        j_lo = np.asarray(j_lo, dtype=float)
        j_hi = np.asarray(j_hi, dtype=float)
        lam_m = 1.0 / (self.lm(j_lo) * self.lm(j_hi)) - (self.R2(j_hi) - self.R2(j_lo))
        lam_p = 1.0 / (self.lp(j_lo) * self.lp(j_hi)) + (self.R1(j_hi) - self.R1(j_lo))
        return lam_m, lam_p


@lru_cache(maxsize=64)
def _core(spec: ModelSpec, cells: int) -> Core:
    return Core(spec, cells)


def core(spec: ModelSpec, cells: int | None = None, require: Iterable[str] = ("a3", "a6")) -> Core:
    """Validated, cached quadrature core for ``spec``."""
    validate(spec).require(*require)
    return _core(spec, cells or default_grid())


# --------------------------------------------------------------------------
# Result types
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LuckockSolution:
    """Equilibrium laws of the best bid and best ask, plus constants."""

    f_minus: BVFunction
    f_plus: BVFunction
    gamma: float
    kappa: float
    lambda_minus_functional: float
    lambda_plus_functional: float
    classification: Classification
    gamma_forms: tuple[float, float] = (0.0, 0.0)
    _core: Core | None = field(default=None, repr=False)

    def f_minus_at(self, x) -> np.ndarray:
        """``f_minus`` evaluated from the closed form (no interpolation)."""
        return self._core.f_minus(x)

    def f_plus_at(self, x) -> np.ndarray:
        return self._core.f_plus(x)

    @property
    def f_minus_lo(self) -> float:
        return float(self.f_minus.values[0])

    @property
    def f_plus_hi(self) -> float:
        return float(self.f_plus.values[-1])

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "kappa": self.kappa,
            "lambda_minus": self.lambda_minus_functional,
            "lambda_plus": self.lambda_plus_functional,
            "f_minus_lo": self.f_minus_lo,
            "f_plus_hi": self.f_plus_hi,
            "classification": self.classification.value,
        }


@dataclass(frozen=True, eq=False)
class UFunctions:
    u_mp: BVFunction
    u_pm: BVFunction


@dataclass(frozen=True, eq=False)
class WeightTable:
    """Weights of a linear functional ``F(X) = sum w_minus(buys) + sum w_plus(sells)``.

    ``w_minus``/``w_plus`` are tabulated for inspection and export; the
    exact callables are kept for generator evaluation.  ``breaks`` lists the
    points where the weights are not smooth.
    """

    z: float | None
    side: str
    w_minus: BVFunction
    w_plus: BVFunction
    target_constant: float
    w_minus_fn: Callable = field(repr=False, default=None)
    w_plus_fn: Callable = field(repr=False, default=None)
    breaks: tuple[float, ...] = ()
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_callables(cls, spec: ModelSpec, w_minus: Callable, w_plus: Callable, breaks=(),
                       z=None, side="general", target_constant=float("nan"), cells: int | None = None):
        """Wrap user weights, enforcing ``w_minus(lo) = 0`` and ``w_plus(hi) = 0``."""
        lo, hi = spec.interval_lo, spec.interval_hi

        def wm(x):
            x = np.asarray(x, dtype=float)
            return np.where(x <= lo, 0.0, np.asarray(w_minus(x), dtype=float) * np.ones_like(x))

        def wp(x):
            x = np.asarray(x, dtype=float)
            return np.where(x >= hi, 0.0, np.asarray(w_plus(x), dtype=float) * np.ones_like(x))

        grid = np.union1d(spec.grid(cells or default_grid()), np.asarray(breaks, dtype=float))
        grid = grid[(grid >= lo) & (grid <= hi)]
        return cls(
            z=z, side=side,
            w_minus=BVFunction(grid, wm(grid), "left"),
            w_plus=BVFunction(grid, wp(grid), "right"),
            target_constant=float(target_constant),
            w_minus_fn=wm, w_plus_fn=wp, breaks=tuple(float(b) for b in breaks),
        )

    def functional(self, buys, sells) -> float:
        """``F(X)`` for a book given by its buy and sell prices."""
        buys = np.asarray(buys, dtype=float)
        sells = np.asarray(sells, dtype=float)
        return float(np.sum(self.w_minus_fn(buys)) + np.sum(self.w_plus_fn(sells)))


# --------------------------------------------------------------------------
# Operations
# --------------------------------------------------------------------------


def gamma(spec: ModelSpec, cells: int | None = None) -> float:
    """Normalising constant, checked by its two equivalent integral forms."""
    c = core(spec, cells)
    a, b = c.gamma_forms
    if abs(a - b) > GAMMA_RTOL * max(abs(a), abs(b)):
        raise errors.GridTooCoarse(f"gamma forms disagree: {a} vs {b}")
    return c.gamma


def solve_luckock(spec: ModelSpec, cells: int | None = None) -> LuckockSolution:
    """Solve the equilibrium equations for the best-bid/best-ask laws."""
    c = core(spec, cells)
    g = gamma(spec, cells)
    x = c.table_grid
    fm = c.f_minus(x)
    fp = c.f_plus(x)
    resid = fm / c.lm(x) + fp / c.lp(x) - c.kappa * c.P(x)
    if np.max(np.abs(resid)) > IDENTITY_TOL:
        raise errors.GridTooCoarse(f"pointwise identity residual {np.max(np.abs(resid)):.3g}")
    lam_m, lam_p = c.lambda_functionals(c.lo, c.hi)
    lam_m, lam_p = float(lam_m), float(lam_p)
    for f_end, lam, name in ((fm[0], lam_m, "minus"), (fp[-1], lam_p, "plus")):
        if _sign(f_end) != 0 and _sign(f_end) != _sign(lam, 0.0):
            raise errors.IdentityViolation(f"sign of f_{name} at the boundary disagrees with Lambda_{name}")
    cls = classify_value(min(fm[0], fp[-1]))
    return LuckockSolution(
        f_minus=BVFunction(x, fm, "continuous"),
        f_plus=BVFunction(x, fp, "continuous"),
        gamma=g, kappa=c.kappa,
        lambda_minus_functional=lam_m, lambda_plus_functional=lam_p,
        classification=cls, gamma_forms=c.gamma_forms, _core=c,
    )


def classify(spec: ModelSpec, cells: int | None = None) -> Classification:
    return solve_luckock(spec, cells).classification


def volume_of_trade(spec: ModelSpec, sol: LuckockSolution) -> float:
    """Equilibrium rate of trades, computed from both sides of the book."""
    lo, hi = spec.interval_lo, spec.interval_hi
    v1 = float(spec.lam_plus(hi)) - sol.f_minus_lo * float(spec.lam_plus(lo))
    v2 = float(spec.lam_minus(lo)) - sol.f_plus_hi * float(spec.lam_minus(hi))
    if abs(v1 - v2) > IDENTITY_TOL:
        raise errors.IdentityViolation(f"volume of trade differs between sides: {v1} vs {v2}")
    return v1


def u_functions(spec: ModelSpec, cells: int | None = None) -> UFunctions:
    c = core(spec, cells)
    x = c.table_grid
    mp, pm = c.u_mp(x), c.u_pm(x)
    alt = max(np.max(np.abs(mp - c.u_mp_alt(x))), np.max(np.abs(pm - c.u_pm_alt(x))))
    if alt > IDENTITY_TOL:
        raise errors.GridTooCoarse(f"alternative u forms disagree by {alt:.3g}")
    resid = np.max(np.abs(mp + pm - c.P(x) / c.gamma - 1.0))
    if resid > IDENTITY_TOL:
        raise errors.GridTooCoarse(f"u sum identity residual {resid:.3g}")
    return UFunctions(BVFunction(x, mp, "continuous"), BVFunction(x, pm, "continuous"))


def _check_side(side: str) -> str:
    if side not in (MINUS, PLUS):
        raise ValueError(f"side must be '{MINUS}' or '{PLUS}', got {side!r}")
    return side


def special_weights(spec: ModelSpec, z: float, side: str, cells: int | None = None) -> WeightTable:
    """Weights whose functional has generator ``1{M- <= z} - f_minus(z)``
    (side ``minus``) or ``1{M+ >= z} - f_plus(z)`` (side ``plus``)."""
    _check_side(side)
    c = core(spec, cells)
    lo, hi = c.lo, c.hi
    if not lo <= z <= hi:
        raise errors.OutOfRange(f"z={z} outside [{lo}, {hi}]")
    g = c.gamma
    if side == MINUS:
        scale = float(c.lm(z)) * g
        upz = float(c.u_pm(z))

        def wm(x):
            ind = (np.asarray(x) <= z).astype(float)
            return scale * (upz - ind) * (c.u_mp(x) - ind)

        def wp(x):
            x = np.asarray(x, dtype=float)
            return scale * (c.u_pm(np.maximum(x, z)) - 1.0) * c.u_pm(np.minimum(x, z))

        target = float(c.f_minus(z))
    else:
        scale = float(c.lp(z)) * g
        umz = float(c.u_mp(z))

        def wm(x):
            x = np.asarray(x, dtype=float)
            return scale * (c.u_mp(np.minimum(x, z)) - 1.0) * c.u_mp(np.maximum(x, z))

        def wp(x):
            ind = (np.asarray(x) >= z).astype(float)
            return scale * (umz - ind) * (c.u_pm(x) - ind)

        target = float(c.f_plus(z))
    return WeightTable.from_callables(spec, wm, wp, breaks=(z,), z=float(z), side=side,
                                      target_constant=target, cells=c.cells)


def extremal_weights(spec: ModelSpec, cells: int | None = None) -> tuple[WeightTable, WeightTable]:
    """The weights at ``z = lo`` (side minus) and ``z = hi`` (side plus)."""
    return (special_weights(spec, spec.interval_lo, MINUS, cells),
            special_weights(spec, spec.interval_hi, PLUS, cells))


def extremal_weights_simplified(spec: ModelSpec, cells: int | None = None) -> dict[str, Callable]:
    """Direct formulas for the extremal weights (valid inside the interval)."""
    c = core(spec, cells)
    sm = float(c.lp(c.lo))  # sell market rate
    bm = float(c.lm(c.hi))  # buy market rate
    return {
        "minus_w_minus": lambda x: c.u_mp(x) / sm,
        "minus_w_plus": lambda x: -(1.0 - c.u_pm(x)) / sm,
        "plus_w_minus": lambda x: -(1.0 - c.u_mp(x)) / bm,
        "plus_w_plus": lambda x: c.u_pm(x) / bm,
    }


def _weight_integrals(c: Core, weights: WeightTable) -> tuple[RunningIntegral, RunningIntegral]:
    key = ("integrals", id(c))
    if key not in weights._cache:
        breaks = np.union1d(c.breaks, np.asarray(weights.breaks, dtype=float))
        breaks = breaks[(breaks >= c.lo) & (breaks <= c.hi)]
        wp_dlp = RunningIntegral(lambda t: weights.w_plus_fn(t) * c.spec.dlam_plus(t), breaks)
        wm_dlm = RunningIntegral(lambda t: weights.w_minus_fn(t) * c.spec.dlam_minus(t), breaks)
        weights._cache[key] = (wp_dlp, wm_dlm)
    return weights._cache[key]


def q_functions(spec: ModelSpec, weights: WeightTable, cells: int | None = None):
    """The two halves ``q_minus(best_bid)`` and ``q_plus(best_ask)`` of the generator."""
    c = core(spec, cells)
    wp_dlp, wm_dlm = _weight_integrals(c, weights)

    def q_minus(x):
        x = np.asarray(x, dtype=float)
        return (wp_dlp(c.hi) - wp_dlp(x)) - weights.w_minus_fn(x) * c.lp(x)

    def q_plus(x):
        x = np.asarray(x, dtype=float)
        return -(wm_dlm(x) - wm_dlm(c.lo)) - weights.w_plus_fn(x) * c.lm(x)

    return q_minus, q_plus


def generator_apply(spec: ModelSpec, weights: WeightTable, best_bid, best_ask, cells: int | None = None):
    """Generator of the linear functional with the given weights.

    The result depends on the book only through its best bid and best ask;
    pass ``interval_lo`` / ``interval_hi`` for an empty side.  Arrays are
    broadcast against each other.
    """
    lo, hi = spec.interval_lo, spec.interval_hi
    bid = np.asarray(best_bid, dtype=float)
    ask = np.asarray(best_ask, dtype=float)
    if np.any(bid < lo) or np.any(ask > hi) or np.any(bid > ask):
        raise errors.OutOfRange("need lo <= best_bid <= best_ask <= hi")
    q_minus, q_plus = q_functions(spec, weights, cells)
    out = q_minus(bid) + q_plus(ask)
    return float(out) if out.ndim == 0 else out


def generator_target(weights: WeightTable, best_bid, best_ask):
    """What the generator of a special-weight functional should equal."""
    bid = np.asarray(best_bid, dtype=float)
    ask = np.asarray(best_ask, dtype=float)
    if weights.side == MINUS:
        return (bid <= weights.z).astype(float) - weights.target_constant
    if weights.side == PLUS:
        return (ask >= weights.z).astype(float) - weights.target_constant
    raise ValueError("generator target is only defined for special weights")


def lyapunov_parts(spec: ModelSpec, buys, sells, cells: int | None = None) -> tuple[float, float]:
    """Values of the two extremal functionals on a book."""
    wl, wh = extremal_weights(spec, cells)
    return wl.functional(buys, sells), wh.functional(buys, sells)


def lyapunov(spec: ModelSpec, book, cells: int | None = None) -> float:
    """Norm of the positive parts of the two extremal functionals."""
    if not spec.is_continuous:
        from .discrete import atomic_lyapunov

        return atomic_lyapunov(spec, book)
    f1, f2 = lyapunov_parts(spec, book.buys, book.sells, cells)
    return float(np.hypot(max(f1, 0.0), max(f2, 0.0)))


@dataclass(frozen=True)
class LyapunovConstants:
    """Grid estimates of the constants in the drift bound for ``V``."""

    W: float
    K: float
    delta: float
    inf_buy_sum: float
    inf_sell_sum: float


def lyapunov_constants(spec: ModelSpec, cells: int | None = None) -> LyapunovConstants:
    simple = extremal_weights_simplified(spec, cells)
    c = core(spec, cells)
    x = c.table_grid[1:-1]
    a, b = simple["minus_w_minus"](x), simple["plus_w_minus"](x)
    p, q = simple["minus_w_plus"](x), simple["plus_w_plus"](x)
    W = float(max(np.max(np.hypot(a, b)), np.max(np.hypot(p, q))))
    inf_buy = float(np.min(a + b))
    inf_sell = float(np.min(p + q))
    return LyapunovConstants(W=W, K=W * spec.total_rate, delta=min(inf_buy, inf_sell),
                             inf_buy_sum=inf_buy, inf_sell_sum=inf_sell)


def lambda_functionals(spec: ModelSpec, j_lo, j_hi, cells: int | None = None):
    """``(Lambda_minus, Lambda_plus)`` of ``spec`` restricted to ``[j_lo, j_hi]``.

    Only interior continuity and positivity are needed, so this also works
    on models whose intensities vanish at the ends of the interval.
    """
    c = core(spec, cells, require=("a3", "a5"))
    return c.lambda_functionals(j_lo, j_hi)


def lambda_difference_residual(spec: ModelSpec, j_lo, j_hi, cells: int | None = None):
    """Residual of the closed form for ``Lambda_plus - Lambda_minus``."""
    lam_m, lam_p = lambda_functionals(spec, j_lo, j_hi, cells)
    lm, lp = spec.lam_minus, spec.lam_plus
    rhs = (1.0 / lp(j_hi) - 1.0 / lm(j_lo)) * (1.0 / lp(j_lo) + 1.0 / lm(j_hi))
    return (lam_p - lam_m) - rhs


def solve_inverse(spec: ModelSpec, g_minus: Callable, g_plus: Callable, jumps=(),
                  cells: int | None = None) -> tuple[WeightTable, float]:
    """Weights whose functional has generator ``g_minus(M-) + g_plus(M+) - c``.

    ``g_minus`` must be left-continuous and ``g_plus`` right-continuous,
    both of bounded variation; ``jumps`` lists their discontinuities.  The
    construction integrates by parts so that every integral is taken
    against the absolutely continuous measures ``d lam`` and ``d(1/lam)``.
    Returns the weights and the constant ``c``, the latter cross-checked
    against its expression through the equilibrium laws.
    """
    c = core(spec, cells)
    lo, hi = c.lo, c.hi
    lm, lp, dlm, dlp = spec.lam_minus, spec.lam_plus, spec.dlam_minus, spec.dlam_plus
    jumps = np.asarray(jumps, dtype=float)
    breaks = np.union1d(c.breaks, jumps[(jumps >= lo) & (jumps <= hi)])

    def gm(x):
        return np.asarray(g_minus(np.asarray(x, dtype=float)), dtype=float) * np.ones_like(np.asarray(x, dtype=float))

    def gp(x):
        return np.asarray(g_plus(np.asarray(x, dtype=float)), dtype=float) * np.ones_like(np.asarray(x, dtype=float))

    G1 = RunningIntegral(lambda t: gm(t) * dlm(t), breaks)
    G2 = RunningIntegral(lambda t: gp(t) * dlp(t), breaks)
    gm_hi, gp_lo = float(gm(hi)), float(gp(lo))
    lm_hi, lp_lo = float(lm(hi)), float(lp(lo))

    def h_minus(x):
        x = np.asarray(x, dtype=float)
        return lm_hi * gm_hi - lm(x) * gm(x) - (G1(hi) - G1(x))

    def h_plus(x):
        x = np.asarray(x, dtype=float)
        return -lp(x) * gp(x) + lp_lo * gp_lo + (G2(x) - G2(lo))

    A = RunningIntegral(lambda t: h_plus(t) * (-dlp(t)) / (lm(t) * lp(t) ** 2), breaks)
    B = RunningIntegral(lambda t: h_minus(t) * (-dlm(t)) / (lp(t) * lm(t) ** 2), breaks)
    P_lo, P_hi = float(c.P(lo)), float(c.P(hi))
    hm_lo, hp_hi = float(h_minus(lo)), float(h_plus(hi))
    kappa = (float(A.between(lo, hi)) - hm_lo * P_lo - float(B.between(lo, hi)) - hp_hi * P_hi) / c.gamma

    def w_minus(x):
        x = np.asarray(x, dtype=float)
        val = (kappa * (c.R1(x) - c.R1(lo)) + (A(x) - A(lo))
               + h_minus(x) * c.P(x) - hm_lo * P_lo - (B(x) - B(lo)))
        return np.where(x <= lo, 0.0, val)

    def w_plus(x):
        x = np.asarray(x, dtype=float)
        val = (kappa + h_minus(x) + h_plus(x)) * c.P(x) - w_minus(x)
        return np.where(x >= hi, 0.0, val)

    table = WeightTable.from_callables(spec, w_minus, w_plus, breaks=tuple(jumps), side="general",
                                       cells=c.cells)
    q_minus, q_plus = q_functions(spec, table, cells)
    c_gen = float(gm(lo) + gp(hi) - q_minus(lo) - q_plus(hi))
    # explicit form through the equilibrium laws f_minus, f_plus
    kap = c.kappa

    def dfm(t):
        v = 1.0 / lm_hi - kap * (c.R2(hi) - c.R2(t))
        return dlm(t) * (v - kap * c.P(t))

    def dfp(t):
        v = 1.0 / lp_lo + kap * (c.R1(t) - c.R1(lo))
        return dlp(t) * (v - kap * c.P(t))

    S1 = RunningIntegral(lambda t: gm(t) * dfm(t), breaks)
    S2 = RunningIntegral(lambda t: gp(t) * dfp(t), breaks)
    c_explicit = (float(c.f_minus(lo)) * float(gm(lo)) + float(S1.between(lo, hi))
                  + float(c.f_plus(hi)) * float(gp(hi)) - float(S2.between(lo, hi)))
    if abs(c_gen - c_explicit) > 1e-6 * max(1.0, abs(c_explicit)):
        raise errors.IdentityViolation(f"inverse-problem constant mismatch: {c_gen} vs {c_explicit}")
    table = WeightTable(z=None, side="general", w_minus=table.w_minus, w_plus=table.w_plus,
                        target_constant=c_gen, w_minus_fn=w_minus, w_plus_fn=w_plus,
                        breaks=table.breaks, _cache=table._cache)
    return table, c_gen


def lyapunov_search(spec: ModelSpec, states: int = 10_000, max_orders: int = 120, seed: int = 0):
    """Size threshold ``N`` and margin ``epsilon`` of the drift bound for an atomic model.

    The generator of the Lyapunov function is evaluated exactly on the
    model's tick representation; see ``discrete.lyapunov_search``.
    """
    from .discrete import AtomicAdapter
    from .discrete import lyapunov_search as tick_search

    if spec.is_continuous:
        raise errors.AssumptionViolation("the exact threshold search needs atomic intensities", ("atomic",))
    return tick_search(AtomicAdapter.build(spec).model, states, max_orders, seed)
