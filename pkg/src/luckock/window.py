"""Competitive window, Luckock's volume of trade and the recurrence region.

``Phi(V) = -int_{V_W}^{V} G(W) d(1/W)`` with
``G(W) = 1/lam_plus(inv_demand(W)) + 1/lam_minus(inv_supply(W))``.  With the
substitution ``y = 1/W`` this is an ordinary integral of ``G(1/y)`` over
``[1/V, 1/V_W]``, which is evaluated once per model by composite
Gauss-Legendre quadrature on a grid graded towards both ends (``G`` may
blow up where an intensity vanishes).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import errors
from ._roots import bisect_switch
from .analytic import ZERO_BAND, lambda_functionals, solve_luckock
from .model import ModelSpec, inverse_demand, inverse_supply, restrict, validate
from .stieltjes import RunningIntegral, graded_breaks

PHI_CELLS = 1024
SATURATION_RTOL = 1e-9
DEFAULT_RESOLUTION = 256
MIN_RESOLUTION = 16
MASTER_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class WindowResult:
    v_w: float
    v_max: float
    v_l: float
    j_lo: float
    j_hi: float
    phi_table: np.ndarray
    saturated: bool

    def to_dict(self) -> dict:
        return {
            "v_w": self.v_w,
            "v_max": self.v_max,
            "v_l": self.v_l,
            "j_lo": self.j_lo,
            "j_hi": self.j_hi,
            "saturated": self.saturated,
            "phi_table": [[float(v), float(p)] for v, p in self.phi_table],
        }


@dataclass(frozen=True, eq=False)
class RegionGrid:
    """Sampled boundary curves of the recurrence region and its membership matrix.

    ``membership[i, j]`` refers to ``J_- = samples[i]`` and ``J_+ = samples[j]``.
    """

    resolution: int
    samples: np.ndarray
    phi_minus_curve: np.ndarray
    phi_plus_curve: np.ndarray
    membership: np.ndarray
    intersection: tuple[float, float] | None = None

    @property
    def cell(self) -> float:
        return float(self.samples[1] - self.samples[0])

    def rows(self):
        """``(J_lo, J_hi, phi_minus(J_hi), phi_plus(J_lo), in_R)`` for every sampled pair."""
        pm = self.phi_minus_curve[:, 1]
        pp = self.phi_plus_curve[:, 1]
        for i, a in enumerate(self.samples):
            for j, b in enumerate(self.samples):
                yield float(a), float(b), float(pm[j]), float(pp[i]), bool(self.membership[i, j])


class _Phi:
    """Running integral of ``G(1/y)`` for one model."""

    def __init__(self, spec: ModelSpec, cells: int = PHI_CELLS):
        rep = validate(spec)
        rep.require("a3", "a5", "a7")
        self.spec = spec
        self.v_w = rep.walras_volume
        self.v_max = rep.v_max
        y_lo, y_hi = 1.0 / self.v_max, 1.0 / self.v_w
        knots = np.concatenate(([spec.interval_lo, spec.interval_hi], spec.knots()))
        levels = np.concatenate((spec.lam_minus(knots), spec.lam_plus(knots)))
        with np.errstate(divide="ignore"):
            ys = 1.0 / levels[levels > 0]
        ys = ys[(ys > y_lo) & (ys < y_hi)]
        breaks = graded_breaks(y_lo, y_hi, cells, ys, levels=80)
        self.integral = RunningIntegral(self.g_of_y, breaks, anchor=y_hi)
        self.y_hi = y_hi

    def g_of_y(self, y):
        w = 1.0 / np.asarray(y, dtype=float)
        spec = self.spec
        with np.errstate(divide="ignore"):
            return 1.0 / spec.lam_plus(inverse_demand(spec, w)) + 1.0 / spec.lam_minus(inverse_supply(spec, w))

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        slack = 1e-12 * self.v_max
        if np.any(v < self.v_w - slack) or np.any(v > self.v_max + slack):
            raise errors.OutOfRange(f"V must lie in [{self.v_w}, {self.v_max}]")
        v = np.clip(v, self.v_w, self.v_max)
        return -self.integral(1.0 / v)


@lru_cache(maxsize=32)
def _phi(spec: ModelSpec) -> _Phi:
    return _Phi(spec)


def phi(spec: ModelSpec, v):
    """``Phi(v)`` for ``V_W <= v <= V_max``; nondecreasing, ``Phi(V_W) = 0``."""
    out = _phi(spec)(v)
    return float(out) if np.ndim(out) == 0 else out


def phi_table(spec: ModelSpec, points: int = 257) -> np.ndarray:
    p = _phi(spec)
    vs = np.linspace(p.v_w, p.v_max, points)
    return np.column_stack((vs, p(vs)))


def v_luckock(spec: ModelSpec, table_points: int = 257) -> WindowResult:
    """Luckock's volume of trade and the competitive window."""
    p = _phi(spec)
    target = p.v_w ** -2
    phi_max = float(p(p.v_max))
    saturated = phi_max <= target * (1.0 + SATURATION_RTOL)
    if saturated:
        v_l = p.v_max
    else:
        lo, hi = bisect_switch(lambda v: p(v) <= target, p.v_w, p.v_max)
        v_l = float(lo)
    j_lo = float(inverse_demand(spec, v_l))
    j_hi = float(inverse_supply(spec, v_l))
    return WindowResult(v_w=p.v_w, v_max=p.v_max, v_l=v_l, j_lo=j_lo, j_hi=j_hi,
                        phi_table=phi_table(spec, table_points), saturated=bool(saturated))


def symmetric_window(spec: ModelSpec, v) -> tuple[np.ndarray, np.ndarray]:
    """``(inv_demand(v), inv_supply(v))``."""
    return inverse_demand(spec, v), inverse_supply(spec, v)


def master_residual(spec: ModelSpec, v, cells: int | None = None):
    """``V_W^-2 - Phi(V) - Lambda_plus(J)`` and the same with ``Lambda_minus``,
    for the symmetric window ``J`` of each ``V``."""
    p = _phi(spec)
    v = np.asarray(v, dtype=float)
    j_lo, j_hi = symmetric_window(spec, v)
    lam_m, lam_p = lambda_functionals(spec, j_lo, j_hi, cells)
    base = p.v_w ** -2 - p(v)
    return base - lam_p, base - lam_m


def symmetric_classify(spec: ModelSpec, v: float, cells: int | None = None) -> int:
    """Sign of ``f_-(J_-)`` (equal to that of ``f_+(J_+)``) on the symmetric window of ``v``.

    Computed from ``V_W^-2 - Phi(v)`` and cross-checked against a direct
    solution on the restricted model.
    """
    p = _phi(spec)
    if not p.v_w < v <= p.v_max * (1 + 1e-15):
        raise errors.OutOfRange(f"V must lie in ({p.v_w}, {p.v_max}]")
    j_lo, j_hi = (float(a) for a in symmetric_window(spec, v))
    if not spec.interval_lo < j_lo < j_hi < spec.interval_hi:
        raise errors.NotInterior(f"window ({j_lo}, {j_hi}) is not strictly inside the interval")
    gap = p.v_w ** -2 - float(p(v))
    sign = 0 if abs(gap) <= ZERO_BAND else (1 if gap > 0 else -1)
    sol = solve_luckock(restrict(spec, j_lo, j_hi), cells)
    for f_end in (sol.f_minus_lo, sol.f_plus_hi):
        s = 0 if abs(f_end) <= ZERO_BAND else (1 if f_end > 0 else -1)
        if s != sign and s != 0 and sign != 0:
            raise errors.IdentityViolation(f"window sign {sign} disagrees with the restricted solution ({f_end})")
    return sign


# --------------------------------------------------------------------------
# Region of positive recurrence
# --------------------------------------------------------------------------


def phi_minus(spec: ModelSpec, j_hi, cells: int | None = None) -> np.ndarray:
    """``sup{J_- : Lambda_minus(J_-, J_+) <= 0}`` (``lo`` when empty)."""
    j_hi = np.asarray(j_hi, dtype=float)
    lo = np.full_like(j_hi, spec.interval_lo)

    def pred(a):
        return lambda_functionals(spec, a, j_hi, cells)[0] <= 0

    blo, _ = bisect_switch(pred, lo, j_hi)
    return blo


def phi_plus(spec: ModelSpec, j_lo, cells: int | None = None) -> np.ndarray:
    """``inf{J_+ : Lambda_plus(J_-, J_+) <= 0}`` (``hi`` when empty)."""
    j_lo = np.asarray(j_lo, dtype=float)
    hi = np.full_like(j_lo, spec.interval_hi)

    def pred(b):
        return lambda_functionals(spec, j_lo, b, cells)[1] > 0

    _, bhi = bisect_switch(pred, j_lo, hi)
    return bhi


def region_intersection(spec: ModelSpec, samples: np.ndarray, cells: int | None = None):
    """Crossing of the curves ``J_- = phi_minus(J_+)`` and ``J_+ = phi_plus(J_-)``.

    Located from the sign change of ``phi_minus(phi_plus(J_-)) - J_-`` over
    the samples and refined by bisection.  Returns ``None`` without a sign change.
    """
    def h(a):
        return phi_minus(spec, phi_plus(spec, a, cells), cells) - a

    vals = h(samples)
    change = np.nonzero((vals[:-1] > 0) & (vals[1:] <= 0))[0]
    if change.size == 0:
        return None
    k = int(change[0])
    lo, hi = bisect_switch(lambda a: h(a) > 0, samples[k], samples[k + 1], tol=1e-13)
    a = float(0.5 * (lo + hi))
    return a, float(phi_plus(spec, a, cells))


def phi_boundaries(spec: ModelSpec, resolution: int = DEFAULT_RESOLUTION, cells: int | None = None) -> RegionGrid:
    if resolution < MIN_RESOLUTION:
        raise ValueError(f"resolution must be at least {MIN_RESOLUTION}")
    validate(spec).require("a3", "a5")
    lo, hi = spec.interval_lo, spec.interval_hi
    samples = lo + (np.arange(resolution) + 0.5) * (hi - lo) / resolution
    pm = phi_minus(spec, samples, cells)
    pp = phi_plus(spec, samples, cells)
    a = samples[:, None]
    b = samples[None, :]
    membership = (pm[None, :] < a) & (b < pp[:, None]) & (a < b)
    inter = region_intersection(spec, samples, cells)
    return RegionGrid(
        resolution=resolution,
        samples=samples,
        phi_minus_curve=np.column_stack((samples, pm)),
        phi_plus_curve=np.column_stack((samples, pp)),
        membership=membership,
        intersection=inter,
    )
