"""Vectorised bisection for monotone predicates.

Every root-finding problem in the package reduces to locating the switch
point of a monotone boolean predicate, so a single helper covers them all.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


def bisect_switch(
    predicate: Callable[[np.ndarray], np.ndarray],
    lo,
    hi,
    tol: float = 0.0,
    max_iter: int = 200,
) -> tuple[np.ndarray, np.ndarray]:
    """Shrink brackets ``[lo, hi]`` around the switch of a monotone predicate.

    The predicate must be true at ``lo`` and false at ``hi`` (the caller is
    responsible for checking the bracket).  Iteration stops when the bracket
    width drops below ``tol`` or when the midpoint can no longer be
    distinguished from an endpoint in floating point.  Returns the final
    ``(lo, hi)`` arrays; ``lo`` always satisfies the predicate.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    lo, hi = np.broadcast_arrays(lo, hi)
    lo = lo.copy()
    hi = hi.copy()
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        active = (hi - lo > tol) & (mid > lo) & (mid < hi)
        if not np.any(active):
            break
        ok = np.asarray(predicate(mid), dtype=bool)
        take_lo = active & ok
        take_hi = active & ~ok
        lo = np.where(take_lo, mid, lo)
        hi = np.where(take_hi, mid, hi)
    return lo, hi
