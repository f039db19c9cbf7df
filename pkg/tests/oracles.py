"""Independent reference computations used to derive frozen test values.

Nothing here shares code with the package's solvers: the equilibrium laws
are obtained by shooting on the ODE form of the equations with an adaptive
Runge-Kutta integrator, and the window integral by adaptive quadrature.
"""

import math

import numpy as np
from scipy.integrate import quad, solve_ivp


def luckock_ode(spec, xs):
    """``(f_minus, f_plus)`` at ``xs`` from the ODEs
    ``lam_plus f_minus' = -f_plus lam_minus'`` and ``lam_minus f_plus' = -f_minus lam_plus'``
    with ``f_plus(lo) = 1`` and ``f_minus(hi) = 1``."""
    lo, hi = spec.interval_lo, spec.interval_hi

    def rhs(x, y):
        fm, fp = y
        return [-fp * float(spec.dlam_minus(x)) / float(spec.lam_plus(x)),
                -fm * float(spec.dlam_plus(x)) / float(spec.lam_minus(x))]

    knots = sorted({lo, hi, *[k for k in spec.knots() if lo < k < hi]})
    xs = [float(x) for x in xs]

    def shoot(a):
        y = np.array([a, 1.0])
        out = {}
        for u, v in zip(knots[:-1], knots[1:]):
            s = solve_ivp(rhs, (u, v), y, rtol=1e-12, atol=1e-14, dense_output=True, method="DOP853")
            for x in xs:
                if u <= x <= v:
                    out[x] = s.sol(x)
            y = s.y[:, -1]
        return y, out

    y0, _ = shoot(0.0)
    y1, _ = shoot(1.0)
    a = (1.0 - y0[0]) / (y1[0] - y0[0])  # the system is linear in the unknown f_minus(lo)
    _, out = shoot(a)
    return np.array([out[x] for x in xs])


def uniform_gamma(lo, hi):
    """``1/(lam_minus(hi) lam_plus(hi)) - int (1/lam_minus) d(1/lam_plus)`` for the uniform model."""
    anti = lambda x: -1.0 / x + math.log(x / (1.0 - x))  # noqa: E731
    return 1.0 / ((1.0 - hi) * hi) + anti(hi) - anti(lo)


def uniform_phi(v):
    """Window integral for the uniform model on [0, 1] by adaptive quadrature."""
    g = lambda w: 2.0 / (1.0 - w)  # noqa: E731  G(W) = 1/lam_plus(1-W) + 1/lam_minus(W)
    val, _ = quad(lambda w: g(w) / w ** 2, 0.5, v, epsabs=1e-14, epsrel=1e-13)
    return val
