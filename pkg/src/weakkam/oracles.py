"""Closed-quadrature reference for the one-particle, one-dimensional effective
Hamiltonian of H(x, p) = p^2/2 + V(x).

For nonpositive V the level value lam >= max V carries the rotation number

    g(lam) = integral_0^1 sqrt(2 (lam - V(x))) dx,

and the effective Hamiltonian at drift c is max V while |c| <= c* := g(max V)
(the pinned regime), otherwise the unique lam > max V with g(lam) = |c|.
This module computes both by adaptive quadrature and bisection, independently
of any grid or trajectory solver.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from .errors import UnsupportedModelError
from .models import TrigPotential

__all__ = ["critical_drift", "oracle_hbar_1d"]


def _validate(V: TrigPotential):
    if V.dim != 1:
        raise UnsupportedModelError(f"oracle supports d=1 only, got d={V.dim}")
    if V.max_on_grid(8192) > 1e-10:
        raise UnsupportedModelError("oracle requires V <= 0")


def _max_V(V: TrigPotential):
    """Grid max polished by a local 1-D maximization; returns (value, argmax)."""
    n = 8192
    xs = np.arange(n) / n
    vals = V(xs[:, None])
    i = int(np.argmax(vals))
    lo, hi = xs[i] - 2.0 / n, xs[i] + 2.0 / n
    res = minimize_scalar(lambda t: -float(V(np.array([t]))), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-14})
    x_star = float(res.x)
    return max(float(vals[i]), float(-res.fun)), x_star


def _rotation_integral(V: TrigPotential, lam: float, x_max: float) -> float:
    def integrand(x):
        return np.sqrt(max(2.0 * (lam - float(V(np.array([x])))), 0.0))

    pts = [x_max] if 1e-9 < x_max < 1 - 1e-9 else None
    val, _ = quad(integrand, 0.0, 1.0, points=pts, limit=200, epsabs=1e-12, epsrel=1e-12)
    return float(val)


def critical_drift(V: TrigPotential) -> float:
    """c* = integral of sqrt(2 (max V - V)); drifts inside [-c*, c*] pin hbar at max V."""
    _validate(V)
    vmax, x_max = _max_V(V)
    return _rotation_integral(V, vmax, x_max)


def oracle_hbar_1d(V: TrigPotential, c: float) -> float:
    """Effective Hamiltonian of p^2/2 + V at drift c, by quadrature and bisection."""
    _validate(V)
    vmax, x_max = _max_V(V)
    target = abs(float(c))
    c_star = _rotation_integral(V, vmax, x_max)
    if target <= c_star:
        return vmax

    lo, g_lo = vmax, c_star
    hi = vmax + 0.5 * target**2 + 1.0
    while _rotation_integral(V, hi, x_max) < target:
        hi = vmax + 2.0 * (hi - vmax)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g_mid = _rotation_integral(V, mid, x_max)
        if abs(g_mid - target) <= 1e-10 and (hi - lo) <= 1e-10 * max(1.0, abs(mid)):
            return mid
        if g_mid < target:
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
