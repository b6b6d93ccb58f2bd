"""Independent reference values for the two-component example.

Nothing here imports the package: the eigenvalue family comes from the
scalar equation satisfied by ``z = 2 mu - lambda``, namely
``exp(-z) = z + 1``.  Writing ``z = -a + i b`` gives ``b^2 = e^{2a} - (1-a)^2``
and the phase condition ``sin b = -sqrt(1 - e^{-2a} (1-a)^2)``.  That
condition alone also admits roots with the wrong cosine, which are
filtered by ``cos b = (1 - a) e^{-a}``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad


def _b(a: float) -> float:
    return math.sqrt(math.exp(2 * a) - (1 - a) ** 2)


def phase_residual(a: float) -> float:
    return math.sin(_b(a)) + math.sqrt(max(0.0, 1 - math.exp(-2 * a) * (1 - a) ** 2))


def _bisect(f, lo: float, hi: float, steps: int = 200) -> float:
    flo = f(lo)
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def genuine(a: float) -> bool:
    return abs(math.cos(_b(a)) - (1 - a) * math.exp(-a)) < 1e-6


def chareq_roots(upper: float = 4.0, scan: float = 1e-3) -> list[float]:
    """Genuine roots a_0 < a_1 < ... in (0, upper), each from 200 bisection steps."""
    grid = np.arange(scan, upper, scan)
    vals = [phase_residual(a) for a in grid]
    roots = []
    for lo, hi, flo, fhi in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if flo == 0 or (flo > 0) != (fhi > 0):
            a = _bisect(phase_residual, float(lo), float(hi))
            if genuine(a):
                roots.append(a)
    return roots


def _winding(a: float) -> float:
    """(b(a) - arg(c + i s)) / 2 pi, with c = (1-a) e^{-a} and s = -sqrt(1 - c^2).

    Increasing in a; genuine roots are exactly where it takes integer values.
    """
    c = (1 - a) * math.exp(-a)
    return (_b(a) - math.atan2(-math.sqrt(max(0.0, 1 - c * c)), c)) / (2 * math.pi)


def all_roots(upper: float) -> list[float]:
    """Every genuine root in (0, upper), none skipped however closely spaced."""
    lo, hi = 1e-9, upper
    out = []
    for k in range(math.ceil(_winding(lo)), math.floor(_winding(hi)) + 1):
        out.append(_bisect(lambda a: _winding(a) - k, lo, hi))
    return [a for a in out if a > 1e-6]


def first_root() -> float:
    """a_0: the first sign change of the phase residual on (0, 3), bisected 200 times."""
    return chareq_roots(3.0)[0]


def spurious_roots(upper: float = 4.0) -> list[float]:
    grid = np.arange(1e-3, upper, 1e-3)
    vals = [phase_residual(a) for a in grid]
    out = []
    for lo, hi, flo, fhi in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if (flo > 0) != (fhi > 0):
            a = _bisect(phase_residual, float(lo), float(hi))
            if not genuine(a):
                out.append(a)
    return out


def crossing_frequency(a0: float) -> float:
    return 0.5 * _b(a0)


def eigenvalue(a: float, lam: float, sign: int = 1) -> complex:
    return 0.5 * complex(lam - a, sign * _b(a))


def v_closed(x, mu: complex, lam: float, c: complex = 1.0):
    v1 = c / (lam - 2 * mu) * (np.exp(mu * x) - np.exp((lam - mu) * x))
    v2 = c * np.exp(mu * x)
    return v1, v2


def normalization_product(a0: float, omega0: float) -> complex:
    """c * conj(d) making the pairing equal to 2."""
    z = a0 - 2j * omega0
    return z ** 2 / (np.exp(z) - np.exp(-z))


def raw_pairing(a0: float, omega0: float, c: complex, d: complex) -> complex:
    z = a0 - 2j * omega0
    return 2 * c * np.conj(d) * (np.exp(z) - np.exp(-z)) / z ** 2


def beta_closed_form(gamma: float, a0: float, omega0: float) -> float:
    """-(3 gamma / 4) Re int |v1|^2 v1 conj(w1) with v2(0) = 1 and pairing 2."""
    mu = 1j * omega0
    d = np.conj(normalization_product(a0, omega0))

    def integrand(x):
        v1, _ = v_closed(x, mu, a0)
        w1 = d * np.exp((-1j * omega0 - a0) * x)
        return (abs(v1) ** 2 * v1 * np.conj(w1)).real

    return -0.75 * gamma * quad(integrand, 0.0, 1.0, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
