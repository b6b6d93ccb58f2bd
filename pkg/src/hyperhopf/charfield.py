"""Characteristics, exponential weights and dissipativity constants.

For each component ``j`` and parameter ``lam`` two antiderivatives are
tabulated on a uniform grid,

    P_j(x) = int_0^x d eta / a_j(eta, lam)
    Q_j(x) = int_0^x b_jj(eta, lam) / a_j(eta, lam) d eta,

where ``b_jj = d b_j / d u_j`` at ``u = 0``.  Cell integrals come from
adaptive Gauss-Kronrod quadrature; between nodes a cubic Hermite interpolant
that uses the exact integrand as slope keeps the error near round-off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad_vec
from scipy.interpolate import CubicHermiteSpline

from .model import SystemSpec


@dataclass(frozen=True)
class _Tables:
    lam: float
    nodes: np.ndarray
    inv_a: np.ndarray  # (n, nodes)
    P: list  # CubicHermiteSpline per component
    Q: list
    P_nodes: np.ndarray
    Q_nodes: np.ndarray


class CharContext:
    """Per-system cache of characteristic data; one table set per lambda."""

    def __init__(self, spec: SystemSpec, nodes: int = 1024, tol: float = 1e-12):
        self.spec = spec
        self.nodes = nodes
        self.tol = tol
        self._tables: dict[float, _Tables] = {}

    def tables(self, lam: float) -> _Tables:
        lam = float(lam)
        if lam not in self._tables:
            self._tables[lam] = self._build(lam)
        return self._tables[lam]

    def _integrands(self, x, lam):
        spec = self.spec
        a = spec.speeds_at(x, lam)
        diag = np.array([spec.jac_fn(j, j)(np.asarray(x, float), lam) for j in range(spec.n)])
        return np.concatenate([1.0 / a, diag / a])

    def _build(self, lam: float) -> _Tables:
        n = self.spec.n
        xs = np.linspace(0.0, 1.0, self.nodes + 1)
        left, h = xs[:-1], xs[1] - xs[0]

        def cells(s):
            return h * self._integrands(left + s * h, lam).ravel()

        vals, _ = quad_vec(cells, 0.0, 1.0, epsabs=self.tol * 1e-2, epsrel=self.tol, norm="max")
        vals = vals.reshape(2 * n, self.nodes)
        cum = np.concatenate([np.zeros((2 * n, 1)), np.cumsum(vals, axis=1)], axis=1)
        slopes = self._integrands(xs, lam)
        P = [CubicHermiteSpline(xs, cum[j], slopes[j]) for j in range(n)]
        Q = [CubicHermiteSpline(xs, cum[n + j], slopes[n + j]) for j in range(n)]
        return _Tables(lam, xs, slopes[:n], P, Q, cum[:n], cum[n:])

    def P(self, j: int, x, lam: float):
        return self.tables(lam).P[j](x)

    def Q(self, j: int, x, lam: float):
        return self.tables(lam).Q[j](x)

    def transit_time(self, j: int, lam: float) -> float:
        """int_0^1 d eta / a_j(eta, lam)."""
        return float(self.tables(lam).P_nodes[j, -1])


def char_time(ctx: CharContext, j: int, xi, x, t, lam: float, omega: float = 1.0):
    """Time at which the j-th characteristic through (x, t) passes xi."""
    return omega * (ctx.P(j, xi, lam) - ctx.P(j, x, lam)) + t


def char_time_inverse(ctx: CharContext, j: int, xi, x, tau, lam: float, omega: float = 1.0):
    """The t with char_time(ctx, j, xi, x, t, lam, omega) == tau."""
    return tau - omega * (ctx.P(j, xi, lam) - ctx.P(j, x, lam))


def char_position(ctx: CharContext, j: int, x, delta, lam: float):
    """Position ``xi`` with int_x^xi d eta / a_j = delta.

    Returns ``(xi, inside)``; where the characteristic leaves [0, 1] before
    accumulating ``delta``, ``inside`` is False and ``xi`` is clipped.
    """
    tab = ctx.tables(lam)
    Pn = tab.P_nodes[j]
    target = np.asarray(ctx.P(j, x, lam) + delta, dtype=float)
    lo, hi = min(Pn[0], Pn[-1]), max(Pn[0], Pn[-1])
    inside = (target >= lo - 1e-15) & (target <= hi + 1e-15)
    order = np.argsort(Pn)
    xi = np.interp(np.clip(target, lo, hi), Pn[order], tab.nodes[order])
    speed = ctx.spec.speed_fn(j)
    for _ in range(4):
        xi = np.clip(xi - (tab.P[j](xi) - np.clip(target, lo, hi)) * speed(xi, lam), 0.0, 1.0)
    return xi, inside


def decay_factor(ctx: CharContext, j: int, xi, x, lam: float):
    """exp int_x^xi b_jj / a_j d eta (the integrating factor along a characteristic)."""
    return np.exp(ctx.Q(j, xi, lam) - ctx.Q(j, x, lam))


def remainder_f(ctx: CharContext, x, lam: float, u) -> np.ndarray:
    """f_j = b_jj u_j - b_j(x, lam, u): the nonlinearity minus its diagonal linear part."""
    spec = ctx.spec
    u = [np.asarray(uk, dtype=float) for uk in u]
    out = []
    for j in range(spec.n):
        out.append(spec.jac_fn(j, j)(np.asarray(x, float), lam) * u[j] - spec.rhs_fn(j)(x, lam, *u))
    return np.array(out)


@dataclass(frozen=True)
class Dissipativity:
    R0: float
    R1: float
    lam: float

    @property
    def product(self) -> float:
        return self.R0 * self.R1

    @property
    def ok(self) -> bool:
        return self.product < 1.0


def dissipativity(ctx: CharContext, lam: float = 0.0) -> Dissipativity:
    """Weighted reflection bounds; the linearised periodic problem is
    Fredholm when R0 * R1 < 1."""
    spec = ctx.spec
    tab = ctx.tables(lam)
    r = np.abs(spec.reflection)
    m, n = spec.m, spec.n
    R0 = 0.0
    for j in range(m):
        s = r[j, m:].sum()
        if s:
            R0 = max(R0, float(np.max(s * np.exp(-tab.Q_nodes[j]))))
    R1 = 0.0
    for j in range(m, n):
        s = r[j, :m].sum()
        if s:
            Q = tab.Q_nodes[j]
            R1 = max(R1, float(np.max(s * np.exp(Q[-1] - Q))))
    return Dissipativity(R0, R1, float(lam))
