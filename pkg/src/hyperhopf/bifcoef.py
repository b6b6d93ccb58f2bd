"""Second-order responses, the cubic coefficient beta and the amplitude law.

All quantities are in unscaled time: the second-harmonic problem carries
the shift ``-2 i omega0`` and ``beta`` is evaluated with the original
coefficients.  Rescaling time so that the crossing sits at +-i divides both
alpha and beta by omega0; the ratio beta / alpha and hence the direction of
bifurcation are the same in either convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson, solve_ivp
from scipy.interpolate import make_interp_spline

from . import expr as ex
from . import spectral as sp
from .hopf import HopfReport
from .model import SystemSpec, deriv_tensors

DIRECTION_THRESHOLD = 1e-10


class ResonanceError(sp.SpectralError):
    """The forced boundary problem is singular (an eigenvalue sits at the shift)."""


@dataclass(frozen=True)
class BifAux:
    y: sp.GridFn
    z: sp.GridFn
    y_residual: float
    z_residual: float


def _quadratic_terms(spec: SystemSpec):
    """Nonzero second derivatives as (j, k, l, fn(x, lam)) over ordered (k, l)."""
    terms = []
    u = spec.unknowns
    for j in range(spec.n):
        for k in range(spec.n):
            for l in range(spec.n):
                d = spec.derivative(j, u[k], u[l])
                if isinstance(d, ex.Const) and d.value == 0.0:
                    continue
                terms.append((j, k, l, spec.tensor2_fn(j, min(k, l), max(k, l))))
    return terms


def _forcing(spec: SystemSpec, lam0: float, terms, conj_second: bool, weight: float):
    """x, v -> -weight * sum_{k,l} b_jkl(x) v_k (v_l or conj v_l)."""

    def F(x, v):
        out = np.zeros(spec.n, dtype=complex)
        second = np.conj(v) if conj_second else v
        for j, k, l, fn in terms:
            out[j] -= weight * fn(x, lam0) * v[k] * second[l]
        return out

    return F


def solve_forced_bvp(spec: SystemSpec, pair: sp.EigenPair, lam0: float, shift: complex,
                     conj_second: bool, weight: float, N: int | None = None,
                     rtol: float = sp.DEFAULT_RTOL) -> tuple[sp.GridFn, np.ndarray]:
    """Solve ``a y' + (B - shift) y = F`` under the reflection conditions.

    The eigenfunction entering ``F`` is integrated alongside from its value
    at x = 0, so the forcing is exact at every integrator stage.  The
    solution is a particular solution (zero data at x = 0) plus a
    combination of fundamental columns fixed by an n x n boundary solve.
    Returns the solution and the forcing sampled on the grid.
    """
    n = spec.n
    N = pair.v.N if N is None else N
    x = np.linspace(0.0, 1.0, N + 1)
    terms = _quadratic_terms(spec)
    if not terms:
        return sp.GridFn(x, np.zeros((n, N + 1), complex)), np.zeros((n, N + 1), complex)
    speed = [spec.speed_fn(j) for j in range(n)]
    jac = [[spec.jac_fn(j, k) for k in range(n)] for j in range(n)]
    F = _forcing(spec, lam0, terms, conj_second, weight)
    mu = pair.mu
    eye = np.eye(n)

    def rhs(xx, s):
        inv_a = np.array([1.0 / f(xx, lam0) for f in speed])
        B = np.array([[f(xx, lam0) for f in row] for row in jac], dtype=float)
        v, yp, Phi = s[:n], s[n:2 * n], s[2 * n:].reshape(n, n)
        dv = inv_a * (mu * v - B @ v)
        dyp = inv_a * (shift * yp - B @ yp + F(xx, v))
        dPhi = inv_a[:, None] * (shift * Phi - B @ Phi)
        return np.concatenate([dv, dyp, dPhi.ravel()])

    s0 = np.concatenate([pair.v.values[:, 0], np.zeros(n, complex), eye.astype(complex).ravel()])
    sol = solve_ivp(rhs, (0.0, 1.0), s0, method="DOP853", t_eval=x, rtol=rtol, atol=rtol * 1e-2)
    if sol.status != 0:
        raise sp.IntegrationError(f"forced problem: {sol.message}")
    v = sol.y[:n]
    yp = sol.y[n:2 * n]
    Phi = sol.y[2 * n:].T.reshape(-1, n, n)
    M0, M1 = sp.boundary_rows(spec)
    D = M0 + M1 @ Phi[-1]
    s = np.linalg.svd(D, compute_uv=False)
    if s[-1] < 1e-10 * s[0]:
        raise ResonanceError(f"boundary system singular at shift {shift}: the forced problem is resonant")
    c = np.linalg.solve(D, -M1 @ yp[:, -1])
    y = yp + np.einsum("xjk,k->jx", Phi, c)
    forcing = np.array([F(xi, v[:, i]) for i, xi in enumerate(x)]).T
    return sp.GridFn(x, y), forcing


def bvp_residual(spec: SystemSpec, lam0: float, shift: complex, y: sp.GridFn, forcing: np.ndarray) -> float:
    """Plug-back residual with d/dx from a degree-7 spline, relative to the data."""
    x = y.x
    dy = make_interp_spline(x, y.values, k=7, axis=1).derivative()(x)
    a = spec.speeds_at(x, lam0)
    B = spec.jacobian_at(x, lam0)
    res = a * dy + np.einsum("jkx,kx->jx", B, y.values) - shift * y.values - forcing
    scale = max(1.0, float(np.max(np.abs(forcing))), y.sup())
    return float(np.max(np.abs(res)) / scale)


def solve_y_bvp(spec, pair, lam0, omega0, N=None, rtol=sp.DEFAULT_RTOL):
    """Second-harmonic response, forcing -1/4 b_jkl v_k v_l."""
    return solve_forced_bvp(spec, pair, lam0, 2j * omega0, False, 0.25, N, rtol)


def solve_z_bvp(spec, pair, lam0, N=None, rtol=sp.DEFAULT_RTOL):
    """Mean response, forcing -1/2 b_jkl v_k conj(v_l); the result is real."""
    z, f = solve_forced_bvp(spec, pair, lam0, 0.0, True, 0.5, N, rtol)
    return z, f


def aux_solutions(spec: SystemSpec, pair: sp.EigenPair, lam0: float, omega0: float,
                  rtol: float = sp.DEFAULT_RTOL) -> BifAux:
    y, fy = solve_y_bvp(spec, pair, lam0, omega0, rtol=rtol)
    z, fz = solve_z_bvp(spec, pair, lam0, rtol=rtol)
    imag = float(np.max(np.abs(z.values.imag)))
    if imag > 1e-10 * max(1.0, z.sup()):
        raise sp.SpectralError(f"mean response has imaginary part {imag:.3g}")
    return BifAux(y=y, z=z,
                  y_residual=bvp_residual(spec, lam0, 2j * omega0, y, fy),
                  z_residual=bvp_residual(spec, lam0, 0.0, z, fz))


def beta_coefficient(spec: SystemSpec, pair: sp.EigenPair, aux: BifAux, lam0: float) -> float:
    x = pair.v.x
    v, w = pair.v.values, pair.w.values
    y, z = aux.y.values, aux.z.values
    T = deriv_tensors(spec, x, lam0)
    shape = (spec.n,) * 3 + x.shape
    b3 = np.broadcast_to(T.bjkl, shape)
    b4 = np.broadcast_to(T.bjklr, (spec.n,) * 4 + x.shape)
    cubic = np.einsum("jklrx,kx,lx,rx->jx", b4, v, v, np.conj(v)) / 8
    quad = np.einsum("jklx,kx,lx->jx", b3, y, np.conj(v)) + np.einsum("jklx,kx,lx->jx", b3, z, v)
    integrand = ((cubic + quad) * np.conj(w)).sum(axis=0)
    return float(-simpson(integrand, x=x).real)


# ------------------------------------------------------------------ result


@dataclass(frozen=True)
class BifurcationResult:
    lambda0: float
    omega0: float
    alpha: float
    beta: float
    grid_n: int
    v0: sp.GridFn

    @property
    def beta_rescaled(self) -> float:
        """beta in time units where the crossing frequency is 1."""
        return self.beta / self.omega0

    @property
    def curvature(self) -> float:
        return self.beta / self.alpha

    @property
    def direction(self) -> str:
        if self.beta > DIRECTION_THRESHOLD:
            return "supercritical"
        if self.beta < -DIRECTION_THRESHOLD:
            return "subcritical"
        return "degenerate"

    @property
    def side(self) -> int:
        """+1 if orbits exist for lambda > lambda0, -1 for lambda < lambda0, 0 if degenerate."""
        if self.direction == "degenerate":
            return 0
        return 1 if self.alpha * self.beta > 0 else -1

    @property
    def v0_max(self) -> float:
        return self.v0.sup()

    def epsilon(self, lam: float) -> float:
        """Orbit amplitude parameter from lambda = lambda0 + (beta/alpha) eps^2 / 2; nan off-side."""
        q = 2 * self.alpha * (lam - self.lambda0) / self.beta if self.side else -1.0
        return math.sqrt(q) if q > 0 else math.nan

    def predicted_amplitude(self, lam: float) -> float:
        return self.epsilon(lam) * self.v0_max

    def first_order_orbit(self, t):
        """Re v0(x) cos(omega0 t) - Im v0(x) sin(omega0 t), shape (n, N+1, len(t))."""
        t = np.atleast_1d(t)
        ph = self.omega0 * t
        v = self.v0.values
        return v.real[..., None] * np.cos(ph) - v.imag[..., None] * np.sin(ph)

    def to_dict(self) -> dict:
        return {
            "lambda0": self.lambda0, "omega0": self.omega0,
            "alpha": self.alpha, "beta": self.beta,
            "beta_rescaled": self.beta_rescaled, "alpha_rescaled": self.alpha / self.omega0,
            "curvature": self.curvature, "direction": self.direction,
            "bifurcating_side": {1: "lambda>lambda0", -1: "lambda<lambda0", 0: "none"}[self.side],
            "v0_max": self.v0_max, "grid_n": self.grid_n,
            "conventions": "alpha and beta in unscaled time; *_rescaled divide by omega0",
        }


def bifurcation_result(spec: SystemSpec, report: HopfReport, max_n: int = 4096,
                       rtol: float = sp.DEFAULT_RTOL) -> BifurcationResult:
    """Assemble alpha, beta and the amplitude law, doubling the grid until
    beta is stable to 1e-8 relative."""
    lam0, om0 = report.lambda0, report.omega0
    pair = report.pair
    beta = beta_coefficient(spec, pair, aux_solutions(spec, pair, lam0, om0, rtol), lam0)
    N = pair.v.N
    while 2 * N <= max_n:
        finer = sp.eigen_pair(spec, pair.mu, lam0, 2 * N, rtol)
        b2 = beta_coefficient(spec, finer, aux_solutions(spec, finer, lam0, om0, rtol), lam0)
        converged = abs(b2 - beta) <= 1e-8 * max(abs(b2), 1e-300) or b2 == beta
        beta, N, pair = b2, 2 * N, finer
        if converged:
            break
    return BifurcationResult(lam0, om0, report.alpha, beta, N, pair.v)
