"""Boundary eigenvalue problem and its adjoint.

Direct problem (``v`` on [0, 1])::

    a_j v_j' + sum_k b_jk v_k = mu v_j
    v_j(0) = sum_{k>m} r_jk v_k(0)   (j <= m)
    v_j(1) = sum_{k<=m} r_jk v_k(1)  (j > m)

Adjoint problem, written for ``p_j = a_j w_j``::

    -p_j' + sum_k b_kj p_k / a_k = nu p_j / a_j
    p_j(0) = -sum_{k<=m} r_kj p_k(0) (j > m)
    p_j(1) = -sum_{k>m} r_kj p_k(1)  (j <= m)

Eigenvalues are zeros of a shooting determinant that is holomorphic in
``mu``.  Its mu-derivative comes from the variational equation, so both the
argument-principle integral and Newton's method use exact derivatives.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import simpson, solve_ivp

from . import expr as ex
from .model import SystemSpec

DEFAULT_RTOL = 1e-12


class SpectralError(Exception):
    pass


class IntegrationError(SpectralError):
    """The shooting integrator failed (typically step-size underflow)."""


class BoundaryTooCloseError(SpectralError):
    pass


class MaxDepthError(SpectralError):
    pass


class NotAnEigenvalueError(SpectralError):
    pass


class NotSimpleError(SpectralError):
    pass


class ZeroPairingError(SpectralError):
    pass


# ------------------------------------------------------------------- types


@dataclass(frozen=True)
class GridFn:
    """Samples of an n-vector function on the uniform grid x_i = i / N."""

    x: np.ndarray
    values: np.ndarray  # (n, N + 1), complex

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != self.x.size:
            raise ValueError("values must have shape (n, N + 1)")
        if self.x.size < 65:
            raise ValueError("grid resolution must be at least 64")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function has non-finite entries")

    @property
    def N(self) -> int:
        return self.x.size - 1

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def scaled(self, s: complex) -> "GridFn":
        return GridFn(self.x, self.values * s)

    def norm(self) -> float:
        """L2 norm via Simpson's rule."""
        return float(np.sqrt(simpson(np.sum(np.abs(self.values) ** 2, axis=0), x=self.x)))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True)
class EigenPair:
    mu: complex
    lam: float
    v: GridFn | None = None
    w: GridFn | None = None
    winding_multiplicity: int = 1
    pairing: complex | None = None  # pairing of v and w before normalisation


@dataclass(frozen=True)
class SpectrumQuery:
    lam: float
    re: tuple[float, float]
    im: tuple[float, float]
    max_count: int = 64
    newton_tol: float = 1e-10


@dataclass(frozen=True)
class FundamentalSolution:
    x: np.ndarray
    Phi: np.ndarray  # (len(x), K, n, n)
    dPhi: np.ndarray | None  # derivative in mu, same shape

    @property
    def end(self) -> np.ndarray:
        return self.Phi[-1]


# ---------------------------------------------------------------- shooting


def _coefficients(spec: SystemSpec, lam: float):
    n = spec.n
    speed = [spec.speed_fn(j) for j in range(n)]
    jac = [[spec.jac_fn(j, k) for k in range(n)] for j in range(n)]

    def at(x: float):
        inv_a = np.array([1.0 / f(x, lam) for f in speed])
        B = np.array([[f(x, lam) for f in row] for row in jac], dtype=float)
        return inv_a, B

    return at


def fundamental_matrix(
    spec: SystemSpec,
    mu,
    lam: float,
    x_eval=None,
    derivative: bool = False,
    adjoint: bool = False,
    rtol: float = DEFAULT_RTOL,
    atol: float | None = None,
) -> FundamentalSolution:
    """Fundamental matrix of the direct (or adjoint, in ``p = a w`` form)
    equation with identity data at x = 0, for one or many spectral values.

    Integration uses the embedded 8(5,3) Dormand-Prince pair.
    """
    mus = np.atleast_1d(np.asarray(mu, dtype=complex))
    K, n = mus.size, spec.n
    coef = _coefficients(spec, lam)
    eye = np.broadcast_to(np.eye(n, dtype=complex), (K, n, n))
    nblk = 2 if derivative else 1
    y0 = np.concatenate([eye.ravel()] + ([np.zeros(K * n * n, complex)] if derivative else []))
    mu_col = mus[:, None, None]

    def rhs(x, y):
        inv_a, B = coef(x)
        Y = y.reshape(nblk, K, n, n)
        P = Y[0]
        if adjoint:
            S = inv_a[None, :, None] * P
            out0 = B.T @ S - mu_col * S
        else:
            out0 = inv_a[None, :, None] * (mu_col * P - B @ P)
        if not derivative:
            return out0.ravel()
        dP = Y[1]
        if adjoint:
            dS = inv_a[None, :, None] * dP
            out1 = B.T @ dS - mu_col * dS - S
        else:
            out1 = inv_a[None, :, None] * (mu_col * dP - B @ dP + P)
        return np.concatenate([out0.ravel(), out1.ravel()])

    t_eval = None if x_eval is None else np.asarray(x_eval, dtype=float)
    if atol is None:
        atol = rtol * 1e-2
    sol = solve_ivp(rhs, (0.0, 1.0), y0, method="DOP853", t_eval=t_eval, rtol=rtol, atol=atol)
    if sol.status != 0:
        raise IntegrationError(f"shooting failed: {sol.message}")
    xs = sol.t if t_eval is not None else sol.t[[0, -1]]
    Y = sol.y if t_eval is not None else sol.y[:, [0, -1]]
    Y = Y.T.reshape(xs.size, nblk, K, n, n)
    return FundamentalSolution(xs, Y[:, 0], Y[:, 1] if derivative else None)


def boundary_rows(spec: SystemSpec, adjoint: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Matrices (M0, M1) with the boundary conditions reading M0 y(0) + M1 y(1) = 0."""
    n, m = spec.n, spec.m
    left = np.arange(n) < m
    if adjoint:
        G = np.eye(n) + spec.reflection.T
        at0, at1 = ~left, left
    else:
        G = np.eye(n) - spec.reflection
        at0, at1 = left, ~left
    M0 = np.where(at0[:, None], G, 0.0)
    M1 = np.where(at1[:, None], G, 0.0)
    return M0, M1


def _scale_exponent(spec: SystemSpec, lam: float) -> float:
    """Sum of transit times of the right-boundary components; exp(-mu * S)
    is a nonvanishing holomorphic factor that tames growth of the determinant."""
    key = ("scale", float(lam))
    if key not in spec._cache:
        from scipy.integrate import quad

        S = 0.0
        for j in range(spec.m, spec.n):
            f = spec.speed_fn(j)
            S += quad(lambda x: 1.0 / f(x, lam), 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)[0]
        spec._cache[key] = S
    return spec._cache[key]


def _adjugate(D: np.ndarray) -> np.ndarray:
    """Batched adjugate via SVD, well defined for singular matrices."""
    U, s, Vh = np.linalg.svd(D)
    n = s.shape[-1]
    prods = np.empty_like(s)
    for k in range(n):
        prods[..., k] = np.prod(np.delete(s, k, axis=-1), axis=-1)
    phase = np.linalg.det(U) * np.linalg.det(Vh)
    return phase[..., None, None] * (np.conj(np.swapaxes(Vh, -1, -2)) * prods[..., None, :]) @ np.conj(
        np.swapaxes(U, -1, -2))


def boundary_matrix(spec: SystemSpec, mu, lam: float, rtol: float = DEFAULT_RTOL,
                    derivative: bool = False, adjoint: bool = False):
    sol = fundamental_matrix(spec, mu, lam, derivative=derivative, adjoint=adjoint, rtol=rtol)
    M0, M1 = boundary_rows(spec, adjoint)
    D = M0 + M1 @ sol.end
    dD = M1 @ sol.dPhi[-1] if derivative else None
    return D, dD


def det_and_derivative(spec: SystemSpec, mu, lam: float, rtol: float = DEFAULT_RTOL):
    """Scaled determinant g(mu) and g'(mu), vectorised over ``mu``."""
    mus = np.atleast_1d(np.asarray(mu, dtype=complex))
    D, dD = boundary_matrix(spec, mus, lam, rtol, derivative=True)
    det = np.linalg.det(D)
    ddet = np.einsum("kij,kji->k", _adjugate(D), dD)
    S = _scale_exponent(spec, lam)
    e = np.exp(-mus * S)
    return e * det, e * (ddet - S * det)


def char_determinant(spec: SystemSpec, mu, lam: float, rtol: float = DEFAULT_RTOL):
    """Holomorphic function of ``mu`` vanishing exactly at eigenvalues."""
    mus = np.atleast_1d(np.asarray(mu, dtype=complex))
    D, _ = boundary_matrix(spec, mus, lam, rtol)
    g = np.exp(-mus * _scale_exponent(spec, lam)) * np.linalg.det(D)
    return g[0] if np.ndim(mu) == 0 else g


# --------------------------------------------------------- argument principle

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


@dataclass(frozen=True)
class ContourCount:
    winding: float  # (1 / 2 pi i) * contour integral of g'/g
    moment: complex  # (1 / 2 pi i) * contour integral of z g'/g
    count: int
    moment2: complex = 0j  # same with z^2

    @property
    def spread(self) -> complex:
        """Mean of (z - centroid)^2 over the enclosed zeros."""
        c = self.moment / self.count
        return self.moment2 / self.count - c * c


def _rect_edges(re, im):
    z = [complex(re[0], im[0]), complex(re[1], im[0]), complex(re[1], im[1]), complex(re[0], im[1])]
    return [(z[i], z[(i + 1) % 4]) for i in range(4)]


def contour_count(spec: SystemSpec, lam: float, re, im, seg_len: float = 0.5,
                  rtol: float = 1e-10, max_level: int = 14) -> ContourCount:
    """Count zeros of the determinant inside the rectangle ``re x im``.

    Each boundary segment is integrated with 8-point Gauss-Legendre and
    accepted once the quadrature of g'/g agrees with the change of log g
    between its end points; otherwise it is halved.
    """
    pending = []
    for a, b in _rect_edges(re, im):
        pieces = max(1, math.ceil(abs(b - a) / seg_len))
        pts = a + (b - a) * np.linspace(0.0, 1.0, pieces + 1)
        pending += [(pts[i], pts[i + 1], 0) for i in range(pieces)]
    total = 0.0 + 0.0j
    moment = moment2 = 0.0 + 0.0j
    while pending:
        A = np.array([s[0] for s in pending])
        Bv = np.array([s[1] for s in pending])
        mid, half = (A + Bv) / 2, (Bv - A) / 2
        nodes = mid[:, None] + half[:, None] * _GL_X[None, :]
        zs = np.concatenate([nodes.ravel(), A, Bv])
        g, dg = det_and_derivative(spec, zs, lam, rtol)
        nseg = len(pending)
        ratio = (dg[: nseg * 8] / g[: nseg * 8]).reshape(nseg, 8)
        quad = half * (ratio @ _GL_W)
        quad_z = half * ((ratio * nodes) @ _GL_W)
        quad_z2 = half * ((ratio * nodes ** 2) @ _GL_W)
        ga, gb = g[nseg * 8: nseg * 9], g[nseg * 9:]
        with np.errstate(all="ignore"):
            dlog = np.log(gb / ga)
            ok = (np.abs(quad - dlog) < 1e-4) & (np.abs(dlog.imag) < 1.0)
        nxt = []
        for i, seg in enumerate(pending):
            if ok[i]:
                total += quad[i]
                moment += quad_z[i]
                moment2 += quad_z2[i]
            elif seg[2] >= max_level:
                raise BoundaryTooCloseError(
                    f"contour segment {seg[0]:.6g} -> {seg[1]:.6g} passes too close to an eigenvalue")
            else:
                m_ = (seg[0] + seg[1]) / 2
                nxt += [(seg[0], m_, seg[2] + 1), (m_, seg[1], seg[2] + 1)]
        pending = nxt
    w = total / (2j * math.pi)
    count = round(w.real)
    if abs(w.real - count) > 0.01 or abs(w.imag) > 0.01:
        raise BoundaryTooCloseError(f"winding number {w:.4f} is not close to an integer")
    return ContourCount(w.real, moment / (2j * math.pi), count, moment2 / (2j * math.pi))


def newton_refine(spec: SystemSpec, mu0: complex, lam: float, tol: float = 1e-10,
                  rtol: float = DEFAULT_RTOL, maxit: int = 40) -> tuple[complex, float]:
    """Newton iteration on the determinant; returns (mu, |g(mu)|)."""
    mu = complex(mu0)
    g, dg = det_and_derivative(spec, mu, lam, rtol)
    for _ in range(maxit):
        step = g[0] / dg[0]
        if not np.isfinite(step):
            break
        mu -= step
        g, dg = det_and_derivative(spec, mu, lam, rtol)
        if abs(step) <= 4e-16 * max(1.0, abs(mu)):
            break
        if abs(g[0]) < tol * 1e-3:
            break
    return complex(mu), float(abs(g[0]))


def _null_vector(D: np.ndarray):
    U, s, Vh = np.linalg.svd(D)
    rel = s / s[0]
    if rel[-1] >= 1e-8:
        raise NotAnEigenvalueError(f"boundary system is regular (singular values {rel})")
    if D.shape[0] > 1 and rel[-2] <= 1e-4:
        raise NotSimpleError(f"null space is more than one-dimensional (singular values {rel})")
    return np.conj(Vh[-1]), rel


def singular_values(spec: SystemSpec, mu: complex, lam: float, rtol: float = DEFAULT_RTOL,
                    adjoint: bool = False) -> np.ndarray:
    """Singular values of the boundary system, relative to the largest."""
    D, _ = boundary_matrix(spec, mu, lam, rtol, adjoint=adjoint)
    s = np.linalg.svd(D[0], compute_uv=False)
    return s / s[0]


def _clustered_zero(spec, cnt, lam, re, im, tol, rtol):
    """A single zero carrying the whole winding number of the rectangle, or None."""
    try:
        mu, res = newton_refine(spec, cnt.moment / cnt.count, lam, tol, rtol)
    except IntegrationError:
        return None
    if not (re[0] < mu.real < re[1] and im[0] < mu.imag < im[1]) or res >= tol:
        return None
    h = 1e-6 * max(1.0, abs(mu))
    try:
        near = contour_count(spec, lam, (mu.real - h, mu.real + h), (mu.imag - h, mu.imag + h))
    except BoundaryTooCloseError:
        return None
    return mu if near.count == cnt.count else None


def find_eigenvalues(spec: SystemSpec, query: SpectrumQuery, rtol: float = DEFAULT_RTOL,
                     max_depth: int = 16) -> list[EigenPair]:
    """All eigenvalues in the query rectangle, refined by Newton.

    Rectangles are bisected until each holds at most one zero, whose
    first moment gives the Newton start.  Results are ordered by
    (Re mu, Im mu); eigenfunctions are not filled in.
    """
    lam = query.lam
    top = contour_count(spec, lam, query.re, query.im)
    if top.count > query.max_count:
        raise SpectralError(f"{top.count} eigenvalues in region exceed max_count={query.max_count}")
    found: list[EigenPair] = []
    stack = [(tuple(query.re), tuple(query.im), top, 0)]
    while stack:
        re, im, cnt, depth = stack.pop()
        if cnt.count == 0:
            continue
        width, height = re[1] - re[0], im[1] - im[0]
        if cnt.count == 1 or max(width, height) < 1e-7:
            guess = cnt.moment / cnt.count
            mu, res = newton_refine(spec, guess, lam, query.newton_tol, rtol)
            slack = 1e-9 * max(1.0, abs(mu))
            inside = (re[0] - slack <= mu.real <= re[1] + slack) and (im[0] - slack <= mu.imag <= im[1] + slack)
            if inside and res < query.newton_tol:
                found.append(EigenPair(mu=mu, lam=lam, winding_multiplicity=cnt.count))
                continue
            if max(width, height) < 1e-7:
                raise SpectralError(f"Newton failed to converge near {guess}")
        elif abs(cnt.spread) < 1e-6 * max(width, height) ** 2:
            mult = _clustered_zero(spec, cnt, lam, re, im, query.newton_tol, rtol)
            if mult is not None:
                found.append(EigenPair(mu=mult, lam=lam, winding_multiplicity=cnt.count))
                continue
        if depth >= max_depth:
            raise MaxDepthError(f"subdivision depth {max_depth} exceeded near {complex(np.mean(re), np.mean(im))}")
        halves = None
        for frac in (0.5, 0.5371, 0.4629, 0.5813, 0.4187):
            try:
                if width >= height:
                    cut = re[0] + frac * width
                    parts = [((re[0], cut), im), ((cut, re[1]), im)]
                else:
                    cut = im[0] + frac * height
                    parts = [(re, (im[0], cut)), (re, (cut, im[1]))]
                counts = [contour_count(spec, lam, r, i) for r, i in parts]
            except BoundaryTooCloseError:
                continue
            if sum(c.count for c in counts) == cnt.count:
                halves = list(zip(parts, counts))
                break
        if halves is None:
            raise BoundaryTooCloseError("could not split rectangle away from eigenvalues")
        for (r, i), c in halves:
            stack.append((r, i, c, depth + 1))

    kept = []
    for pair in found:
        rel = singular_values(spec, pair.mu, lam, rtol)
        if rel[-1] > 1e-4:
            warnings.warn(f"discarding spurious root {pair.mu} (boundary system is regular)")
            continue
        kept.append(pair)
    kept.sort(key=lambda p: (round(p.mu.real, 9), p.mu.imag))
    return kept


# ----------------------------------------------------------- eigenfunctions


def _grid(N: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, N + 1)


def eigenfunction(spec: SystemSpec, mu: complex, lam: float, N: int = 512,
                  rtol: float = DEFAULT_RTOL) -> GridFn:
    """Eigenfunction for a simple eigenvalue ``mu``, sampled on N + 1 points."""
    x = _grid(N)
    sol = fundamental_matrix(spec, mu, lam, x_eval=x, rtol=rtol)
    M0, M1 = boundary_rows(spec)
    c, _ = _null_vector(M0 + M1 @ sol.end[0])
    return GridFn(x, (sol.Phi[:, 0] @ c).T)


def adjoint_eigenfunction(spec: SystemSpec, nu: complex, lam: float, N: int = 512,
                          rtol: float = DEFAULT_RTOL) -> GridFn:
    x = _grid(N)
    sol = fundamental_matrix(spec, nu, lam, x_eval=x, adjoint=True, rtol=rtol)
    M0, M1 = boundary_rows(spec, adjoint=True)
    c, _ = _null_vector(M0 + M1 @ sol.end[0])
    p = (sol.Phi[:, 0] @ c).T
    return GridFn(x, p / spec.speeds_at(x, lam))


def pairing(v: GridFn, w: GridFn) -> complex:
    """sum_j int_0^1 v_j conj(w_j) dx by composite Simpson."""
    return complex(simpson(np.sum(v.values * np.conj(w.values), axis=0), x=v.x))


def _anchor_value(v: GridFn, anchor) -> complex:
    if anchor is None:
        j, i = np.unravel_index(np.argmax(np.abs(v.values)), v.values.shape)
        return complex(v.values[j, i])
    j, xa = anchor
    i = int(round(xa * v.N))
    if abs(v.x[i] - xa) > 1e-12:
        re = np.interp(xa, v.x, v.values[j].real)
        imv = np.interp(xa, v.x, v.values[j].imag)
        return complex(re, imv)
    return complex(v.values[j, i])


def normalize_pair(v: GridFn, w: GridFn, anchor=None) -> tuple[GridFn, GridFn, complex]:
    """Scale ``v`` to 1 at the anchor and ``w`` so that the pairing equals 2.

    Without an anchor, the entry of largest modulus is used.  Returns the
    scaled pair and the pairing before scaling.
    """
    p = pairing(v, w)
    if abs(p) <= 1e-8 * v.norm() * w.norm():
        raise ZeroPairingError(f"eigenfunction and adjoint are orthogonal (pairing {p:.3g})")
    s = 1.0 / _anchor_value(v, anchor)
    t = np.conj(2.0 / (s * p))
    return v.scaled(s), w.scaled(t), p


def eigen_pair(spec: SystemSpec, mu: complex, lam: float, N: int = 512,
               rtol: float = DEFAULT_RTOL) -> EigenPair:
    """Normalised eigenfunction and adjoint eigenfunction (for conj(mu))."""
    v = eigenfunction(spec, mu, lam, N, rtol)
    w = adjoint_eigenfunction(spec, np.conj(mu), lam, N, rtol)
    v, w, p = normalize_pair(v, w, spec.anchor)
    return EigenPair(mu=complex(mu), lam=lam, v=v, w=w, pairing=p)


def eigenfunction_residual(spec: SystemSpec, mu: complex, lam: float, v: GridFn,
                           adjoint: bool = False) -> float:
    """Max-norm residual of the eigen-ODE, with d/dx from a degree-7 spline.

    Used as an independent check on shooting results.
    """
    from scipy.interpolate import make_interp_spline

    x = v.x
    a = spec.speeds_at(x, lam)
    B = spec.jacobian_at(x, lam)  # (n, n, N+1)
    if adjoint:
        p = a * v.values
        dp = make_interp_spline(x, p, k=7, axis=1).derivative()(x)
        res = -dp + np.einsum("kjx,kx->jx", B, v.values) - mu * v.values
    else:
        dv = make_interp_spline(x, v.values, k=7, axis=1).derivative()(x)
        res = a * dv + np.einsum("jkx,kx->jx", B, v.values) - mu * v.values
    return float(np.max(np.abs(res)))


def boundary_residual(spec: SystemSpec, v: GridFn, adjoint: bool = False, lam: float = 0.0) -> float:
    M0, M1 = boundary_rows(spec, adjoint)
    vals = v.values
    if adjoint:
        vals = spec.speeds_at(v.x, lam) * vals
    return float(np.max(np.abs(M0 @ vals[:, 0] + M1 @ vals[:, -1])))


# ----------------------------------------------------- adjoint pairing identity


def operator_pairing_defect(spec: SystemSpec, lam: float, omega: float, u, v,
                            nx: int = 48, nt: int = 64) -> tuple[float, float]:
    """Compare <A u, v> with <u, A~ v> for time-periodic test functions.

    ``u`` and ``v`` are lists of expression trees in ``x`` and ``t``.  ``A``
    is ``w d_t + a d_x + b_jj`` and ``A~`` its formal adjoint
    ``-w d_t - d_x(a .) + b_jj``.  The scalar product averages over one
    period.  Returns ``(lhs, boundary)`` where ``lhs`` is the difference of
    the two pairings and ``boundary`` the flux term
    ``(1/2pi) [sum_j a_j int u_j v_j dt]`` between x = 0 and x = 1; both
    vanish when ``u`` satisfies the reflection conditions and ``v`` the
    adjoint ones.
    """
    gx, gw = np.polynomial.legendre.leggauss(nx)
    xq, wx = (gx + 1) / 2, gw / 2
    tq = np.linspace(0.0, 2 * np.pi, nt, endpoint=False)
    X, T = np.meshgrid(xq, tq, indexing="ij")
    fixed = {"lambda": lam, **spec.params}
    lhs = 0.0
    flux = 0.0
    for j in range(spec.n):
        a = ex.substitute(spec.speeds[j], fixed)
        bjj = spec.jac_fn(j, j)(X, lam)
        aX = ex.evaluate(a, {"x": X}) * np.ones_like(X)
        env = {"x": X, "t": T}
        uj, vj = u[j], v[j]
        Au = (omega * ex.evaluate(ex.differentiate(uj, "t"), env)
              + aX * ex.evaluate(ex.differentiate(uj, "x"), env)
              + bjj * ex.evaluate(uj, env))
        Av = (-omega * ex.evaluate(ex.differentiate(vj, "t"), env)
              - ex.evaluate(ex.differentiate(ex.mul(a, vj), "x"), env)
              + bjj * ex.evaluate(vj, env))
        integrand = Au * ex.evaluate(vj, env) - ex.evaluate(uj, env) * Av
        lhs += float(wx @ integrand.mean(axis=1))
        for xb, sign in ((1.0, 1.0), (0.0, -1.0)):
            envb = {"x": xb, "t": tq}
            ab = ex.evaluate(a, {"x": xb})
            flux += sign * ab * float(np.mean(ex.evaluate(uj, envb) * ex.evaluate(vj, envb)))
    return lhs, flux


def with_eigenfunctions(spec: SystemSpec, pair: EigenPair, N: int = 512) -> EigenPair:
    full = eigen_pair(spec, pair.mu, pair.lam, N)
    return replace(full, winding_multiplicity=pair.winding_multiplicity)
