"""Hopf hypotheses at a critical parameter and the transversality coefficient."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from . import spectral as sp
from .charfield import CharContext, dissipativity
from .model import SystemSpec, validate


class HopfError(Exception):
    """Base class; ``hypothesis`` names the condition that could not be met."""

    hypothesis = "crossing"


class NoCrossingError(HopfError):
    pass


class UnstableStartError(HopfError):
    pass


class MultipleCrossingError(HopfError):
    hypothesis = "geometric_simplicity"

    def __init__(self, message: str, crossings):
        super().__init__(message)
        self.crossings = crossings


class TrackingError(HopfError):
    pass


# ------------------------------------------------------------ continuation


def _newton_batch(spec: SystemSpec, mus: np.ndarray, lam: float, rtol: float, maxit: int = 30,
                  tol: float = 1e-13) -> np.ndarray:
    mus = np.array(mus, dtype=complex)
    active = np.ones(mus.size, bool)
    for _ in range(maxit):
        if not active.any():
            break
        g, dg = sp.det_and_derivative(spec, mus[active], lam, rtol)
        step = g / dg
        mus[active] -= step
        done = np.abs(step) <= tol * np.maximum(1.0, np.abs(mus[active]))
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    return mus


def _advance(spec, mus, lam_from, lam_to, slope, rtol, depth=0):
    """Continue all branches from lam_from to lam_to; the Newton result must
    stay within ten parameter steps of the linear predictor."""
    h = lam_to - lam_from
    pred = mus + slope * h
    new = _newton_batch(spec, pred, lam_to, rtol)
    if np.all(np.abs(new - pred) <= 10 * abs(h)):
        return new, (new - mus) / h
    if depth >= 12:
        raise TrackingError(f"eigenvalue branches could not be followed near lambda={lam_from:.6g}")
    mid = 0.5 * (lam_from + lam_to)
    m_mus, m_slope = _advance(spec, mus, lam_from, mid, slope, rtol, depth + 1)
    return _advance(spec, m_mus, mid, lam_to, m_slope, rtol, depth + 1)


@dataclass(frozen=True)
class Crossing:
    lambda0: float
    omega0: float
    mu0: complex


def _bisect_branch(spec, mu_lo, lam_lo, mu_hi, lam_hi, rtol, tol=1e-12) -> Crossing:
    """Bisection in lambda on Re mu of one branch; Newton restarts from the
    linear interpolant of the bracketing eigenvalues."""
    a, b = lam_lo, lam_hi
    ma, mb = mu_lo, mu_hi
    while b - a > tol:
        c = 0.5 * (a + b)
        guess = ma + (mb - ma) * (c - a) / (b - a)
        mc = _newton_batch(spec, [guess], c, rtol)[0]
        if mc.real < 0:
            a, ma = c, mc
        else:
            b, mb = c, mc
    lam0 = 0.5 * (a + b)
    mu0 = _newton_batch(spec, [0.5 * (ma + mb)], lam0, rtol)[0]
    return Crossing(lam0, abs(mu0.imag), complex(0.0, abs(mu0.imag)) + mu0.real)


def locate_crossing(spec: SystemSpec, lambda_range, region, samples: int = 24,
                    rtol: float = sp.DEFAULT_RTOL) -> Crossing:
    """First parameter where an eigenvalue pair from ``region`` reaches Re mu = 0.

    ``region`` is ``((re_lo, re_hi), (im_lo, im_hi))`` and is searched at
    the left end of ``lambda_range``, where every eigenvalue must lie in
    the open left half plane.
    """
    lo, hi = map(float, lambda_range)
    re, im = region
    start = sp.find_eigenvalues(spec, sp.SpectrumQuery(lo, tuple(re), tuple(im)), rtol)
    if not start:
        raise NoCrossingError("no eigenvalues in the search region")
    bad = [p.mu for p in start if p.mu.real >= 0]
    if bad:
        raise UnstableStartError(f"eigenvalues with Re >= 0 at lambda={lo}: {bad}")
    # a multiple eigenvalue is tracked once per unit of multiplicity
    mus = np.array([p.mu for p in start if p.mu.imag >= -1e-12 for _ in range(p.winding_multiplicity)])
    lams = np.linspace(lo, hi, samples + 1)
    slope = np.zeros_like(mus)
    for k in range(samples):
        new, slope = _advance(spec, mus, lams[k], lams[k + 1], slope, rtol)
        crossed = np.flatnonzero((mus.real < 0) & (new.real >= 0))
        if crossed.size:
            found = [_bisect_branch(spec, mus[i], lams[k], new[i], lams[k + 1], rtol) for i in crossed]
            found.sort(key=lambda c: c.lambda0)
            first = found[0]
            same = [c for c in found if abs(c.lambda0 - first.lambda0) < 1e-8]
            if len(same) > 1:
                raise MultipleCrossingError(
                    f"{len(same)} eigenvalue pairs cross together at lambda={first.lambda0:.10g}", same)
            if first.omega0 <= 1e-8:
                raise NoCrossingError(f"a real eigenvalue crosses zero at lambda={first.lambda0:.10g}")
            return first
        mus = new
    raise NoCrossingError(f"no eigenvalue crosses the imaginary axis for lambda in [{lo}, {hi}]")


# ------------------------------------------------------------------ checks


@dataclass(frozen=True)
class GeometricCheck:
    ok: bool
    singular_values: tuple


def check_geometric(spec: SystemSpec, lambda0: float, omega0: float,
                    rtol: float = sp.DEFAULT_RTOL) -> GeometricCheck:
    """One-dimensional null space of the boundary system at mu = i omega0."""
    rel = sp.singular_values(spec, complex(0.0, omega0), lambda0, rtol)
    ok = rel[-1] < 1e-8 and (rel.size == 1 or rel[-2] > 1e-4)
    return GeometricCheck(bool(ok), tuple(float(s) for s in rel))


def check_algebraic(pair: sp.EigenPair) -> tuple[bool, complex]:
    p = sp.pairing(pair.v, pair.w)
    return bool(abs(p) > 1e-8 * pair.v.norm() * pair.w.norm()), p


def transversality_alpha(spec: SystemSpec, pair: sp.EigenPair, lambda0: float) -> float:
    """Re of d mu / d lambda at the crossing, for a pair normalised to pairing 2.

    The x-derivative of v is taken from the eigenvalue equation itself.
    """
    x, v, w = pair.v.x, pair.v.values, pair.w.values
    a = spec.speeds_at(x, lambda0)
    B = spec.jacobian_at(x, lambda0)
    dv = (pair.mu * v - np.einsum("jkx,kx->jx", B, v)) / a
    da = np.array([spec.dlam_speed_fn(j)(x, lambda0) * np.ones_like(x) for j in range(spec.n)])
    dB = np.array([[spec.dlam_jac_fn(j, k)(x, lambda0) * np.ones_like(x) for k in range(spec.n)]
                   for j in range(spec.n)])
    integrand = (da * dv + np.einsum("jkx,kx->jx", dB, v)) * np.conj(w)
    return float(0.5 * simpson(integrand.sum(axis=0), x=x).real)


def alpha_finite_difference(spec: SystemSpec, mu0: complex, lambda0: float, h: float = 1e-4,
                            rtol: float = sp.DEFAULT_RTOL) -> float:
    """Central difference of Re mu along the branch through ``mu0``."""
    plus, minus = (_newton_batch(spec, [mu0], lambda0 + s, rtol)[0] for s in (h, -h))
    return float((plus.real - minus.real) / (2 * h))


@dataclass(frozen=True)
class NonresonanceCheck:
    ok: bool
    k_max: int
    nearest_distance: float
    offenders: tuple  # (k, mu) with mu within tol of i k omega0
    tol: float = 1e-6


def _box_eigenvalues(spec, lam, centre_im, half, rtol):
    for shrink in (1.0, 0.93, 0.87, 1.07):
        hw = half * shrink
        try:
            query = sp.SpectrumQuery(lam, (-hw, hw), (centre_im - hw, centre_im + hw))
            return sp.find_eigenvalues(spec, query, rtol), hw
        except sp.BoundaryTooCloseError:
            continue
    raise sp.BoundaryTooCloseError(f"could not isolate eigenvalues near {centre_im}i")


def check_nonresonance(spec: SystemSpec, lambda0: float, omega0: float, k_max: int = 20,
                       tol: float = 1e-6, rtol: float = sp.DEFAULT_RTOL) -> NonresonanceCheck:
    """Look for eigenvalues at i k omega0, k in {0, +-2, ..., +-k_max}.

    Each multiple is enclosed in a square of half-width omega0 / 2; with
    no eigenvalue inside, the distance is reported as that half-width.
    Real coefficients make the spectrum conjugation symmetric, so only
    k >= 0 is searched.
    """
    nearest = np.inf
    offenders = []
    for k in [0, *range(2, k_max + 1)]:
        found, hw = _box_eigenvalues(spec, lambda0, k * omega0, omega0 / 2, rtol)
        target = complex(0.0, k * omega0)
        dists = [abs(p.mu - target) for p in found] or [hw]
        d = min(dists)
        nearest = min(nearest, d)
        offenders += [(kk, p.mu if kk > 0 else np.conj(p.mu)) for p in found if abs(p.mu - target) < tol
                      for kk in ((k, -k) if k else (0,))]
    return NonresonanceCheck(not offenders, k_max, float(nearest), tuple(offenders), tol)


# ------------------------------------------------------------------ report


@dataclass
class HopfReport:
    lambda0: float
    omega0: float
    mu0: complex
    geo_simple: bool
    singular_values: tuple
    alg_simple: bool
    pairing: complex
    alpha: float
    alpha_fd: float
    nonresonant: bool
    k_max: int
    nearest_distance: float
    offenders: tuple
    dissipative: bool
    R0: float
    R1: float
    pair: sp.EigenPair = field(repr=False)
    model_violations: tuple = ()

    @property
    def transversal(self) -> bool:
        return abs(self.alpha) > 1e-8

    @property
    def failed(self) -> list[str]:
        out = list(self.model_violations)
        checks = [("geometric_simplicity", self.geo_simple), ("algebraic_simplicity", self.alg_simple),
                  ("transversality", self.transversal), ("nonresonance", self.nonresonant),
                  ("dissipativity", self.dissipative)]
        return out + [name for name, ok in checks if not ok]

    @property
    def verdict(self) -> bool:
        return not self.failed

    def to_dict(self) -> dict:
        return {
            "lambda0": self.lambda0,
            "omega0": self.omega0,
            "mu0": [self.mu0.real, self.mu0.imag],
            "geometric_simplicity": {"ok": self.geo_simple, "singular_values": list(self.singular_values)},
            "algebraic_simplicity": {"ok": self.alg_simple, "pairing": [self.pairing.real, self.pairing.imag]},
            "transversality": {"ok": self.transversal, "alpha": self.alpha, "alpha_fd": self.alpha_fd,
                               "time_units": "unscaled"},
            "nonresonance": {"ok": self.nonresonant, "checked_up_to_k": self.k_max,
                             "nearest_distance": self.nearest_distance,
                             "offenders": [[k, mu.real, mu.imag] for k, mu in self.offenders]},
            "dissipativity": {"ok": self.dissipative, "R0": self.R0, "R1": self.R1,
                              "product": self.R0 * self.R1},
            "model_hypotheses": {"ok": not self.model_violations, "violated": list(self.model_violations)},
            "verdict": self.verdict,
            "failed": self.failed,
        }


def full_report(spec: SystemSpec, lambda_range, region, k_max: int = 20, grid_n: int = 512,
                rtol: float = sp.DEFAULT_RTOL) -> HopfReport:
    vrep = validate(spec)
    violated = tuple(dict.fromkeys(v.hypothesis for v in vrep.violations))
    crossing = locate_crossing(spec, lambda_range, region, rtol=rtol)
    lam0, om0 = crossing.lambda0, crossing.omega0
    geo = check_geometric(spec, lam0, om0, rtol)
    pair = sp.eigen_pair(spec, crossing.mu0, lam0, grid_n, rtol)
    alg, p = check_algebraic(pair)
    alpha = transversality_alpha(spec, pair, lam0)
    alpha_fd = alpha_finite_difference(spec, crossing.mu0, lam0, rtol=rtol)
    nonres = check_nonresonance(spec, lam0, om0, k_max, rtol=rtol)
    dis = dissipativity(CharContext(spec), lam0)
    return HopfReport(
        lambda0=lam0, omega0=om0, mu0=crossing.mu0,
        geo_simple=geo.ok, singular_values=geo.singular_values,
        alg_simple=alg, pairing=pair.pairing if pair.pairing is not None else p,
        alpha=alpha, alpha_fd=alpha_fd,
        nonresonant=nonres.ok, k_max=k_max, nearest_distance=nonres.nearest_distance,
        offenders=nonres.offenders,
        dissipative=dis.ok, R0=dis.R0, R1=dis.R1,
        pair=pair, model_violations=violated,
    )
