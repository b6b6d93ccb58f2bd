"""Semi-Lagrangian initial-boundary-value solver along exact characteristics.

The solver marches in a time ``s`` chosen so that the reflection conditions
prescribe inflow data: ``s = t`` when the first ``m`` speeds are positive
and the rest negative, ``s = -t`` in the mirrored case.  With ``sigma`` the
corresponding sign the evolved equation is

    dU/ds + sigma a dU/dx + sigma b(x, lam, U) = g(x, s),

whose linear modes grow like exp(-sigma mu s).  For the built-in example
``sigma = -1`` and the growth rate equals Re mu.

Each step traces every node back along its characteristic, interpolates
with a four-point cubic stencil at the foot, applies the exact integrating
factor of the diagonal linear part and integrates the remaining source by
the trapezoidal rule (Heun predictor-corrector).  Characteristics that
enter through the inflow boundary during the step pick up the reflection
closure there, with outflow data interpolated linearly in time.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.interpolate import make_interp_spline
from scipy.signal import find_peaks

from . import expr as ex
from .bifcoef import BifurcationResult
from .charfield import CharContext, char_position, decay_factor
from .model import SystemSpec

MAX_CFL = 0.9


class SimConfigError(ValueError):
    pass


class BlowUpError(RuntimeError):
    def __init__(self, time: float, step: int):
        super().__init__(f"solution became non-finite at t={time:.6g} (step {step})")
        self.time = time
        self.step = step


@dataclass
class SimConfig:
    spec: SystemSpec
    lam: float
    t_end: float
    initial: object  # list of expressions in x, or an (n, N+1) array
    dx: float = 1.0 / 400
    dt: float | None = None
    cfl: float = MAX_CFL
    probes: tuple = (0.0, 0.5, 1.0)
    forcing: list | None = None  # expressions in x and t
    omega_hint: float | None = None
    measure: tuple | None = None  # (probe index, component)

    def __post_init__(self):
        N = round(1.0 / self.dx)
        if N < 4 or abs(N * self.dx - 1.0) > 1e-9:
            raise SimConfigError(f"dx={self.dx} must divide 1 into at least 4 cells")
        if not 0 < self.cfl <= MAX_CFL:
            raise SimConfigError(f"cfl={self.cfl} must lie in (0, {MAX_CFL}]")
        amax = float(np.max(np.abs(self.spec.speeds_at(np.linspace(0, 1, N + 1), self.lam))))
        limit = MAX_CFL * self.dx / amax
        if self.dt is None:
            self.dt = self.cfl * self.dx / amax
        elif not 0 < self.dt <= limit * (1 + 1e-12):
            raise SimConfigError(f"dt={self.dt} violates the CFL bound dt <= {limit:.6g}")
        if self.t_end <= 0:
            raise SimConfigError("t_end must be positive")
        for p in self.probes:
            if not 0.0 <= p <= 1.0:
                raise SimConfigError(f"probe {p} outside [0, 1]")
        if self.spec.orientation(self.lam) == 0:
            raise SimConfigError("speed signs admit no well-posed time direction for these boundary conditions")

    @property
    def N(self) -> int:
        return round(1.0 / self.dx)

    @property
    def steps(self) -> int:
        return int(math.floor(self.t_end / self.dt + 1e-9))


def seed_orbit(result: BifurcationResult, epsilon: float, x: np.ndarray) -> np.ndarray:
    """epsilon * Re v0 resampled on ``x`` (first-order orbit at phase zero)."""
    v0 = result.v0
    spline = make_interp_spline(v0.x, v0.values.real, k=5, axis=1)
    return epsilon * spline(x)


# ---------------------------------------------------------------- stencils


def _cubic_weights(pos: np.ndarray, N: int):
    """Indices (len, 4) and weights of four-point Lagrange interpolation at
    fractional grid positions, one-sided near the ends."""
    base = np.clip(np.floor(pos).astype(int) - 1, 0, N - 3)
    idx = base[:, None] + np.arange(4)[None, :]
    s = pos[:, None] - idx
    w = np.ones_like(s)
    for k in range(4):
        for q in range(4):
            if q != k:
                w[:, k] *= (pos - idx[:, q]) / (k - q)
    return idx, w


@dataclass
class _Component:
    W: sparse.csr_matrix  # interpolation at the feet of interior-traced nodes
    c: np.ndarray  # integrating factor from foot to node
    bnd_nodes: np.ndarray  # nodes whose characteristic starts at the boundary
    bnd_x: float
    bnd_delta: np.ndarray  # elapsed time from boundary to node, in [0, dt)
    bnd_c: np.ndarray
    theta: np.ndarray  # fraction of the step at which the boundary is crossed
    bnd_xs: np.ndarray


class Simulator:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        spec = cfg.spec
        self.spec = spec
        self.sigma = spec.orientation(cfg.lam)
        self.N = cfg.N
        self.x = np.linspace(0.0, 1.0, self.N + 1)
        self.dt = float(cfg.dt)
        self.ctx = CharContext(spec, nodes=max(1024, self.N))
        lam = cfg.lam
        self.bjj = np.array([spec.jac_fn(j, j)(self.x, lam) for j in range(spec.n)])
        self.rhs = [spec.rhs_fn(j) for j in range(spec.n)]
        self.comps = [self._component(j) for j in range(spec.n)]
        self.forcing = None
        if cfg.forcing is not None:
            consts = {"lambda": lam, **spec.params}
            self.forcing = [ex.compile_expr(g, ["x", "t"], consts) for g in cfg.forcing]

    def _component(self, j: int) -> _Component:
        lam, dt, N, x = self.cfg.lam, self.dt, self.N, self.x
        spec, m = self.spec, self.spec.m
        # P-distance from the foot to the node equals sigma * dt
        xi, inside = char_position(self.ctx, j, x, -self.sigma * dt, lam)
        inside = np.asarray(inside)
        # inflow boundary of component j in the marching direction
        bnd_x = 0.0 if j < m else 1.0
        interior = np.flatnonzero(inside)
        idx, w = _cubic_weights(xi[interior] * N, N)
        rows = np.repeat(interior, 4)
        W = sparse.csr_matrix((w.ravel(), (rows, idx.ravel())), shape=(N + 1, N + 1))
        c = np.zeros(N + 1)
        c[interior] = decay_factor(self.ctx, j, xi[interior], x[interior], lam)
        bnodes = np.flatnonzero(~inside)
        delta = self.sigma * (self.ctx.P(j, x[bnodes], lam) - self.ctx.P(j, bnd_x, lam))
        delta = np.clip(np.asarray(delta, float), 0.0, dt)
        if bnodes.size and abs(x[bnodes[0]] - bnd_x) < 1e-15:
            delta[0] = 0.0
        bc = decay_factor(self.ctx, j, np.full(bnodes.size, bnd_x), x[bnodes], lam)
        return _Component(W, c, bnodes, bnd_x, delta, np.asarray(bc, float), 1.0 - delta / dt,
                          np.full(bnodes.size, bnd_x))

    # ----------------------------------------------------------- source

    def _source_j(self, j, xs, s, U, bjj) -> np.ndarray:
        """sigma * (b_jj u_j - b_j(u)) + g_j for one component; U is (n, len(xs))."""
        out = self.sigma * (bjj * U[j] - self.rhs[j](xs, self.cfg.lam, *U))
        if self.forcing is not None:
            out = out + self.forcing[j](xs, s)
        return out

    def _source_grid(self, s, U):
        return np.array([self._source_j(j, self.x, s, U, self.bjj[j]) for j in range(self.spec.n)])

    def _closure(self, xb: float, Ub: np.ndarray) -> np.ndarray:
        """Apply the reflection conditions at boundary xb to columns of Ub."""
        m, R = self.spec.m, self.spec.reflection
        out = Ub.copy()
        if xb == 0.0:
            out[:m] = R[:m, m:] @ Ub[m:]
        else:
            out[m:] = R[m:, :m] @ Ub[:m]
        return out

    # ------------------------------------------------------------- step

    def step(self, U: np.ndarray, s: float) -> np.ndarray:
        dt = self.dt
        S = self._source_grid(s, U)
        new = np.empty_like(U)
        pred = np.empty_like(U)
        feet_U, feet_S = [], []
        for j, comp in enumerate(self.comps):
            fu = comp.W @ U[j]
            fs = comp.W @ S[j]
            feet_U.append(fu)
            feet_S.append(fs)
            pred[j] = comp.c * (fu + dt * fs)
        # boundary-traced nodes need outflow data at s + dt; those come
        # from interior characteristics, so the predictor is filled first
        bnd = [self._boundary_start(j, U, pred, s) for j in range(self.spec.n)]
        for j, b in enumerate(bnd):
            if b is not None:
                comp = self.comps[j]
                pred[j, comp.bnd_nodes] = b[0] + comp.bnd_delta * comp.bnd_c * b[1]
        Snew = self._source_grid(s + dt, pred)
        for j, comp in enumerate(self.comps):
            new[j] = comp.c * (feet_U[j] + 0.5 * dt * feet_S[j]) + 0.5 * dt * Snew[j]
        for j, comp in enumerate(self.comps):
            b = self._boundary_start(j, U, new, s)
            if b is not None:
                nodes = comp.bnd_nodes
                new[j, nodes] = b[0] + 0.5 * comp.bnd_delta * (comp.bnd_c * b[1] + Snew[j, nodes])
        return new

    def _boundary_start(self, j, U, target, s):
        """Weighted value and source where the characteristic entered, or None."""
        comp = self.comps[j]
        if comp.bnd_nodes.size == 0:
            return None
        ib = 0 if comp.bnd_x == 0.0 else self.N
        theta = comp.theta
        col = (1 - theta)[None, :] * U[:, ib, None] + theta[None, :] * target[:, ib, None]
        Ub = self._closure(comp.bnd_x, col)
        Sb = self._source_j(j, comp.bnd_xs, s + theta * self.dt, Ub, self.bjj[j, ib])
        return comp.bnd_c * Ub[j], Sb

    # -------------------------------------------------------------- run

    def initial_state(self) -> np.ndarray:
        init = self.cfg.initial
        if isinstance(init, np.ndarray):
            U = np.array(init, dtype=float)
            if U.shape != (self.spec.n, self.N + 1):
                raise SimConfigError(f"initial array must have shape {(self.spec.n, self.N + 1)}")
            return U
        if len(init) != self.spec.n:
            raise SimConfigError("need one initial expression per component")
        consts = {"lambda": self.cfg.lam, **self.spec.params}
        return np.array([ex.compile_expr(e, ["x"], consts)(self.x) for e in init], dtype=float)

    def run(self, keep_final: bool = True) -> "TimeSeries":
        cfg = self.cfg
        U = self.initial_state()
        probe_idx = np.array([int(round(p * self.N)) for p in cfg.probes])
        K = cfg.steps
        samples = np.empty((K + 1, probe_idx.size, self.spec.n))
        samples[0] = U[:, probe_idx].T
        s = 0.0
        for k in range(1, K + 1):
            U = self.step(U, s)
            s = k * self.dt
            samples[k] = U[:, probe_idx].T
            if k % 64 == 0 or k == K:
                if not np.all(np.isfinite(U)):
                    raise BlowUpError(s, k)
        t = np.arange(K + 1) * self.dt
        return TimeSeries(t=t, probe_x=self.x[probe_idx], samples=samples, dt=self.dt,
                          omega_hint=cfg.omega_hint, measure_at=cfg.measure,
                          final_state=U if keep_final else None, x=self.x)


def run(cfg: SimConfig) -> "TimeSeries":
    return Simulator(cfg).run()


# ------------------------------------------------------------ measurements


@dataclass(frozen=True)
class Measurement:
    probe_x: float
    component: int
    window: tuple
    amplitude: float
    frequency: float  # angular, rad per unit time
    rate: float
    drift: float
    mean: float

    def summary(self) -> str:
        keys = ["probe_x", "component", "amplitude", "frequency", "rate", "drift", "mean"]
        lines = [f"{k}={getattr(self, k)!r}" for k in keys]
        lines.append(f"window_start={self.window[0]!r}")
        lines.append(f"window_end={self.window[1]!r}")
        return "\n".join(lines) + "\n"


def _upward_crossings(t, y):
    idx = np.flatnonzero((y[:-1] < 0) & (y[1:] >= 0))
    return t[idx] - y[idx] * (t[idx + 1] - t[idx]) / (y[idx + 1] - y[idx])


def measure_signal(t: np.ndarray, y: np.ndarray, window: float) -> dict:
    """Amplitude, angular frequency, envelope rate and drift over the trailing window."""
    sel = t >= t[-1] - window
    tw, yw = t[sel], y[sel]
    mean = float(np.mean(yw))
    amplitude = 0.5 * float(np.max(yw) - np.min(yw))
    det = yw - mean
    cross = _upward_crossings(tw, det)
    frequency = 2 * np.pi / float(np.mean(np.diff(cross))) if cross.size >= 2 else math.nan
    peaks, _ = find_peaks(np.abs(yw))
    rate, drift = math.nan, math.nan
    if peaks.size >= 3:
        env = np.abs(yw[peaks])
        good = env > 0
        if good.sum() >= 3:
            rate = float(np.polyfit(tw[peaks][good], np.log(env[good]), 1)[0])
    hi, _ = find_peaks(det)
    lo, _ = find_peaks(-det)
    if hi.size >= 6 and lo.size >= 6:
        first = 0.5 * (np.mean(det[hi[:3]]) - np.mean(det[lo[:3]]))
        last = 0.5 * (np.mean(det[hi[-3:]]) - np.mean(det[lo[-3:]]))
        drift = float(abs(last - first) / abs(last)) if last else math.inf
    return dict(amplitude=amplitude, frequency=frequency, rate=rate, drift=drift, mean=mean,
                window=(float(tw[0]), float(tw[-1])))


@dataclass
class TimeSeries:
    t: np.ndarray
    probe_x: np.ndarray
    samples: np.ndarray  # (len(t), probes, n)
    dt: float
    omega_hint: float | None = None
    measure_at: tuple | None = None
    final_state: np.ndarray | None = field(default=None, repr=False)
    x: np.ndarray | None = field(default=None, repr=False)

    def window_length(self) -> float:
        span = self.t[-1]
        w = 0.25 * span
        if self.omega_hint:
            w = max(w, 50 * 2 * np.pi / self.omega_hint)
        return min(w, span)

    def measure(self, probe: int | None = None, component: int | None = None,
                window: float | None = None) -> Measurement:
        """Measurements at one probe and component; by default the pair with
        the largest oscillation over the trailing window."""
        window = self.window_length() if window is None else window
        if probe is None or component is None:
            if self.measure_at is not None:
                probe, component = self.measure_at
            else:
                sel = self.t >= self.t[-1] - window
                spread = np.ptp(self.samples[sel], axis=0)
                probe, component = np.unravel_index(np.argmax(spread), spread.shape)
        d = measure_signal(self.t, self.samples[:, probe, component], window)
        return Measurement(probe_x=float(self.probe_x[probe]), component=int(component), **d)

    def to_csv(self) -> str:
        """Long format with header ``t,probe_x,component,value``; components are 1-based."""
        K, P, n = self.samples.shape
        t = np.repeat(self.t, P * n)
        px = np.tile(np.repeat(self.probe_x, n), K)
        comp = np.tile(np.arange(1, n + 1), K * P)
        buf = io.StringIO()
        buf.write("t,probe_x,component,value\n")
        np.savetxt(buf, np.column_stack([t, px, comp, self.samples.ravel()]),
                   fmt=["%.10g", "%.10g", "%d", "%.17g"], delimiter=",")
        return buf.getvalue()


# ---------------------------------------------------------- amplitude law


@dataclass(frozen=True)
class AmplitudeRow:
    offset: float
    lam: float
    on_side: bool
    measured_amplitude: float
    predicted_amplitude: float
    measured_frequency: float
    drift: float
    converged: bool


@dataclass(frozen=True)
class AmplitudeLaw:
    rows: tuple
    omega0: float
    exponent: float  # fitted slope of log A against log offset over on-side rows
    prefactor: float  # fitted A / sqrt(offset)

    def to_csv(self) -> str:
        lines = ["offset,measured_A,predicted_A,measured_freq,drift,converged,fitted_exponent"]
        for r in self.rows:
            lines.append(f"{r.offset!r},{r.measured_amplitude!r},{r.predicted_amplitude!r},"
                         f"{r.measured_frequency!r},{r.drift!r},{int(r.converged)},{self.exponent!r}")
        return "\n".join(lines) + "\n"


def default_t_end(result: BifurcationResult, offset: float, cap: float = 4000.0) -> float:
    """Six relaxation times 1 / |alpha * offset|, at least 60 periods, at most ``cap``."""
    rate = abs(result.alpha * offset)
    period = 2 * np.pi / result.omega0
    relax = 6.0 / rate if rate > 0 else cap
    return float(min(cap, max(relax, 60 * period)))


def amplitude_point(spec: SystemSpec, result: BifurcationResult, offset: float, dx: float = 1 / 400,
                    cfl: float = MAX_CFL, t_end: float | None = None) -> AmplitudeRow:
    lam = result.lambda0 + offset
    eps = result.epsilon(lam)
    on_side = not math.isnan(eps)
    if not on_side or result.direction != "supercritical":
        # no stable orbit expected: start below the mirrored amplitude and watch it decay
        q = abs(2 * result.alpha * offset / result.beta) if result.beta else offset
        eps = 0.5 * math.sqrt(q)
    N = round(1 / dx)
    x = np.linspace(0, 1, N + 1)
    j, i = np.unravel_index(np.argmax(np.abs(result.v0.values)), result.v0.values.shape)
    probe = float(result.v0.x[i])
    cfg = SimConfig(spec=spec, lam=lam, t_end=t_end or default_t_end(result, offset),
                    initial=seed_orbit(result, eps, x), dx=dx, cfl=cfl,
                    probes=(probe,), omega_hint=result.omega0, measure=(0, int(j)))
    ts = run(cfg)
    m = ts.measure(window=50 * 2 * np.pi / result.omega0)
    predicted = result.predicted_amplitude(lam) if on_side else 0.0
    converged = bool(m.drift < 0.10) if math.isfinite(m.drift) else False
    return AmplitudeRow(offset, float(lam), on_side, m.amplitude, predicted, m.frequency, m.drift, converged)


def measure_amplitude_law(spec: SystemSpec, result: BifurcationResult, offsets, dx: float = 1 / 400,
                          cfl: float = MAX_CFL, t_end: float | None = None, jobs: int = 1) -> AmplitudeLaw:
    """Seeded runs at lambda0 + offset; fits A ~ prefactor * offset^exponent
    over the rows on the bifurcating side."""
    offsets = [float(o) for o in offsets]
    if not offsets:
        raise ValueError("no offsets given")
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(amplitude_point, spec, result, o, dx, cfl, t_end) for o in offsets]
            rows = [f.result() for f in futures]
    else:
        rows = [amplitude_point(spec, result, o, dx, cfl, t_end) for o in offsets]
    rows.sort(key=lambda r: r.offset)
    good = [r for r in rows if r.on_side and r.measured_amplitude > 0 and result.direction == "supercritical"]
    exponent = prefactor = math.nan
    if len(good) >= 2:
        lo = np.log([abs(r.offset) for r in good])
        la = np.log([r.measured_amplitude for r in good])
        exponent = float(np.polyfit(lo, la, 1)[0])
        prefactor = float(np.exp(np.mean(la - 0.5 * lo)))
    return AmplitudeLaw(tuple(rows), result.omega0, exponent, prefactor)
