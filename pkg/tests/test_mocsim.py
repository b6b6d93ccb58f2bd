import math

import numpy as np
import pytest

from hyperhopf import expr as ex
from hyperhopf import mocsim
from hyperhopf.model import SystemSpec, builtin_example

# manufactured solution for the example; u1(0) = 0 and u2(1) = u1(1) for all t
U1 = "sin(x)*cos(t) + 0.5*x^2*sin(2*t)"
U2 = "sin(1)*cos(t) + 0.5*sin(2*t) + (1 - x)*cos(x + t)"
NAMES = ["x", "t", "lambda", "gamma"]


def _manufactured():
    """Forcing for dU/ds + sigma a dU/dx + sigma b(U) = g with sigma = -1."""
    u = [ex.parse(U1, NAMES), ex.parse(U2, NAMES)]
    b1 = ex.parse(f"lambda*({U1}) - ({U2}) + gamma*({U1})^3", NAMES)
    b = [b1, ex.Const(0.0)]
    speeds = [-1.0, 1.0]
    g = []
    for j in range(2):
        gj = ex.add(ex.differentiate(u[j], "t"), ex.mul(ex.Const(-speeds[j]), ex.differentiate(u[j], "x")))
        g.append(ex.sub(gj, b[j]))
    init = [ex.substitute(e, {"t": 0.0}) for e in u]
    return g, init, u


def _error(dx, gamma=0.0, t_end=1.0):
    spec = builtin_example(gamma)
    g, init, u = _manufactured()
    cfg = mocsim.SimConfig(spec=spec, lam=0.7, t_end=t_end, initial=init, dx=dx, forcing=g)
    sim = mocsim.Simulator(cfg)
    ts = sim.run()
    T = ts.t[-1]
    exact = np.array([ex.evaluate(e, {"x": sim.x, "t": T, "lambda": 0.7, "gamma": gamma}) for e in u])
    return float(np.max(np.abs(ts.final_state - exact)))


@pytest.mark.parametrize("gamma", [0.0, -1.0])
def test_manufactured_convergence_order(gamma):
    errs = [_error(dx, gamma) for dx in (1 / 100, 1 / 200, 1 / 400)]
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert errs[-1] < 1e-4
    assert min(orders) >= 2.0, (errs, orders)


def test_zero_data_stays_zero():
    spec = builtin_example(-1.0)
    cfg = mocsim.SimConfig(spec=spec, lam=1.0, t_end=2.0, initial=[ex.Const(0.0)] * 2, dx=1 / 50)
    ts = mocsim.run(cfg)
    assert not ts.samples.any() and not ts.final_state.any()


def test_linear_decay_rate(bif, a0):
    spec = builtin_example(0.0)
    lam = a0 - 0.2
    N = 400
    x = np.linspace(0, 1, N + 1)
    cfg = mocsim.SimConfig(spec=spec, lam=lam, t_end=50.0, initial=mocsim.seed_orbit(bif, 1e-3, x),
                           dx=1 / N, probes=(1.0,), omega_hint=bif.omega0)
    m = mocsim.run(cfg).measure(window=40.0)
    expect = (lam - a0) / 2
    assert abs(m.rate - expect) < 0.05 * abs(expect)


def test_reflection_conditions_hold_exactly():
    spec = builtin_example(-1.0)
    cfg = mocsim.SimConfig(spec=spec, lam=1.2, t_end=3.0, initial=[ex.parse("x*(1 - x)"), ex.parse("cos(3*x)")],
                           dx=1 / 64)
    U = mocsim.run(cfg).final_state
    assert U[0, 0] == 0.0
    assert U[1, -1] == U[0, -1]


def test_deterministic():
    spec = builtin_example(-1.0)
    cfg = mocsim.SimConfig(spec=spec, lam=1.6, t_end=4.0, initial=[ex.parse("0.1*x"), ex.parse("0.1")], dx=1 / 80)
    a, b = mocsim.run(cfg), mocsim.run(cfg)
    np.testing.assert_array_equal(a.samples, b.samples)


def test_cfl_rejected():
    spec = builtin_example(-1.0)
    init = [ex.Const(0.0)] * 2
    with pytest.raises(mocsim.SimConfigError):
        mocsim.SimConfig(spec=spec, lam=1.0, t_end=1.0, initial=init, dx=1 / 100, cfl=1.0)
    with pytest.raises(mocsim.SimConfigError):
        mocsim.SimConfig(spec=spec, lam=1.0, t_end=1.0, initial=init, dx=1 / 100, dt=0.01)
    cfg = mocsim.SimConfig(spec=spec, lam=1.0, t_end=1.0, initial=init, dx=1 / 100, dt=0.009)
    assert cfg.steps == 111


@pytest.mark.parametrize("kw", [dict(dx=0.3), dict(t_end=0.0), dict(probes=(1.5,))])
def test_bad_config(kw):
    base = dict(spec=builtin_example(-1.0), lam=1.0, t_end=1.0, initial=[ex.Const(0.0)] * 2, dx=1 / 100)
    with pytest.raises(mocsim.SimConfigError):
        mocsim.SimConfig(**{**base, **kw})


def test_no_time_direction():
    spec = SystemSpec.from_strings(2, 1, ["1", "2"], ["u1", "0"], [[0, 0], [1, 0]])
    with pytest.raises(mocsim.SimConfigError):
        mocsim.SimConfig(spec=spec, lam=0.0, t_end=1.0, initial=[ex.Const(0.0)] * 2, dx=1 / 10)


def test_blow_up_reported():
    spec = builtin_example(1.0)
    cfg = mocsim.SimConfig(spec=spec, lam=0.0, t_end=5.0, initial=[ex.parse("5*x"), ex.Const(0.0)], dx=1 / 50)
    with np.errstate(all="ignore"), pytest.raises(mocsim.BlowUpError):
        mocsim.run(cfg)


def test_csv_layout():
    spec = builtin_example(-1.0)
    cfg = mocsim.SimConfig(spec=spec, lam=1.0, t_end=0.1, initial=[ex.parse("x"), ex.parse("1")], dx=1 / 20,
                           probes=(0.0, 1.0))
    ts = mocsim.run(cfg)
    lines = ts.to_csv().splitlines()
    assert lines[0] == "t,probe_x,component,value"
    assert len(lines) == 1 + ts.t.size * 2 * 2
    assert lines[1].split(",")[:3] == ["0", "0", "1"]


def test_measure_signal_on_pure_sinusoid():
    t = np.linspace(0, 200, 200001)
    y = 0.7 * np.sin(1.3 * t) * np.exp(-0.01 * t)
    d = mocsim.measure_signal(t, y, 150.0)
    assert d["frequency"] == pytest.approx(1.3, rel=1e-4)
    assert d["rate"] == pytest.approx(-0.01, rel=1e-2)


def test_default_t_end(bif):
    period = 2 * math.pi / bif.omega0
    assert mocsim.default_t_end(bif, 0.02) == pytest.approx(600.0, rel=1e-12)
    assert mocsim.default_t_end(bif, 10.0) == pytest.approx(60 * period)
    assert mocsim.default_t_end(bif, 1e-6) == 4000.0


def test_subcritical_stable_side_decays(report):
    from hyperhopf.bifcoef import bifurcation_result

    spec = builtin_example(1.0)
    res = bifurcation_result(spec, report)
    row = mocsim.amplitude_point(spec, res, -0.3, dx=1 / 100, t_end=300.0)
    seed = 0.5 * math.sqrt(abs(2 * res.alpha * 0.3 / res.beta)) * res.v0_max
    # the unstable orbit lives on this side; data seeded below it decays to rest
    assert row.on_side and res.direction == "subcritical"
    assert row.measured_amplitude < 0.05 * seed
