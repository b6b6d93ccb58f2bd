import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from hyperhopf.charfield import (CharContext, char_position, char_time, char_time_inverse, decay_factor,
                                 dissipativity, remainder_f)
from hyperhopf.model import SystemSpec, builtin_example


@pytest.fixture(scope="module")
def ctx():
    return CharContext(builtin_example(-1.0))


@pytest.fixture(scope="module")
def vctx():
    spec = SystemSpec.from_strings(
        2, 1, ["-(1 + x^2)", "2 + sin(3*x)"], ["(lambda + x)*u1 - u2", "-exp(x)*u2 + u1^2"], [[0, 0.7], [0.4, 0]])
    return CharContext(spec)


def unit():
    return st.floats(0, 1, allow_nan=False)


def test_char_time_examples(ctx):
    assert char_time(ctx, 0, 0.3, 0.3, 2.5, 0.0) == 2.5
    assert char_time(ctx, 1, 0.0, 1.0, 0.0, 0.0) == pytest.approx(-1.0, abs=1e-13)
    assert char_time(ctx, 0, 0.0, 1.0, 0.0, 0.0) == pytest.approx(1.0, abs=1e-13)
    assert char_time_inverse(ctx, 1, 0.0, 1.0, -1.0, 0.0) == pytest.approx(0.0, abs=1e-13)


def test_decay_factor_examples(ctx):
    for lam in (0.0, 1.3):
        xi, x = 0.2, 0.9
        assert decay_factor(ctx, 0, xi, x, lam) == pytest.approx(np.exp(lam * (x - xi)), rel=1e-13)
        assert decay_factor(ctx, 1, xi, x, lam) == pytest.approx(1.0, abs=1e-15)
        assert decay_factor(ctx, 0, x, x, lam) == 1.0


def test_interpolant_matches_quadrature(vctx):
    spec = vctx.spec
    lam = 0.4
    mids = (np.arange(vctx.nodes) + 0.5) / vctx.nodes
    for j in range(2):
        a = spec.speed_fn(j)
        b = spec.jac_fn(j, j)
        for x in mids[::97]:
            P = quad(lambda s: 1 / a(s, lam), 0, x, epsabs=1e-14, epsrel=1e-14)[0]
            Q = quad(lambda s: b(s, lam) / a(s, lam), 0, x, epsabs=1e-14, epsrel=1e-14)[0]
            assert abs(vctx.P(j, x, lam) - P) < 1e-10
            assert abs(vctx.Q(j, x, lam) - Q) < 1e-10
        assert vctx.P(j, 0.0, lam) == 0.0 and vctx.Q(j, 0.0, lam) == 0.0


@settings(max_examples=200, deadline=None)
@given(unit(), unit(), st.floats(-5, 5, allow_nan=False), st.sampled_from([0, 1]))
def test_inverse_round_trip(xi, x, tau, j):
    ctx = _shared_v()
    t = char_time_inverse(ctx, j, xi, x, tau, 0.4, 1.3)
    assert abs(char_time(ctx, j, xi, x, t, 0.4, 1.3) - tau) < 1e-12


@settings(max_examples=200, deadline=None)
@given(unit(), unit(), unit(), st.floats(-3, 3, allow_nan=False), st.sampled_from([0, 1]))
def test_group_and_cocycle(x, xi, eta, t, j):
    ctx = _shared_v()
    lam, om = 0.4, 0.8
    lhs = char_time(ctx, j, eta, xi, char_time(ctx, j, xi, x, t, lam, om), lam, om)
    assert abs(lhs - char_time(ctx, j, eta, x, t, lam, om)) < 1e-10
    c = decay_factor(ctx, j, xi, x, lam) * decay_factor(ctx, j, eta, xi, lam)
    assert c == pytest.approx(decay_factor(ctx, j, eta, x, lam), rel=1e-10)


def test_monotone_in_xi(vctx):
    xs = np.linspace(0, 1, 201)
    for j, sign in ((0, -1), (1, 1)):
        tau = char_time(vctx, j, xs, 0.5, 0.0, 0.4, 2.0)
        assert np.all(np.sign(np.diff(tau)) == sign)


_cache = {}


def _shared_v():
    if "v" not in _cache:
        spec = SystemSpec.from_strings(
            2, 1, ["-(1 + x^2)", "2 + sin(3*x)"], ["(lambda + x)*u1 - u2", "-exp(x)*u2 + u1^2"],
            [[0, 0.7], [0.4, 0]])
        _cache["v"] = CharContext(spec)
    return _cache["v"]


def test_char_position_inverts_char_time(vctx):
    x = np.linspace(0, 1, 41)
    xi, inside = char_position(vctx, 1, x, -0.05, 0.4)
    ok = np.asarray(inside)
    assert ok.any() and not ok.all()
    d = vctx.P(1, xi[ok], 0.4) - vctx.P(1, x[ok], 0.4)
    np.testing.assert_allclose(d, -0.05, atol=1e-12)


def test_remainder_example(ctx):
    x = np.linspace(0, 1, 7)
    u1, u2 = 0.3 + x, 1 - 2 * x
    f = remainder_f(ctx, x, 0.7, [u1, u2])
    np.testing.assert_allclose(f[0], u2 - (-1.0) * u1 ** 3, rtol=1e-14)
    np.testing.assert_array_equal(f[1], 0 * x)
    np.testing.assert_array_equal(remainder_f(ctx, x, 0.7, [0 * x, 0 * x]), 0)


def test_remainder_diagonal_derivative_vanishes(vctx):
    h = 1e-6
    for x in (0.1, 0.55, 0.9):
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            up = remainder_f(vctx, x, 0.4, e)[j]
            dn = remainder_f(vctx, x, 0.4, -e)[j]
            assert abs((up - dn) / (2 * h)) < 1e-8


def test_dissipativity_example(ctx):
    d = dissipativity(ctx, 1.532)
    assert d.R0 == 0.0
    assert abs(d.R1 - 1.0) < 1e-12
    assert d.ok


def test_dissipativity_no_reflection():
    s = SystemSpec.from_strings(2, 1, ["-1", "1"], ["u1", "u2"], [[0, 0], [0, 0]])
    d = dissipativity(CharContext(s), 0.0)
    assert d.R0 == 0.0 and d.R1 == 0.0 and d.ok


def test_dissipativity_violation():
    # a strong reflection at x = 0 on top of the example: R0 >= 2, R1 = 1
    s = SystemSpec.from_strings(2, 1, ["-1", "1"], ["lambda*u1 - u2", "0"], [[0, 2.0], [1, 0]])
    d = dissipativity(CharContext(s), 1.5)
    assert d.R0 == pytest.approx(2 * np.exp(1.5), rel=1e-12)
    assert not d.ok
