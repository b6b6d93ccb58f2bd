import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperhopf.model import SpecError, SystemSpec, builtin_example, deriv_tensors, validate


def _two(speeds=("-1", "1"), rhs=("lambda*u1 - u2", "0")):
    return SystemSpec.from_strings(2, 1, list(speeds), list(rhs), [[0, 0], [1, 0]])


def test_builtin_example_is_valid():
    rep = validate(builtin_example(-1.0))
    assert rep.ok and rep.first is None


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5, allow_nan=False))
def test_builtin_valid_for_any_gamma(gamma):
    assert validate(builtin_example(gamma), grid_points=32).ok


def test_vanishing_speed_located():
    rep = validate(_two(speeds=("x - 0.5", "1")))
    v = rep.first
    assert v.hypothesis == "nonvanishing_speed"
    assert v.x == pytest.approx(0.5, abs=1e-9)
    assert v.component == (0,)


def test_trivial_solution_violation():
    rep = validate(_two(rhs=("lambda + u1", "0")))
    assert "trivial_solution" in {v.hypothesis for v in rep.violations}


def test_equal_speeds_violation():
    rep = validate(_two(speeds=("1", "1")))
    assert "distinct_speeds" in {v.hypothesis for v in rep.violations}


def test_validate_grid_precondition():
    with pytest.raises(ValueError):
        validate(builtin_example(), grid_points=8)


def test_forbidden_reflection_block_rejected():
    with pytest.raises(SpecError, match=r"r\[1\]\[1\]"):
        SystemSpec.from_strings(2, 1, ["-1", "1"], ["u1", "0"], [[0.5, 0], [1, 0]])


def test_builtin_values():
    s = builtin_example(-1.0)
    assert s.n == 2 and s.m == 1
    assert s.rhs_fn(0)(0.3, 0.0, 1.0, 1.0) == -2.0
    np.testing.assert_array_equal(s.reflection, [[0, 0], [1, 0]])
    assert s.orientation(0.0) == -1


def test_builtin_tensors():
    for gamma in (-1.0, 0.0, 2.5):
        T = deriv_tensors(builtin_example(gamma), np.array(0.4), lam=0.0)
        np.testing.assert_array_equal(T.bjk, [[0, -1], [0, 0]])
        assert not T.bjkl.any()
        expect = np.zeros((2, 2, 2, 2))
        expect[0, 0, 0, 0] = 6 * gamma
        np.testing.assert_array_equal(T.bjklr, expect)
        np.testing.assert_array_equal(T.dlam_bjk, [[1, 0], [0, 0]])
        np.testing.assert_array_equal(T.dlam_a, [0, 0])


def test_tensors_recentred_at_lambda():
    T = deriv_tensors(builtin_example(), np.array(0.1), lam=1.5)
    assert T.bjk[0, 0] == 1.5


def test_tensor_symmetry_random_points():
    s = SystemSpec.from_strings(
        3, 1, ["-1-x", "1", "2+x"],
        ["sin(x)*u1*u2*u3 + u2^2*u1 + lambda*u1", "x*u1*u3^2 - u2", "exp(x)*u1*u2 + u3^3*x"],
        [[0, 1, 0.5], [1, 0, 0], [0.2, 0, 0]],
    )
    xs = np.random.default_rng(1).random(100)
    T = deriv_tensors(s, xs)
    for p in itertools.permutations(range(2)):
        np.testing.assert_array_equal(T.bjkl, np.transpose(T.bjkl, (0, 1 + p[0], 1 + p[1], 3)))
    for p in itertools.permutations(range(3)):
        np.testing.assert_array_equal(T.bjklr, np.transpose(T.bjklr, (0, *(1 + np.array(p)), 4)))


def test_config_round_trip():
    s = builtin_example(0.25)
    cfg = s.to_config()
    again = SystemSpec.from_strings(**cfg)
    x = np.linspace(0, 1, 5)
    np.testing.assert_array_equal(again.rhs_at(x, 0.3, [x, 1 - x]), s.rhs_at(x, 0.3, [x, 1 - x]))
