import numpy as np
import pytest

from hyperhopf import hopf
from hyperhopf.model import SystemSpec, builtin_example

from conftest import LAMBDA_RANGE, REGION


def _with_loop(omega0):
    """The example plus a decoupled transport loop whose spectrum is 2 i k omega0."""
    s = 2 * omega0 / np.pi
    R = np.zeros((4, 4))
    R[2, 0] = R[3, 1] = R[1, 3] = 1.0
    return SystemSpec.from_strings(
        4, 2, ["-1", f"-{s!r}", "1", repr(s)], ["lambda*u1 - u3 - u1^3", "0", "0", "0"], R)


def test_crossing_matches_oracle(report, a0, omega0):
    assert abs(report.lambda0 - a0) < 1e-8
    assert abs(report.omega0 - omega0) < 1e-8
    assert report.verdict and report.failed == []


def test_real_part_moves_affinely(example, roots):
    # every branch of the example has d Re mu / d lambda = 1/2
    a0 = roots[0]
    for a in roots[:3]:
        for lam in np.linspace(a0 - 0.5, a0 + 0.5, 5):
            mu = complex(0.5 * (lam - a), 0.5 * np.sqrt(np.exp(2 * a) - (1 - a) ** 2))
            assert hopf.alpha_finite_difference(example, mu, lam) == pytest.approx(0.5, abs=1e-6)


def test_locate_is_deterministic(example):
    a = hopf.locate_crossing(example, LAMBDA_RANGE, REGION)
    b = hopf.locate_crossing(example, LAMBDA_RANGE, REGION)
    assert a == b


def test_no_crossing_in_short_range(example):
    with pytest.raises(hopf.NoCrossingError):
        hopf.locate_crossing(example, (0.0, 1.0), REGION)


def test_unstable_start(example):
    with pytest.raises(hopf.UnstableStartError):
        hopf.locate_crossing(example, (2.0, 3.0), REGION)


def test_two_copies_cross_together(a0):
    s = SystemSpec.from_strings(
        4, 2, ["-1", "-1", "1", "1"],
        ["lambda*u1 - u3 - u1^3", "lambda*u2 - u4 - u2^3", "0", "0"],
        [[0, 0, 0, 0], [0, 0, 0, 0], [1, 0, 0, 0], [0, 1, 0, 0]])
    with pytest.raises(hopf.MultipleCrossingError) as info:
        hopf.locate_crossing(s, LAMBDA_RANGE, ((-3.0, 1.0), (-6.0, 6.0)))
    assert info.value.hypothesis == "geometric_simplicity"
    assert abs(info.value.crossings[0].lambda0 - a0) < 1e-8
    assert not hopf.check_geometric(s, a0, info.value.crossings[0].omega0).ok


def test_geometric_and_algebraic_checks(example, report):
    assert hopf.check_geometric(example, report.lambda0, report.omega0).ok
    ok, p = hopf.check_algebraic(report.pair)
    assert ok and abs(p - 2) < 1e-10


def test_alpha(report):
    assert report.alpha == pytest.approx(0.5, abs=1e-6)
    assert abs(report.alpha - report.alpha_fd) < 1e-5


def test_nonresonance_example(report):
    assert report.nonresonant and report.k_max == 20
    assert report.nearest_distance > 1e-3


def test_nonresonance_failure(a0, omega0):
    chk = hopf.check_nonresonance(_with_loop(omega0), a0, omega0, k_max=6)
    assert not chk.ok
    ks = sorted({k for k, _ in chk.offenders})
    assert ks == [-6, -4, -2, 0, 2, 4, 6]
    assert chk.nearest_distance < 1e-6


def test_dissipativity_failure_reported():
    s = SystemSpec.from_strings(2, 1, ["-1", "1"], ["lambda*u1 - u2 - u1^3", "0"], [[0, 2.0], [1, 0]])
    rep = hopf.full_report(s, (-2.0, 3.0), ((-3.0, 1.0), (-8.0, 8.0)), k_max=2)
    assert "dissipativity" in rep.failed
    assert not rep.verdict
    assert rep.R0 * rep.R1 >= 1


def test_cubic_free_system_has_same_verdict(report):
    rep = hopf.full_report(builtin_example(0.0), LAMBDA_RANGE, REGION, k_max=4)
    assert rep.verdict
    assert rep.lambda0 == pytest.approx(report.lambda0, abs=1e-12)
    assert rep.alpha == pytest.approx(report.alpha, abs=1e-10)


def test_report_dict(report):
    d = report.to_dict()
    assert set(d["failed"]) == set()
    assert d["dissipativity"]["R0"] == 0.0
    assert d["transversality"]["alpha"] == report.alpha
    assert d["verdict"] is True
