from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import oracles  # noqa: E402

from hyperhopf.bifcoef import bifurcation_result  # noqa: E402
from hyperhopf.hopf import full_report  # noqa: E402
from hyperhopf.model import builtin_example  # noqa: E402

LAMBDA_RANGE = (0.0, 3.0)
REGION = ((-3.0, 1.0), (-16.0, 16.0))


@pytest.fixture(scope="session")
def roots():
    return oracles.chareq_roots()


@pytest.fixture(scope="session")
def a0(roots):
    return roots[0]


@pytest.fixture(scope="session")
def omega0(a0):
    return oracles.crossing_frequency(a0)


@pytest.fixture(scope="session")
def example():
    return builtin_example(-1.0)


@pytest.fixture(scope="session")
def report(example):
    return full_report(example, LAMBDA_RANGE, REGION)


@pytest.fixture(scope="session")
def bif(example, report):
    return bifurcation_result(example, report)
