import numpy as np
import pytest

from gridspect import (
    LoadScenarioSpec,
    build_admittance_ac,
    bundled_case,
    calibrate,
    decompose,
    make_historic,
    solve_ac,
)

# Epsilon budgets used throughout (real part, imaginary part).
EPSILONS = (1e-4, 1e-3)


@pytest.fixture(scope="session")
def ieee14():
    return bundled_case("ieee14")


@pytest.fixture(scope="session")
def ieee14_pair(ieee14):
    return decompose(build_admittance_ac(ieee14))


@pytest.fixture(scope="session")
def ieee14_state(ieee14):
    return solve_ac(ieee14)


@pytest.fixture(scope="session")
def historic100(ieee14):
    """100 clean states at the load spread used by the detector examples."""
    return make_historic(ieee14, LoadScenarioSpec(sigma=0.05, count=100, seed=11))


@pytest.fixture(scope="session")
def model_alpha2(ieee14_pair, historic100):
    return calibrate(ieee14_pair, historic100, EPSILONS, alpha_sigma=2.0)


@pytest.fixture(scope="session")
def fresh_pool(ieee14):
    """Clean states disjoint from the calibration draw (test-side Monte Carlo)."""
    return make_historic(ieee14, LoadScenarioSpec(sigma=0.05, count=300, seed=77))


def two_bus_case_text(p2=-0.5, q2=-0.1, r=0.0, x=0.5):
    return f"""{{
      "base_mva": 1.0,
      "buses": [
        {{"id": 1, "kind": "slack", "p": 0.0, "q": 0.0, "v": 1.0}},
        {{"id": 2, "kind": "pq", "p": {p2}, "q": {q2}}}
      ],
      "lines": [{{"from": 1, "to": 2, "r": {r}, "x": {x}}}]
    }}"""


def rms(x):
    return float(np.sqrt(np.mean(np.square(x))))
