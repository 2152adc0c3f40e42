from pathlib import Path

import numpy as np
import pytest

from bioinsurance import CostModel, RiskPreference, ScenarioSpec, ServiceModel

SCENARIO_FILE = str(Path(__file__).resolve().parent.parent / "scenarios" / "mixed_forest.json")


def make_scenario(mu_max=10.0, k_mu=0.3, sigma_0=2.0, k_sigma=0.2, c1=0.0, c2=0.05, rho=1.0, bounds=(0.0, 50.0)):
    return ScenarioSpec(
        service=ServiceModel(mu_max, k_mu, sigma_0, k_sigma),
        cost=CostModel(c1, c2),
        preference=RiskPreference(rho),
        v_bounds=bounds,
    )


def random_scenario(rng, hi=30.0):
    return make_scenario(
        mu_max=rng.uniform(1.0, 20.0),
        k_mu=rng.uniform(0.05, 1.0),
        sigma_0=rng.uniform(0.2, 5.0),
        k_sigma=rng.uniform(0.02, 1.0),
        c1=rng.uniform(0.0, 0.5),
        c2=rng.uniform(0.001, 0.2),
        rho=rng.uniform(0.1, 5.0),
        bounds=(0.0, hi),
    )


@pytest.fixture
def base():
    """Scenario whose uninsured optimum sits near v = 5.888."""
    return make_scenario()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
