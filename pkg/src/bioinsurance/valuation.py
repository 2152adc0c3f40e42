"""Risk premium, certainty equivalent and the insurance value of biodiversity.

Utility is CARA, ``u(y) = -exp(-rho y) / rho``. For normal income the
certainty equivalent is exactly ``mean - rho/2 * sd**2``, so the insurance
value ``V(v) = -dR/dv`` has the closed form ``-rho * sigma(v) * sigma'(v)``.
A central-difference path on ``R`` is kept alongside as a cross-check.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .model import (
    InsuranceContract,
    RiskPreference,
    ScenarioError,
    ScenarioSpec,
    check_v,
    validate_contract,
)

DEFAULT_FD_STEP = 1e-5


@dataclass(frozen=True)
class IncomeDistribution:
    mean: float
    sd: float

    def __post_init__(self):
        if not self.sd >= 0:
            raise ScenarioError("dist.sd", "must be >= 0")


@dataclass(frozen=True)
class ValuationResult:
    v: float
    risk_premium: float
    certainty_equivalent: float
    insurance_value: float
    insurance_value_fd: float
    fd_step: float

    def to_dict(self) -> dict:
        return asdict(self)


def risk_premium(pref: RiskPreference, dist: IncomeDistribution) -> float:
    if pref.rho == 0 or dist.sd == 0:
        return 0.0
    return 0.5 * pref.rho * dist.sd * dist.sd


def certainty_equivalent(pref: RiskPreference, dist: IncomeDistribution) -> float:
    return dist.mean - risk_premium(pref, dist)


def net_income_distribution(
    scenario: ScenarioSpec, v: float, contract: InsuranceContract | None = None
) -> IncomeDistribution:
    """Moments of ``y = s - C(v)``, optionally after proportional coinsurance.

    With contract ``(alpha, lam)`` the insurer absorbs the fraction ``alpha`` of
    deviations from the mean and charges ``lam * alpha * sigma`` up front.
    """
    v = check_v(scenario, v)
    mu, sigma, _, _ = scenario.service.moments(v)
    cost, _ = scenario.cost.evaluate(v)
    mean = float(mu - cost)
    sd = float(sigma)
    if contract is not None:
        validate_contract(contract)
        mean -= contract.lam * contract.alpha * sd
        sd *= 1.0 - contract.alpha
    return IncomeDistribution(mean, sd)


def insurance_value(scenario: ScenarioSpec, v: float) -> float:
    v = check_v(scenario, v)
    _, sigma, _, dsigma = scenario.service.moments(v)
    value = -scenario.rho * sigma * dsigma
    return float(value) + 0.0  # normalise -0.0


def _premium_at(scenario: ScenarioSpec, v: float) -> float:
    _, sigma, _, _ = scenario.service.moments(v)
    return risk_premium(scenario.preference, IncomeDistribution(0.0, float(sigma)))


def insurance_value_fd(scenario: ScenarioSpec, v: float, h: float = DEFAULT_FD_STEP) -> float:
    """``-(R(v+h) - R(v-h)) / 2h`` with R the uninsured risk premium."""
    if not h > 0:
        raise ScenarioError("fd_step", "must be > 0")
    v = check_v(scenario, v)
    if v - h < scenario.v_lo or v + h > scenario.v_hi:
        raise ScenarioError("v", f"central stencil v +/- {h} leaves v_bounds")
    return -(_premium_at(scenario, v + h) - _premium_at(scenario, v - h)) / (2.0 * h)


def _insurance_value_fd_edge(scenario: ScenarioSpec, v: float, h: float) -> float:
    # Second-order one-sided stencils where the central one would leave bounds.
    if v - h >= scenario.v_lo and v + h <= scenario.v_hi:
        return insurance_value_fd(scenario, v, h)
    r = lambda x: _premium_at(scenario, x)  # noqa: E731
    if v - h < scenario.v_lo:
        slope = (-3.0 * r(v) + 4.0 * r(v + h) - r(v + 2 * h)) / (2.0 * h)
    else:
        slope = (3.0 * r(v) - 4.0 * r(v - h) + r(v - 2 * h)) / (2.0 * h)
    return -slope


def valuate(scenario: ScenarioSpec, v: float, h: float = DEFAULT_FD_STEP) -> ValuationResult:
    v = check_v(scenario, v)
    dist = net_income_distribution(scenario, v)
    return ValuationResult(
        v=v,
        risk_premium=risk_premium(scenario.preference, dist),
        certainty_equivalent=certainty_equivalent(scenario.preference, dist),
        insurance_value=insurance_value(scenario, v),
        insurance_value_fd=_insurance_value_fd_edge(scenario, v, h),
        fd_step=h,
    )


GRID_COLUMNS = ("v", "mu", "sigma", "cost", "R", "CE", "V", "V_fd")


def valuation_grid(
    scenario: ScenarioSpec, lo: float, hi: float, steps: int, h: float = DEFAULT_FD_STEP
) -> list[dict]:
    """Evaluate every grid column at ``steps`` evenly spaced points of [lo, hi]."""
    if steps < 1:
        raise ScenarioError("grid.steps", "must be >= 1")
    if not lo <= hi:
        raise ScenarioError("grid", "must satisfy lo <= hi")
    rows = []
    for v in np.linspace(lo, hi, steps) if steps > 1 else [lo]:
        res = valuate(scenario, float(v), h)
        mu, sigma, _, _ = scenario.service.moments(res.v)
        cost, _ = scenario.cost.evaluate(res.v)
        rows.append(
            {
                "v": res.v,
                "mu": float(mu),
                "sigma": float(sigma),
                "cost": float(cost),
                "R": res.risk_premium,
                "CE": res.certainty_equivalent,
                "V": res.insurance_value,
                "V_fd": res.insurance_value_fd,
            }
        )
    return rows
