"""Resilience-value components reported side by side.

    A  insurance value of biodiversity at a chosen v   (valuation module)
    B  expected avoided damage
    C  option value of keeping substitutable species, and the
       diversification benefit of a portfolio of service providers
    D  value of a risk-reducing management practice
    +  CE gap between two ecosystem states (regime shift)

Components overlap (A and C both capture variance reduction), so the report
never adds them up.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .model import ScenarioError, ScenarioSpec, scenario_from_dict, validate_scenario
from .optimize import optimal_biodiversity
from .valuation import insurance_value

PROB_TOL = 1e-9
SYM_TOL = 1e-9
PSD_TOL = 1e-8


def _num(path, x):
    if isinstance(x, bool) or not isinstance(x, (int, float, np.integer, np.floating)) or not math.isfinite(x):
        raise ScenarioError(path, "must be a finite number")
    return float(x)


@dataclass(frozen=True)
class HazardDamageSpec:
    event_probability: float
    damage_without: float
    damage_with: float
    periods: int = 1

    def __post_init__(self):
        if not 0 <= _num("hazard.event_probability", self.event_probability) <= 1:
            raise ScenarioError("hazard.event_probability", "must lie in [0, 1]")
        if _num("hazard.damage_without", self.damage_without) < 0:
            raise ScenarioError("hazard.damage_without", "must be >= 0")
        if _num("hazard.damage_with", self.damage_with) < 0:
            raise ScenarioError("hazard.damage_with", "must be >= 0")
        if self.damage_with > self.damage_without:
            raise ScenarioError("hazard.damage_with", "must not exceed damage_without")
        if isinstance(self.periods, bool) or not isinstance(self.periods, int) or self.periods < 1:
            raise ScenarioError("hazard.periods", "must be an integer >= 1")

    def expected_damage(self) -> float:
        """Expected unprotected damage over all periods."""
        return self.periods * self.event_probability * self.damage_without


def avoided_damage_value(spec: HazardDamageSpec) -> float:
    return spec.periods * spec.event_probability * (spec.damage_without - spec.damage_with)


@dataclass(frozen=True)
class RegimeScenario:
    probabilities: tuple[float, ...]
    service: np.ndarray  # (n_regimes, n_species)

    @classmethod
    def build(cls, regimes: Sequence) -> "RegimeScenario":
        """From ``[(probability, [service per species]), ...]`` or dicts with those keys."""
        if not regimes:
            raise ScenarioError("regimes", "must not be empty")
        probs, rows = [], []
        for i, r in enumerate(regimes):
            if isinstance(r, dict):
                extra = sorted(set(r) - {"probability", "service_by_species"})
                if extra:
                    raise ScenarioError(f"regimes[{i}].{extra[0]}", "is not a recognised field")
                p, row = r.get("probability"), r.get("service_by_species")
            else:
                p, row = r
            probs.append(_num(f"regimes[{i}].probability", p))
            rows.append([_num(f"regimes[{i}].service_by_species", x) for x in (row or [])])
        widths = {len(r) for r in rows}
        if 0 in widths:
            raise ScenarioError("regimes", "species set must not be empty")
        if len(widths) != 1:
            raise ScenarioError("regimes", "every regime must list the same species")
        probs_arr = np.array(probs)
        service = np.array(rows, dtype=float)
        if np.any(probs_arr < 0) or abs(math.fsum(probs) - 1.0) > PROB_TOL:
            raise ScenarioError("regimes.probability", "must be non-negative and sum to 1")
        if np.any(service < 0):
            raise ScenarioError("regimes.service_by_species", "must be >= 0")
        return cls(tuple(probs), service)

    @property
    def n_species(self) -> int:
        return self.service.shape[1]


def _expected_best(scenario: RegimeScenario, species: Sequence[int]) -> float:
    best = scenario.service[:, list(species)].max(axis=1)
    return math.fsum(p * x for p, x in zip(scenario.probabilities, best))


def option_value(scenario: RegimeScenario, retained: Sequence[int], reduced: Sequence[int]) -> float:
    """Expected gain from choosing the best species per regime out of ``retained``
    instead of ``reduced``."""
    retained, reduced = set(retained), set(reduced)
    if not retained or not reduced:
        raise ScenarioError("option.subsets", "must be non-empty")
    if not reduced <= retained:
        raise ScenarioError("option.reduced", "must be a subset of retained")
    if max(retained) >= scenario.n_species or min(retained) < 0:
        raise ScenarioError("option.retained", "refers to an unknown species")
    gap = _expected_best(scenario, sorted(retained)) - _expected_best(scenario, sorted(reduced))
    # max over a superset dominates regime by regime; only rounding can go below 0
    return max(gap, 0.0)


@dataclass(frozen=True)
class ServicePortfolio:
    weights: np.ndarray
    means: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        w, m, cov = (np.asarray(x, dtype=float) for x in (self.weights, self.means, self.covariance))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "covariance", cov)
        n = w.size
        if w.ndim != 1 or n == 0 or m.shape != (n,) or cov.shape != (n, n):
            raise ScenarioError("portfolio", "weights, means and covariance shapes disagree")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(m)) and np.all(np.isfinite(cov))):
            raise ScenarioError("portfolio", "entries must be finite")
        if np.any(w < 0) or abs(w.sum() - 1.0) > PROB_TOL:
            raise ScenarioError("portfolio.weights", "must be non-negative and sum to 1")
        if np.max(np.abs(cov - cov.T)) > SYM_TOL:
            raise ScenarioError("portfolio.covariance", "must be symmetric")
        if np.linalg.eigvalsh(0.5 * (cov + cov.T)).min() < -PSD_TOL:
            raise ScenarioError("portfolio.covariance", "must be positive semidefinite")


def portfolio_stats(p: ServicePortfolio) -> tuple[float, float, float]:
    """Mean, variance and the variance shortfall against perfectly correlated assets."""
    w, cov = p.weights, p.covariance
    mean = float(w @ p.means)
    variance = float(w @ cov @ w)
    sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    comonotone = float(w @ sd) ** 2
    return mean, variance, max(comonotone - variance, 0.0)


def _optimal_ce(scenario: ScenarioSpec) -> float:
    return optimal_biodiversity(validate_scenario(scenario)).ce_star


def practice_value(
    scenario: ScenarioSpec,
    hazard: HazardDamageSpec,
    modified_hazard: HazardDamageSpec,
    modified_scenario: ScenarioSpec,
) -> float:
    """Value of a practice that shifts the scenario and hazard parameters.

    Positive when the practice raises the optimal CE or lowers expected damage.
    """
    ce_gain = _optimal_ce(modified_scenario) - _optimal_ce(scenario)
    return ce_gain + (hazard.expected_damage() - modified_hazard.expected_damage())


def regime_delta(state_a: ScenarioSpec, state_b: ScenarioSpec) -> float:
    """CE at the optimum of state A minus CE at the optimum of state B."""
    return _optimal_ce(state_a) - _optimal_ce(state_b)


@dataclass(frozen=True)
class ResilienceReport:
    component_a_insurance_value: float
    component_b_avoided_damage: float
    component_c_option_value: float
    component_c_diversification: float
    component_d_practice_value: float
    regime_delta_ce: float

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ResilienceReport":
        return cls(**{k: float(doc[k]) for k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class ResilienceInputs:
    v: float
    hazard: HazardDamageSpec
    regimes: RegimeScenario
    retained: tuple[int, ...]
    reduced: tuple[int, ...]
    portfolio: ServicePortfolio
    modified_hazard: HazardDamageSpec
    modified_scenario: ScenarioSpec
    alternative_state: ScenarioSpec


def resilience_report(scenario: ScenarioSpec, inputs: ResilienceInputs) -> ResilienceReport:
    _, _, diversification = portfolio_stats(inputs.portfolio)
    return ResilienceReport(
        component_a_insurance_value=insurance_value(scenario, inputs.v),
        component_b_avoided_damage=avoided_damage_value(inputs.hazard),
        component_c_option_value=option_value(inputs.regimes, inputs.retained, inputs.reduced),
        component_c_diversification=diversification,
        component_d_practice_value=practice_value(
            scenario, inputs.hazard, inputs.modified_hazard, inputs.modified_scenario
        ),
        regime_delta_ce=regime_delta(scenario, inputs.alternative_state),
    )


_INPUT_KEYS = {
    "v", "hazard", "regimes", "retained", "reduced", "portfolio",
    "modified_hazard", "modified_scenario", "alternative_state",
}


def _hazard(doc, path) -> HazardDamageSpec:
    if not isinstance(doc, dict):
        raise ScenarioError(path, "must be an object")
    fields = set(HazardDamageSpec.__dataclass_fields__)
    extra = sorted(set(doc) - fields)
    if extra:
        raise ScenarioError(f"{path}.{extra[0]}", "is not a recognised field")
    try:
        return HazardDamageSpec(**doc)
    except TypeError:
        missing = sorted(fields - set(doc) - {"periods"})
        raise ScenarioError(f"{path}.{missing[0] if missing else '?'}", "is required") from None
    except ScenarioError as exc:
        raise ScenarioError(exc.path.replace("hazard", path, 1), exc.message) from None


def _indices(doc, path) -> tuple[int, ...]:
    if not isinstance(doc, list) or not all(isinstance(i, int) and not isinstance(i, bool) for i in doc):
        raise ScenarioError(path, "must be a list of species indices")
    return tuple(doc)


def resilience_inputs_from_dict(doc: dict, scenario: ScenarioSpec) -> ResilienceInputs:
    """Parse the ``resilience`` block of a scenario document.

    Missing optional blocks fall back to no-op values: modified inputs default
    to the originals and the alternative state defaults to the scenario itself.
    """
    if not isinstance(doc, dict):
        raise ScenarioError("resilience", "must be an object")
    extra = sorted(set(doc) - _INPUT_KEYS)
    if extra:
        raise ScenarioError(f"resilience.{extra[0]}", "is not a recognised field")
    for key in ("v", "hazard", "regimes", "portfolio"):
        if key not in doc:
            raise ScenarioError(f"resilience.{key}", "is required")

    hazard = _hazard(doc["hazard"], "resilience.hazard")
    regimes = RegimeScenario.build(doc["regimes"])
    n = regimes.n_species
    retained = _indices(doc.get("retained", list(range(n))), "resilience.retained")
    reduced = _indices(doc.get("reduced", list(retained)), "resilience.reduced")

    pf = doc["portfolio"]
    if not isinstance(pf, dict) or set(pf) != {"weights", "means", "covariance"}:
        raise ScenarioError("resilience.portfolio", "needs exactly weights, means, covariance")
    try:
        portfolio = ServicePortfolio(pf["weights"], pf["means"], pf["covariance"])
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise exc.under("resilience") from None
        raise ScenarioError("resilience.portfolio", "entries must be numeric arrays") from None

    def nested(key):
        if doc.get(key) is None:
            return scenario
        try:
            return scenario_from_dict(doc[key])
        except ScenarioError as exc:
            raise exc.under(f"resilience.{key}") from None

    modified_hazard = hazard if doc.get("modified_hazard") is None else _hazard(
        doc["modified_hazard"], "resilience.modified_hazard"
    )
    return ResilienceInputs(
        v=_num("resilience.v", doc["v"]),
        hazard=hazard,
        regimes=regimes,
        retained=retained,
        reduced=reduced,
        portfolio=portfolio,
        modified_hazard=modified_hazard,
        modified_scenario=nested("modified_scenario"),
        alternative_state=nested("alternative_state"),
    )
