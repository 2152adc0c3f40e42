"""Domain types, default functional forms and scenario validation.

The ecosystem service ``s`` is normal with biodiversity-conditional moments

    mu_s(v)    = mu_max * (1 - exp(-k_mu * v))
    sigma_s(v) = sigma_0 * exp(-k_sigma * v)

and the manager's income is ``y = s - C(v)`` with ``C(v) = c1 v + c2 v**2``.
The price of carbon is fixed at 1, so service units and money coincide.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping

import numpy as np


class ScenarioError(ValueError):
    """Invalid scenario input. ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path} {message}")

    def under(self, prefix: str) -> "ScenarioError":
        """Same error re-rooted below ``prefix``."""
        return ScenarioError(f"{prefix}.{self.path}", self.message)


@dataclass(frozen=True)
class ServiceModel:
    mu_max: float
    k_mu: float
    sigma_0: float
    k_sigma: float

    def moments(self, v):
        """Return ``(mu, sigma, dmu, dsigma)`` at ``v`` (scalar or array)."""
        e_mu = np.exp(-self.k_mu * v)
        sigma = self.sigma_0 * np.exp(-self.k_sigma * v)
        mu = self.mu_max * (1.0 - e_mu)
        dmu = self.mu_max * self.k_mu * e_mu
        dsigma = -self.k_sigma * sigma
        return mu, sigma, dmu, dsigma


@dataclass(frozen=True)
class CostModel:
    c1: float = 0.0
    c2: float = 0.0

    def evaluate(self, v):
        return self.c1 * v + self.c2 * v * v, self.c1 + 2.0 * self.c2 * v


@dataclass(frozen=True)
class RiskPreference:
    rho: float


@dataclass(frozen=True)
class InsuranceContract:
    alpha: float
    lam: float = 0.0


@dataclass(frozen=True)
class InsuranceMarket:
    """Price side of a financial insurance market; coverage is chosen by the optimizer."""

    lam: float


@dataclass(frozen=True)
class ScenarioSpec:
    service: ServiceModel
    cost: CostModel
    preference: RiskPreference
    v_bounds: tuple[float, float]
    market: InsuranceMarket | None = None
    extras: Mapping[str, Any] = field(default_factory=dict, compare=False, repr=False)

    @property
    def v_lo(self) -> float:
        return self.v_bounds[0]

    @property
    def v_hi(self) -> float:
        return self.v_bounds[1]

    @property
    def rho(self) -> float:
        return self.preference.rho

    def replace(self, **changes) -> "ScenarioSpec":
        """Copy with nested overrides, e.g. ``replace(sigma_0=1.0, rho=2.0)``."""
        groups = {
            "service": (ServiceModel, self.service),
            "cost": (CostModel, self.cost),
            "preference": (RiskPreference, self.preference),
        }
        parts = {"service": self.service, "cost": self.cost, "preference": self.preference}
        top = {}
        for key, value in changes.items():
            for name, (cls, current) in groups.items():
                if key in cls.__dataclass_fields__:
                    parts[name] = type(current)(**{**asdict(parts[name]), key: value})
                    break
            else:
                top[key] = value
        return ScenarioSpec(
            service=parts["service"],
            cost=parts["cost"],
            preference=parts["preference"],
            v_bounds=top.pop("v_bounds", self.v_bounds),
            market=top.pop("market", self.market),
            extras=top.pop("extras", self.extras),
        )


def eval_service_moments(service: ServiceModel, v: float) -> tuple[float, float, float, float]:
    if v < 0:
        raise ScenarioError("v", "must be >= 0")
    return tuple(float(x) for x in service.moments(float(v)))


def eval_cost(cost: CostModel, v: float) -> tuple[float, float]:
    if v < 0:
        raise ScenarioError("v", "must be >= 0")
    c, dc = cost.evaluate(float(v))
    return float(c), float(dc)


def check_v(scenario: ScenarioSpec, v: float) -> float:
    v = float(v)
    if not (scenario.v_lo <= v <= scenario.v_hi):
        raise ScenarioError("v", f"{v!r} outside v_bounds [{scenario.v_lo}, {scenario.v_hi}]")
    return v


def _finite(path: str, x) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float, np.floating, np.integer)):
        raise ScenarioError(path, "must be a number")
    x = float(x)
    if not math.isfinite(x):
        raise ScenarioError(path, "must be finite")
    return x


def _positive(path, x):
    if _finite(path, x) <= 0:
        raise ScenarioError(path, "must be > 0")


def _nonneg(path, x):
    if _finite(path, x) < 0:
        raise ScenarioError(path, "must be >= 0")


def validate_scenario(raw: ScenarioSpec) -> ScenarioSpec:
    """Return ``raw`` unchanged if every invariant holds, else raise ScenarioError."""
    s = raw.service
    _positive("service.mu_max", s.mu_max)
    _positive("service.k_mu", s.k_mu)
    _positive("service.sigma_0", s.sigma_0)
    _nonneg("service.k_sigma", s.k_sigma)
    _nonneg("cost.c1", raw.cost.c1)
    _nonneg("cost.c2", raw.cost.c2)
    _nonneg("preference.rho", raw.preference.rho)
    if raw.market is not None:
        _nonneg("market.lambda", raw.market.lam)
    try:
        lo, hi = raw.v_bounds
    except (TypeError, ValueError):
        raise ScenarioError("v_bounds", "must be a pair [v_lo, v_hi]") from None
    _nonneg("v_bounds[0]", lo)
    _finite("v_bounds[1]", hi)
    if not lo < hi:
        raise ScenarioError("v_bounds", f"must satisfy v_lo < v_hi, got [{lo}, {hi}]")
    return raw


def validate_contract(contract: InsuranceContract) -> InsuranceContract:
    a = _finite("contract.alpha", contract.alpha)
    if not 0.0 <= a <= 1.0:
        raise ScenarioError("contract.alpha", "must lie in [0, 1]")
    _nonneg("contract.lambda", contract.lam)
    return contract


# -- JSON -----------------------------------------------------------------

_SECTIONS = {
    "service": ("mu_max", "k_mu", "sigma_0", "k_sigma"),
    "cost": ("c1", "c2"),
    "preference": ("rho",),
}
# Optional top-level blocks consumed by the simulate and resilience commands.
EXTRA_KEYS = ("buffer_pool", "resilience")


def _section(doc: Mapping, name: str, keys: tuple[str, ...]) -> dict:
    block = doc.get(name)
    if not isinstance(block, Mapping):
        raise ScenarioError(name, "must be an object")
    unknown = sorted(set(block) - set(keys))
    if unknown:
        raise ScenarioError(f"{name}.{unknown[0]}", "is not a recognised field")
    missing = [k for k in keys if k not in block]
    if missing:
        raise ScenarioError(f"{name}.{missing[0]}", "is required")
    return {k: _finite(f"{name}.{k}", block[k]) for k in keys}


def scenario_from_dict(doc: Mapping[str, Any]) -> ScenarioSpec:
    """Build and validate a scenario from its JSON document form."""
    if not isinstance(doc, Mapping):
        raise ScenarioError("<root>", "must be a JSON object")
    allowed = set(_SECTIONS) | {"market", "v_bounds"} | set(EXTRA_KEYS)
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ScenarioError(unknown[0], "is not a recognised field")

    market = None
    if doc.get("market") is not None:
        m = doc["market"]
        if not isinstance(m, Mapping):
            raise ScenarioError("market", "must be an object or null")
        bad = sorted(set(m) - {"lambda"})
        if bad:
            raise ScenarioError(f"market.{bad[0]}", "is not a recognised field")
        if "lambda" not in m:
            raise ScenarioError("market.lambda", "is required")
        market = InsuranceMarket(lam=_finite("market.lambda", m["lambda"]))

    bounds = doc.get("v_bounds")
    if not isinstance(bounds, (list, tuple)) or len(bounds) != 2:
        raise ScenarioError("v_bounds", "must be a pair [v_lo, v_hi]")
    bounds = (_finite("v_bounds[0]", bounds[0]), _finite("v_bounds[1]", bounds[1]))

    spec = ScenarioSpec(
        service=ServiceModel(**_section(doc, "service", _SECTIONS["service"])),
        cost=CostModel(**_section(doc, "cost", _SECTIONS["cost"])),
        preference=RiskPreference(**_section(doc, "preference", _SECTIONS["preference"])),
        v_bounds=bounds,
        market=market,
        extras={k: doc[k] for k in EXTRA_KEYS if k in doc},
    )
    return validate_scenario(spec)


def scenario_to_dict(spec: ScenarioSpec, include_extras: bool = True) -> dict:
    doc = {
        "service": asdict(spec.service),
        "cost": asdict(spec.cost),
        "preference": asdict(spec.preference),
        "market": None if spec.market is None else {"lambda": spec.market.lam},
        "v_bounds": list(spec.v_bounds),
    }
    if include_extras:
        doc.update(spec.extras)
    return doc


def load_scenario(path) -> ScenarioSpec:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ScenarioError("scenario_path", f"cannot be read: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError("<root>", f"is not valid JSON (line {exc.lineno}, column {exc.colno})") from None
    return scenario_from_dict(doc)


def dumps_scenario(spec: ScenarioSpec) -> str:
    return json.dumps(scenario_to_dict(spec), indent=2, ensure_ascii=False)
