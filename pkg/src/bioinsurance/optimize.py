"""Optimal biodiversity with and without financial insurance.

Objective is the certainty equivalent

    CE(v, alpha) = mu(v) - C(v) - lam*alpha*sigma(v) - rho/2 * (1-alpha)**2 * sigma(v)**2

With no market alpha = 0. With a market, alpha is profiled out analytically
(``optimal_coverage``), which leaves a smooth one-dimensional problem in v
whose derivative is ``foc_residual`` evaluated at alpha*(v) (envelope theorem).
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from .model import ScenarioError, ScenarioSpec, check_v, validate_scenario

logger = logging.getLogger(__name__)

FOC_TOL = 1e-8
WIDTH_TOL = 1e-10
MAX_ITER = 200
TIE_TOL = 1e-12
SCAN_POINTS = 513
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class NonConvergenceError(RuntimeError):
    def __init__(self, message: str, result: "OptimizationResult | None" = None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class OptimizationResult:
    v_star: float
    alpha_star: float
    ce_star: float
    foc_residual: float
    iterations: int
    converged: bool
    active_bound: str | None = None  # "lower", "upper" or None
    lam: float | None = None

    @property
    def interior(self) -> bool:
        return self.active_bound is None

    def to_dict(self) -> dict:
        return asdict(self)


def _coverage(rho: float, sigma: float, lam: float) -> float:
    price = rho * sigma
    if price > 0.0:
        return min(max(1.0 - lam / price, 0.0), 1.0)
    return 1.0 if lam == 0.0 else 0.0


def _ce_foc(scenario: ScenarioSpec, v: float, lam: float, alpha: float | None):
    """Scalar CE and dCE/dv. ``alpha=None`` means alpha = alpha*(v)."""
    s, c = scenario.service, scenario.cost
    rho = scenario.rho
    e_mu = math.exp(-s.k_mu * v)
    sigma = s.sigma_0 * math.exp(-s.k_sigma * v)
    dsigma = -s.k_sigma * sigma
    mean = s.mu_max * (1.0 - e_mu) - (c.c1 * v + c.c2 * v * v)
    dmean = s.mu_max * s.k_mu * e_mu - (c.c1 + 2.0 * c.c2 * v)
    a = _coverage(rho, sigma, lam) if alpha is None else alpha
    keep = 1.0 - a
    ce = mean - lam * a * sigma - 0.5 * rho * keep * keep * sigma * sigma
    foc = dmean - lam * a * dsigma - rho * keep * keep * sigma * dsigma
    return ce, foc, a


def certainty_equivalent_at(scenario: ScenarioSpec, v: float, alpha: float = 0.0, lam: float = 0.0) -> float:
    return _ce_foc(scenario, check_v(scenario, v), lam, alpha)[0]


def foc_residual(scenario: ScenarioSpec, v: float, alpha: float = 0.0, lam: float = 0.0) -> float:
    """dCE/dv at fixed ``alpha``; for alpha = 0 this is mu' + V(v) - C'."""
    if v < 0:
        raise ScenarioError("v", "must be >= 0")
    return _ce_foc(scenario, float(v), lam, alpha)[1]


def optimal_coverage(scenario: ScenarioSpec, v: float, lam: float) -> float:
    """Coverage fraction maximizing CE(v, alpha) for loading ``lam``."""
    if not lam >= 0:
        raise ScenarioError("lambda", "must be >= 0")
    v = check_v(scenario, v)
    if scenario.rho == 0 and lam == 0:
        raise ScenarioError("preference.rho", "is 0 with lambda 0: every coverage level is optimal")
    _, sigma, _, _ = scenario.service.moments(v)
    return _coverage(scenario.rho, float(sigma), lam)


def _bisect(scenario, lam, alpha, a, b, iterations):
    fa = _ce_foc(scenario, a, lam, alpha)[1]
    while iterations < MAX_ITER:
        iterations += 1
        m = 0.5 * (a + b)
        fm = _ce_foc(scenario, m, lam, alpha)[1]
        if fm == 0.0:
            return m, iterations
        if (fm > 0.0) == (fa > 0.0):
            a, fa = m, fm
        else:
            b = m
        if b - a <= WIDTH_TOL:
            break
    return 0.5 * (a + b), iterations


def _golden(scenario, lam, alpha, a, b, iterations):
    f = lambda x: _ce_foc(scenario, x, lam, alpha)[0]  # noqa: E731
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > WIDTH_TOL and iterations < MAX_ITER:
        iterations += 1
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b), iterations


def _maximize(scenario: ScenarioSpec, lam: float, insured: bool) -> OptimizationResult:
    validate_scenario(scenario)
    lo, hi = scenario.v_bounds
    s, c = scenario.service, scenario.cost
    alpha = None if insured else 0.0
    grid = np.linspace(lo, hi, SCAN_POINTS)
    _, foc, _ = _kernels.ce_grid(
        grid, s.mu_max, s.k_mu, s.sigma_0, s.k_sigma, c.c1, c.c2, scenario.rho, lam, insured
    )
    pos = foc > 0.0
    down = np.flatnonzero(pos[:-1] & ~pos[1:])  # + to <=0 : local max bracket
    up = np.flatnonzero(~pos[:-1] & pos[1:])
    iterations = 0

    candidates = [lo, hi]
    if len(down) == 1 and len(up) == 0:
        i = int(down[0])
        v, iterations = _bisect(scenario, lam, alpha, float(grid[i]), float(grid[i + 1]), 0)
        candidates.append(v)
    elif len(down) or len(up):
        # several stationary points: refine each local-max bracket
        for i in down:
            v, iterations = _bisect(scenario, lam, alpha, float(grid[i]), float(grid[i + 1]), iterations)
            candidates.append(v)
        ce_grid = np.array([_ce_foc(scenario, float(x), lam, alpha)[0] for x in grid])
        j = int(np.argmax(ce_grid))
        if 0 < j < len(grid) - 1:
            v, iterations = _golden(scenario, lam, alpha, float(grid[j - 1]), float(grid[j + 1]), iterations)
            candidates.append(v)

    values = [(_ce_foc(scenario, v, lam, alpha), v) for v in candidates]
    best = max(ce for (ce, _, _), _ in values)
    v_star = min(v for (ce, _, _), v in values if ce >= best - TIE_TOL)
    ce_star, residual, a_star = _ce_foc(scenario, v_star, lam, alpha)

    bound = "lower" if v_star == lo else "upper" if v_star == hi else None
    converged = bound is not None or abs(residual) <= FOC_TOL
    if iterations >= MAX_ITER and bound is None:
        converged = False
    result = OptimizationResult(
        v_star=v_star,
        alpha_star=float(a_star),
        ce_star=ce_star,
        foc_residual=residual,
        iterations=iterations,
        converged=converged,
        active_bound=bound,
        lam=lam if insured else None,
    )
    if not converged:
        logger.warning("optimizer did not converge: %s", result)
    return result


def optimal_biodiversity(scenario: ScenarioSpec) -> OptimizationResult:
    """Maximize CE(v) = mu - C - rho/2 sigma**2 over v_bounds, no insurance market."""
    return _maximize(scenario, 0.0, insured=False)


def joint_optimum(scenario: ScenarioSpec, lam: float) -> OptimizationResult:
    """Jointly choose v and coverage alpha when insurance costs ``lam`` per unit sd."""
    if not lam >= 0:
        raise ScenarioError("lambda", "must be >= 0")
    if scenario.rho == 0 and lam == 0:
        raise ScenarioError("preference.rho", "is 0 with lambda 0: coverage is indeterminate")
    return _maximize(scenario, float(lam), insured=True)


@dataclass(frozen=True)
class ComparisonRow:
    lam: float
    v_star_noins: float
    v_star_joint: float
    alpha_star: float
    ce_gain: float


def compare_regimes(scenario: ScenarioSpec, lambdas) -> tuple[OptimizationResult, list[OptimizationResult], list[ComparisonRow]]:
    """No-insurance optimum against the joint optimum for each loading."""
    base = optimal_biodiversity(scenario)
    joints, rows = [], []
    for lam in lambdas:
        j = joint_optimum(scenario, lam)
        joints.append(j)
        rows.append(ComparisonRow(float(lam), base.v_star, j.v_star, j.alpha_star, j.ce_star - base.ce_star))
    return base, joints, rows
