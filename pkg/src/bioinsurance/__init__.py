"""Insurance value of biodiversity for forest-carbon projects."""

from ._kernels import backend
from .model import (
    CostModel,
    InsuranceContract,
    InsuranceMarket,
    RiskPreference,
    ScenarioError,
    ScenarioSpec,
    ServiceModel,
    eval_cost,
    eval_service_moments,
    load_scenario,
    scenario_from_dict,
    scenario_to_dict,
    validate_scenario,
)
from .montecarlo import (
    BufferPoolSpec,
    SamplerConfig,
    SimulationSummary,
    mc_certainty_equivalent,
    sample_service,
    simulate_buffer_pool,
)
from .optimize import (
    NonConvergenceError,
    OptimizationResult,
    foc_residual,
    joint_optimum,
    optimal_biodiversity,
    optimal_coverage,
)
from .resilience import (
    HazardDamageSpec,
    RegimeScenario,
    ResilienceReport,
    ServicePortfolio,
    avoided_damage_value,
    option_value,
    portfolio_stats,
    practice_value,
    regime_delta,
    resilience_report,
)
from .valuation import (
    IncomeDistribution,
    ValuationResult,
    certainty_equivalent,
    insurance_value,
    insurance_value_fd,
    net_income_distribution,
    risk_premium,
    valuate,
)

__version__ = "0.1.0"
