"""Seeded sampling and the buffer-pool reversal simulator.

Randomness comes from numpy's counter-based Philox generator. The 128-bit key
is ``(seed, stream_id)`` and every independent unit of work (a block of
samples, or one buffer-pool trial) owns its own counter range. Work can
therefore be spread over any number of threads and still reproduce the same
bits as a serial run.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from .model import InsuranceContract, RiskPreference, ScenarioError, ScenarioSpec, check_v
from .valuation import IncomeDistribution, net_income_distribution

BLOCK_SIZE = 1 << 16
_U64 = (1 << 64) - 1

# counter word 3 tags what a substream is used for
_PURPOSE_SAMPLES = 0
_PURPOSE_BUFFER = 1


@dataclass(frozen=True)
class SamplerConfig:
    n_samples: int = 100_000
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            x = getattr(self, name)
            if isinstance(x, bool) or not isinstance(x, int) or not 0 <= x <= _U64:
                raise ScenarioError(f"sampler.{name}", "must be an unsigned 64-bit integer")
        if isinstance(self.n_samples, bool) or not isinstance(self.n_samples, int) or self.n_samples < 1:
            raise ScenarioError("sampler.n_samples", "must be an integer >= 1")


def substream(cfg: SamplerConfig, index: int, purpose: int) -> np.random.Generator:
    """Independent generator for work unit ``index``."""
    key = cfg.seed | (cfg.stream_id << 64)
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, index, purpose]))


def _map_blocks(fn, n_blocks: int, workers: int) -> list:
    if workers <= 1 or n_blocks <= 1:
        return [fn(i) for i in range(n_blocks)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_blocks)))


def standard_normals(cfg: SamplerConfig, workers: int = 1) -> np.ndarray:
    n = cfg.n_samples
    n_blocks = -(-n // BLOCK_SIZE)

    def block(i):
        size = min(BLOCK_SIZE, n - i * BLOCK_SIZE)
        return substream(cfg, i, _PURPOSE_SAMPLES).standard_normal(size)

    return np.concatenate(_map_blocks(block, n_blocks, workers))


@dataclass(frozen=True)
class SampleStats:
    mean: float
    sd: float
    min: float
    max: float
    n: int


def sample_service(scenario: ScenarioSpec, v: float, cfg: SamplerConfig, workers: int = 1) -> SampleStats:
    """Draw ``cfg.n_samples`` service outcomes at biodiversity ``v``."""
    v = check_v(scenario, v)
    mu, sigma, _, _ = scenario.service.moments(v)
    s = mu + sigma * standard_normals(cfg, workers)
    sd = float(s.std(ddof=1)) if s.size > 1 else 0.0
    return SampleStats(float(s.mean()), sd, float(s.min()), float(s.max()), int(s.size))


def mc_certainty_equivalent_dist(
    pref: RiskPreference, dist: IncomeDistribution, cfg: SamplerConfig, workers: int = 1
) -> tuple[float, float]:
    """Monte Carlo CE of normal income under CARA utility, with delta-method stderr.

    Exponents are taken relative to a centre chosen by the kernel, so the
    estimate stays finite however large ``rho * y`` gets and keeps full
    precision as rho approaches 0.
    """
    y = dist.mean + dist.sd * standard_normals(cfg, workers)
    n = y.size
    if pref.rho == 0:
        se = float(y.std(ddof=1)) / math.sqrt(n) if n > 1 else 0.0
        return float(y.mean()), se
    centre, s1, s2 = _kernels.cara_stats(y, pref.rho)
    g = s1 / n  # mean of exp(-rho (y - centre)) minus one
    ce = centre - math.log1p(g) / pref.rho
    if n < 2:
        return float(ce), 0.0
    var = max((s2 - n * g * g) / (n - 1), 0.0)
    return float(ce), math.sqrt(var / n) / (pref.rho * (1.0 + g))


def mc_certainty_equivalent(
    scenario: ScenarioSpec,
    v: float,
    contract: InsuranceContract | None,
    cfg: SamplerConfig,
    workers: int = 1,
) -> tuple[float, float]:
    dist = net_income_distribution(scenario, v, contract)
    return mc_certainty_equivalent_dist(scenario.preference, dist, cfg, workers)


# -- buffer pool ------------------------------------------------------------


@dataclass(frozen=True)
class BufferPoolSpec:
    issuance_per_period: float
    buffer_fraction: float
    reversal_probability: float
    reversal_severity: float
    horizon: int

    def __post_init__(self):
        def num(name):
            x = getattr(self, name)
            if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
                raise ScenarioError(f"buffer_pool.{name}", "must be a finite number")
            return x

        if num("issuance_per_period") <= 0:
            raise ScenarioError("buffer_pool.issuance_per_period", "must be > 0")
        if not 0 <= num("buffer_fraction") <= 1:
            raise ScenarioError("buffer_pool.buffer_fraction", "must lie in [0, 1]")
        if not 0 <= num("reversal_probability") <= 1:
            raise ScenarioError("buffer_pool.reversal_probability", "must lie in [0, 1]")
        if not 0 < num("reversal_severity") <= 1:
            raise ScenarioError("buffer_pool.reversal_severity", "must lie in (0, 1]")
        if isinstance(self.horizon, bool) or not isinstance(self.horizon, int) or self.horizon < 1:
            raise ScenarioError("buffer_pool.horizon", "must be an integer >= 1")

    @classmethod
    def from_dict(cls, doc, **overrides) -> "BufferPoolSpec":
        if not isinstance(doc, dict):
            raise ScenarioError("buffer_pool", "must be an object")
        names = set(cls.__dataclass_fields__)
        unknown = sorted(set(doc) - names)
        if unknown:
            raise ScenarioError(f"buffer_pool.{unknown[0]}", "is not a recognised field")
        merged = {**doc, **{k: v for k, v in overrides.items() if v is not None}}
        missing = sorted(names - set(merged))
        if missing:
            raise ScenarioError(f"buffer_pool.{missing[0]}", "is required")
        return cls(**merged)


@dataclass(frozen=True)
class SimulationSummary:
    shortfall_probability: float
    expected_terminal_buffer: float
    expected_net_credits: float
    trials: int
    stderr_shortfall: float
    expected_deficit: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BufferPoolTrials:
    """Per-trial ledgers, one entry per trial."""

    sold: np.ndarray
    terminal_buffer: np.ndarray
    absorbed: np.ndarray
    deficit: np.ndarray
    reversed: np.ndarray
    shortfall: np.ndarray

    @property
    def issued(self) -> np.ndarray:
        return self.sold + self.terminal_buffer + self.absorbed


def reversal_uniforms(horizon: int, trials: int, cfg: SamplerConfig, workers: int = 1) -> np.ndarray:
    """Uniform draws deciding reversals; row i depends only on (seed, stream_id, i)."""
    chunk = 1024
    n_chunks = -(-trials // chunk)

    def fill(c):
        rows = range(c * chunk, min((c + 1) * chunk, trials))
        return np.stack([substream(cfg, i, _PURPOSE_BUFFER).random(horizon) for i in rows])

    return np.concatenate(_map_blocks(fill, n_chunks, workers))


def run_buffer_pool(spec: BufferPoolSpec, trials: int, cfg: SamplerConfig, workers: int = 1) -> BufferPoolTrials:
    if isinstance(trials, bool) or not isinstance(trials, int) or trials < 1:
        raise ScenarioError("trials", "must be an integer >= 1")
    u = reversal_uniforms(spec.horizon, trials, cfg, workers)
    out = _kernels.buffer_pool(
        u,
        float(spec.issuance_per_period),
        float(spec.buffer_fraction),
        float(spec.reversal_probability),
        float(spec.reversal_severity),
    )
    return BufferPoolTrials(*out)


def summarize(ledger: BufferPoolTrials) -> SimulationSummary:
    n = ledger.shortfall.size
    p_hat = float(np.mean(ledger.shortfall))
    return SimulationSummary(
        shortfall_probability=p_hat,
        expected_terminal_buffer=float(np.mean(ledger.terminal_buffer)),
        expected_net_credits=float(np.mean(ledger.sold - ledger.deficit)),
        trials=n,
        stderr_shortfall=math.sqrt(p_hat * (1.0 - p_hat) / n),
        expected_deficit=float(np.mean(ledger.deficit)),
    )


def simulate_buffer_pool(spec: BufferPoolSpec, trials: int, cfg: SamplerConfig, workers: int = 1) -> SimulationSummary:
    """Shortfall statistics of a single-project buffer pool over ``trials`` paths."""
    return summarize(run_buffer_pool(spec, trials, cfg, workers))


TRAJECTORY_COLUMNS = ("trial", "period", "issued", "buffer", "reversal", "deficit")


def buffer_pool_trajectory(spec: BufferPoolSpec, trial: int, cfg: SamplerConfig) -> list[dict]:
    """Period-by-period ledger of one trial, using that trial's own substream."""
    u = substream(cfg, trial, _PURPOSE_BUFFER).random(spec.horizon)
    stored = buf = 0.0
    rows = []
    for t in range(spec.horizon):
        stored += spec.issuance_per_period
        buf += spec.buffer_fraction * spec.issuance_per_period
        loss = spec.reversal_severity * stored if u[t] < spec.reversal_probability else 0.0
        stored -= loss
        covered = min(loss, buf)
        buf -= covered
        rows.append(
            {
                "trial": trial,
                "period": t + 1,
                "issued": spec.issuance_per_period,
                "buffer": buf,
                "reversal": loss,
                "deficit": loss - covered,
            }
        )
    return rows
