"""Hot numeric kernels.

The loop kernels exist twice: a numba ``@njit`` version and a pure-numpy
version with the same signature. The numba path is used when numba imports cleanly
and ``BIOINSURANCE_PURE_NUMPY`` is unset or "0". Results of the two paths
agree to rounding, not bit-for-bit; each path is deterministic on its own.
"""

import os

import numpy as np

_FLAG = os.environ.get("BIOINSURANCE_PURE_NUMPY", "0").strip().lower()
_WANT_NUMBA = _FLAG in ("", "0", "false", "no")

try:
    import numba
    from numba import njit, prange

    if "NUMBA_THREADING_LAYER" not in os.environ:
        numba.config.THREADING_LAYER = "omp"
    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE and _WANT_NUMBA


_MAX_EXPONENT = 700.0


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# Buffer pool: one row of uniforms per trial, one column per period.
# Per period: issue, withhold b, sell the rest; if u < p a reversal destroys
# d * stored carbon, the buffer absorbs what it can, the remainder is deficit.
# ---------------------------------------------------------------------------


def buffer_pool_numpy(uniforms, issuance, b, p, d):
    n_trials, horizon = uniforms.shape
    stored = np.zeros(n_trials)
    buffer = np.zeros(n_trials)
    absorbed = np.zeros(n_trials)
    deficit = np.zeros(n_trials)
    reversed_ = np.zeros(n_trials)
    shortfall = np.zeros(n_trials, dtype=np.bool_)
    contribution = b * issuance
    for t in range(horizon):
        stored += issuance
        buffer += contribution
        loss = np.where(uniforms[:, t] < p, d * stored, 0.0)
        stored -= loss
        covered = np.minimum(loss, buffer)
        buffer -= covered
        gap = loss - covered
        absorbed += covered
        deficit += gap
        reversed_ += loss
        shortfall |= gap > 0.0
    sold = np.full(n_trials, (issuance - contribution) * horizon)
    return sold, buffer, absorbed, deficit, reversed_, shortfall


def cara_stats_numpy(y, rho):
    """Centre and ``expm1`` moments of ``-rho * (y - centre)``.

    The centre is the sample mean, which keeps small-rho estimates free of
    cancellation, unless the spread could overflow ``exp``; then it is the
    sample minimum so every exponent is <= 0.
    """
    centre = y.mean()
    if rho * (centre - y.min()) > _MAX_EXPONENT:
        centre = y.min()
    e = np.expm1(-rho * (y - centre))
    return centre, e.sum(), (e * e).sum()


# numba's expm1 is a scalar libm call; the numpy ufunc is faster, so this
# reduction has no compiled twin.
cara_stats = cara_stats_numpy


def ce_grid_numpy(v, mu_max, k_mu, sigma_0, k_sigma, c1, c2, rho, lam, insured):
    """CE and dCE/dv on a grid of v; with ``insured`` alpha is set to its optimum."""
    e_mu = np.exp(-k_mu * v)
    sigma = sigma_0 * np.exp(-k_sigma * v)
    dsigma = -k_sigma * sigma
    mean = mu_max * (1.0 - e_mu) - (c1 * v + c2 * v * v)
    dmean = mu_max * k_mu * e_mu - (c1 + 2.0 * c2 * v)
    if insured:
        price = rho * sigma
        with np.errstate(divide="ignore", invalid="ignore"):
            alpha = np.where(
                price > 0.0,
                np.clip(1.0 - lam / price, 0.0, 1.0),
                1.0 if lam == 0.0 else 0.0,
            )
    else:
        alpha = np.zeros_like(v)
    keep = 1.0 - alpha
    ce = mean - lam * alpha * sigma - 0.5 * rho * keep * keep * sigma * sigma
    foc = dmean - lam * alpha * dsigma - rho * keep * keep * sigma * dsigma
    return ce, foc, alpha


if NUMBA_AVAILABLE:

    @njit(parallel=True, cache=True)
    def buffer_pool_numba(uniforms, issuance, b, p, d):
        n_trials, horizon = uniforms.shape
        sold = np.empty(n_trials)
        terminal = np.empty(n_trials)
        absorbed = np.empty(n_trials)
        deficit = np.empty(n_trials)
        reversed_ = np.empty(n_trials)
        shortfall = np.zeros(n_trials, dtype=np.bool_)
        contribution = b * issuance
        for i in prange(n_trials):
            stored = 0.0
            buf = 0.0
            ab = 0.0
            de = 0.0
            rv = 0.0
            for t in range(horizon):
                stored += issuance
                buf += contribution
                if uniforms[i, t] < p:
                    loss = d * stored
                    stored -= loss
                    covered = min(loss, buf)
                    buf -= covered
                    gap = loss - covered
                    ab += covered
                    de += gap
                    rv += loss
                    if gap > 0.0:
                        shortfall[i] = True
            sold[i] = (issuance - contribution) * horizon
            terminal[i] = buf
            absorbed[i] = ab
            deficit[i] = de
            reversed_[i] = rv
        return sold, terminal, absorbed, deficit, reversed_, shortfall

    @njit(parallel=True, cache=True)
    def ce_grid_numba(v, mu_max, k_mu, sigma_0, k_sigma, c1, c2, rho, lam, insured):
        n = v.size
        ce = np.empty(n)
        foc = np.empty(n)
        alpha = np.zeros(n)
        for i in prange(n):
            x = v[i]
            e_mu = np.exp(-k_mu * x)
            sigma = sigma_0 * np.exp(-k_sigma * x)
            dsigma = -k_sigma * sigma
            mean = mu_max * (1.0 - e_mu) - (c1 * x + c2 * x * x)
            dmean = mu_max * k_mu * e_mu - (c1 + 2.0 * c2 * x)
            a = 0.0
            if insured:
                if rho * sigma > 0.0:
                    a = min(max(1.0 - lam / (rho * sigma), 0.0), 1.0)
                elif lam == 0.0:
                    a = 1.0
            keep = 1.0 - a
            alpha[i] = a
            ce[i] = mean - lam * a * sigma - 0.5 * rho * keep * keep * sigma * sigma
            foc[i] = dmean - lam * a * dsigma - rho * keep * keep * sigma * dsigma
        return ce, foc, alpha


if USE_NUMBA:
    buffer_pool = buffer_pool_numba
    ce_grid = ce_grid_numba
else:
    buffer_pool = buffer_pool_numpy
    ce_grid = ce_grid_numpy
