"""Hoeffding-Bentkus p-values for the null "mean loss exceeds alpha"."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

#: p-values are floored here so that they stay strictly positive
P_FLOOR = np.finfo(np.float64).tiny


def kl_bernoulli(a: float, b: float) -> float:
    """KL divergence between Bernoulli(a) and Bernoulli(b), in nats."""
    if not 0.0 < b < 1.0:
        raise ValueError(f"b must lie in (0, 1), got {b!r}")
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"a must lie in [0, 1], got {a!r}")
    out = 0.0
    if a > 0.0:
        out += a * math.log(a / b)
    if a < 1.0:
        out += (1.0 - a) * math.log((1.0 - a) / (1.0 - b))
    return max(out, 0.0)


def _kl_vec(a: np.ndarray, b: float) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(a > 0.0, a * np.log(a / b), 0.0)
        t2 = np.where(a < 1.0, (1.0 - a) * np.log((1.0 - a) / (1.0 - b)), 0.0)
    return np.maximum(t1 + t2, 0.0)


@lru_cache(maxsize=64)
def _log_cdf_table(n: int, p: float) -> np.ndarray:
    """log P(Bin(n, p) <= k) for k = 0..n, with 0 < p < 1.

    The log-pmf is built from log-ratio increments anchored at the mode
    (log pmf(mode) == 0) and normalised at the end, which avoids the
    cancellation of large lgamma values.
    """
    mode = min(int(math.floor((n + 1) * p)), n)
    j = np.arange(1, n + 1, dtype=np.float64)
    # log pmf(j) - log pmf(j-1)
    inc = np.log((n - j + 1.0) / j) + (math.log(p) - math.log1p(-p))
    logr = np.empty(n + 1)
    logr[mode] = 0.0
    if mode < n:
        logr[mode + 1:] = np.cumsum(inc[mode:])
    if mode > 0:
        logr[:mode] = -np.cumsum(inc[:mode][::-1])[::-1]

    # streaming log-sum-exp for the far tail; linear prefix sums where representable
    log_stream = np.logaddexp.accumulate(logr)
    lin = np.cumsum(np.exp(logr))
    with np.errstate(divide="ignore"):
        log_prefix = np.where(lin > 1e-280, np.log(lin), log_stream)
    out = log_prefix - math.log(lin[-1])
    out[-1] = 0.0
    out = np.minimum(out, 0.0)
    out.setflags(write=False)
    return out


def binom_cdf(k: int, n: int, p: float) -> float:
    """P(X <= k) for X ~ Binomial(n, p); ``k > n`` gives 1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p!r}")
    k = int(k)
    if k < 0:
        return 0.0
    if k >= n or p == 0.0:
        return 1.0
    if p == 1.0:
        return 0.0
    return float(math.exp(_log_cdf_table(int(n), float(p))[k]))


def hb_pvalues_from_sums(loss_sums, n: int, alpha: float) -> np.ndarray:
    """Vectorised Hoeffding-Bentkus p-values.

    Parameters
    ----------
    loss_sums : array_like
        Raw per-hypothesis loss sums over ``n`` samples.  The binomial
        count is ``ceil(loss_sum)``, taken on the sum itself so that no
        ``n * (sum / n)`` round trip shifts an integer.
    n : int
        Number of samples.
    alpha : float
        Target level in (0, 1).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    if n < 1:
        raise ValueError("n must be >= 1")
    sums = np.asarray(loss_sums, dtype=np.float64)
    rhat = np.clip(sums / n, 0.0, 1.0)
    log_hoeffding = -n * _kl_vec(np.minimum(rhat, alpha), alpha)
    k = np.clip(np.ceil(sums), 0, n).astype(np.int64)
    log_bentkus = 1.0 + _log_cdf_table(int(n), float(alpha))[k]
    p = np.exp(np.minimum(np.minimum(log_hoeffding, log_bentkus), 0.0))
    return np.maximum(p, P_FLOOR)


def hb_pvalue(rhat: float, n: int, alpha: float, loss_sum: float | None = None) -> float:
    """Hoeffding-Bentkus p-value for H0: risk > alpha.

    ``min(1, exp(-n h(rhat ^ alpha, alpha)), e * P(Bin(n, alpha) <= ceil(n rhat)))``.
    Pass ``loss_sum`` when the raw sum of losses is available.
    """
    if not 0.0 <= rhat <= 1.0:
        raise ValueError(f"rhat must lie in [0, 1], got {rhat!r}")
    if loss_sum is None:
        s = n * rhat
        # n * rhat of an exact mean of n losses can land a hair off an integer
        if abs(s - round(s)) <= 1e-9:
            s = float(round(s))
    else:
        s = loss_sum
    return float(hb_pvalues_from_sums(np.array([s]), n, alpha)[0])
