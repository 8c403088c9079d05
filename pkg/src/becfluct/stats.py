"""Empirical distribution tools and pass/fail reports."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

# asymptotic Kolmogorov quantiles: P(sqrt(n) D > c) = level
KS_COEFF = {0.05: 1.358, 0.01: 1.628}


@dataclass(frozen=True)
class GofReport:
    """Outcome of one check.

    ``pass_`` is ``statistic <= threshold`` unless ``reject_expected`` is
    set, in which case the check asserts a rejection (non-normality) and
    passes when ``statistic > threshold``.
    """

    test: str
    statistic: float
    threshold: float
    n_samples: int
    reference: str
    reject_expected: bool = False

    @property
    def passed(self):
        if self.reject_expected:
            return self.statistic > self.threshold
        return self.statistic <= self.threshold

    def to_dict(self):
        d = asdict(self)
        d["pass"] = self.passed
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def ks_critical(n, level=0.01):
    return KS_COEFF[level] / math.sqrt(n)


def ks_statistic(samples, cdf):
    """sup |F_n - F| evaluated on both sides of every order statistic."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise ValueError("ks_statistic needs at least one sample")
    f = np.asarray(cdf(x), dtype=float)
    # ties: the empirical cdf jumps by their total mass at once
    upper = np.searchsorted(x, x, side="right") / n
    lower = np.searchsorted(x, x, side="left") / n
    return float(max(np.max(upper - f), np.max(f - lower)))


def ks_test(samples, cdf, reference, level=0.01, test="ks-exact-cdf", reject_expected=False):
    n = len(samples)
    return GofReport(test, ks_statistic(samples, cdf), ks_critical(n, level), n, reference,
                     reject_expected)


def normal_cdf(mean, variance):
    from scipy.special import ndtr

    sd = math.sqrt(variance)
    return lambda x: ndtr((np.asarray(x) - mean) / sd)


def exponential_cdf(mean):
    return lambda x: -np.expm1(-np.maximum(np.asarray(x), 0.0) / mean)


def empirical_char_fn(samples, xi):
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("need at least one sample")
    return complex(np.mean(np.exp(1j * xi * x)))


def moments(samples):
    """(mean, unbiased variance, skewness, excess kurtosis).

    Skewness and kurtosis are NaN for constant samples.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two samples")
    mean = float(np.mean(x))
    d = x - mean
    m2 = float(np.mean(d * d))
    var = m2 * x.size / (x.size - 1)
    if m2 == 0:
        return mean, var, math.nan, math.nan
    skew = float(np.mean(d**3)) / m2**1.5
    kurt = float(np.mean(d**4)) / m2**2 - 3.0
    return mean, var, skew, kurt


def histogram(samples, bin_count):
    """Equal-width bins over [min, max]: list of (left, right, count)."""
    if bin_count < 1:
        raise ValueError("bin_count must be >= 1")
    x = np.asarray(samples, dtype=float)
    counts, edges = np.histogram(x, bins=int(bin_count))
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(counts.size)]


def binomial_upper(p_hat, n, z=2.576):
    """Normal-approximation upper confidence limit for a proportion."""
    return p_hat + z * math.sqrt(max(p_hat * (1 - p_hat), 1.0 / n) / n)
