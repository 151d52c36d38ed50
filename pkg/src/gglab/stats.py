"""Streaming moments, batch means, jackknife and power-law fits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class MomentAccumulator:
    """Welford accumulator over a vector of observables, with batch means.

    ``merge`` combines two accumulators exactly (Chan et al. pairwise
    update), so ensembles can be reduced in any grouping.
    """

    shape: tuple = ()
    batch_size: int = 1
    count: int = 0
    mean: np.ndarray = field(default=None)
    m2: np.ndarray = field(default=None)
    batches: list = field(default_factory=list)
    _batch_sum: np.ndarray = field(default=None, repr=False)
    _batch_n: int = 0

    def __post_init__(self):
        if self.mean is None:
            self.mean = np.zeros(self.shape)
            self.m2 = np.zeros(self.shape)
            self._batch_sum = np.zeros(self.shape)

    def push(self, x):
        x = np.asarray(x, dtype=float)
        self.count += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.count
        self.m2 = self.m2 + delta * (x - self.mean)
        self._batch_sum = self._batch_sum + x
        self._batch_n += 1
        if self._batch_n == self.batch_size:
            self.batches.append(self._batch_sum / self.batch_size)
            self._batch_sum = np.zeros(self.shape)
            self._batch_n = 0

    def extend(self, xs):
        for x in xs:
            self.push(x)

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        n = self.count + other.count
        out = MomentAccumulator(self.shape, self.batch_size)
        if n == 0:
            return out
        delta = other.mean - self.mean
        out.count = n
        out.mean = self.mean + delta * (other.count / n)
        out.m2 = self.m2 + other.m2 + delta**2 * (self.count * other.count / n)
        out.batches = list(self.batches) + list(other.batches)
        return out

    @property
    def variance(self):
        return self.m2 / (self.count - 1) if self.count > 1 else np.full(self.shape, np.nan)

    def batch_stderr(self):
        """Standard error of the mean from completed batch means."""
        b = np.asarray(self.batches)
        if len(b) < 2:
            return np.full(self.shape, np.nan)
        return b.std(axis=0, ddof=1) / math.sqrt(len(b))


def batch_means(x, n_batches: int = 16, axis: int = 0):
    """Mean and batch-means standard error along ``axis`` (trailing remainder dropped)."""
    x = np.moveaxis(np.asarray(x, dtype=float), axis, 0)
    if len(x) < n_batches:
        raise ValueError(f"need at least {n_batches} samples for batch means, got {len(x)}")
    size = len(x) // n_batches
    b = x[: size * n_batches].reshape(n_batches, size, *x.shape[1:]).mean(axis=1)
    return b.mean(axis=0), b.std(axis=0, ddof=1) / math.sqrt(n_batches)


def jackknife(values, statistic=np.mean, n_blocks: int | None = None):
    """Delete-one(-block) jackknife estimate and standard error of ``statistic``.

    ``statistic`` maps an array of realisations (first axis) to a scalar or array.
    """
    values = np.asarray(values)
    n = len(values)
    n_blocks = n if n_blocks is None else min(n_blocks, n)
    edges = np.linspace(0, n, n_blocks + 1).astype(int)
    full = np.asarray(statistic(values))
    reps = np.array([statistic(np.concatenate([values[: edges[i]], values[edges[i + 1]:]])) for i in range(n_blocks)])
    mean_rep = reps.mean(axis=0)
    err = np.sqrt((n_blocks - 1) / n_blocks * ((reps - mean_rep) ** 2).sum(axis=0))
    return full, err


def integrated_autocorr_time(x, c: float = 5.0) -> float:
    """Integrated autocorrelation time (in samples) with Sokal's adaptive window."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4 or np.allclose(x, x[0]):
        return 1.0
    y = x - x.mean()
    f = np.fft.rfft(y, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    acf /= acf[0]
    tau = 1.0
    for m in range(1, n):
        tau += 2.0 * acf[m]
        if m >= c * tau:
            break
    return max(tau, 1.0)


def fit_power_law(x, y):
    """Least-squares fit of ``log|y| = log C - p log x``.

    Returns ``(p, C, r2)``: the decay exponent, prefactor and R^2 of the fit.
    """
    lx, ly = np.log(np.asarray(x, float)), np.log(np.abs(np.asarray(y, float)))
    slope, icpt = np.polyfit(lx, ly, 1)
    pred = icpt + slope * lx
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum((ly - pred) ** 2) / ss if ss > 0 else 1.0
    return -slope, math.exp(icpt), r2


def linear_fit(x, y):
    """Ordinary least squares ``y = a + b x``; returns ``(b, a, r2)``."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    b, a = np.polyfit(x, y, 1)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum((y - a - b * x) ** 2) / ss if ss > 0 else 1.0
    return b, a, r2


def fit_power_law_weighted(x, y, sigma):
    """Weighted least squares of ``y = C x^{-p}`` on the linear scale.

    Suited to noisy values that may change sign. Returns
    ``(p, C, p_stderr)`` with errors taken as absolute.
    """
    from scipy.optimize import curve_fit

    x, y, sigma = (np.asarray(v, float) for v in (x, y, sigma))
    p0, c0, _ = fit_power_law(x[:2], np.maximum(np.abs(y[:2]), 1e-300))

    def model(t, p, logc):
        return np.exp(logc) * t ** (-p)

    popt, pcov = curve_fit(model, x, y, p0=(p0, math.log(c0)), sigma=sigma, absolute_sigma=True, maxfev=20000)
    return float(popt[0]), float(math.exp(popt[1])), float(math.sqrt(pcov[0, 0]))
