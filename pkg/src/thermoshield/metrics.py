"""Temporal and spatial thermal-leakage metrics.

The temporal metric correlates the *similarity structure* of two traces
rather than the traces themselves, so instruction counts and temperatures
can be compared: every pair of samples (i, j) inside a window is reduced to
a standardized Euclidean distance, and the two distance lists (with the
observation side delayed by k samples) are fed to a Pearson correlation.
The spatial metric is an entropy ratio over the ordering of block
temperatures when they collapse into m indistinguishable groups.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import lgamma

import numpy as np
from scipy.spatial.distance import pdist

from .model import Trace

DEGENERATE_STD = 1e-12
DEGENERATE_VARIANCE = 1e-18


@dataclass(frozen=True)
class SimilarityVector:
    """Pairwise distances over a window: entry m holds Dist(sample i_m, sample j_m)."""

    i: np.ndarray
    j: np.ndarray
    distances: np.ndarray
    channel_stds: np.ndarray

    @property
    def num_pairs(self) -> int:
        return self.distances.shape[0]


@dataclass(frozen=True)
class SvfReport:
    svf: float
    abs_svf: float
    delay_k: int
    num_pairs: int
    zero_variance: bool = False


@dataclass(frozen=True)
class StsfReport:
    n: int
    m: int
    stsf: float


def standardized_euclidean(x, y, stds) -> float:
    """sqrt(sum_c ((x_c - y_c)/s_c)^2), skipping channels with s_c < 1e-12."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s = np.asarray(stds, dtype=float)
    if x.shape != y.shape or x.shape != s.shape:
        raise ValueError("length mismatch between vectors and stds")
    keep = s >= DEGENERATE_STD
    if not np.any(keep):
        return 0.0
    d = (x[keep] - y[keep]) / s[keep]
    return float(np.sqrt(np.dot(d, d)))


def _pair_indices(window: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    # Same (j, i) enumeration order as scipy's condensed pdist output.
    start, stop = window
    w = stop - start
    jj, ii = np.triu_indices(w, k=1)
    return ii + start, jj + start


def _window_distances(values: np.ndarray, window: tuple[int, int], stds: np.ndarray) -> np.ndarray:
    start, stop = window
    keep = stds >= DEGENERATE_STD
    w = stop - start
    if not np.any(keep):
        return np.zeros(w * (w - 1) // 2)
    block = values[start:stop, keep]
    return pdist(block, metric="seuclidean", V=stds[keep] ** 2)


def similarity_vector(trace: Trace, window: tuple[int, int]) -> SimilarityVector:
    """Distances for all sample pairs i > j inside the window.

    Channel standard deviations come from the full trace, not the window,
    so distances are comparable across windows.
    """
    start, stop = window
    if stop - start < 3:
        raise ValueError("window must span at least 3 samples")
    if start < 0 or stop > trace.num_samples:
        raise ValueError(
            f"window [{start},{stop}) exceeds trace of {trace.num_samples} samples")
    stds = trace.values.std(axis=0)
    dists = _window_distances(trace.values, window, stds)
    ii, jj = _pair_indices(window)
    return SimilarityVector(ii, jj, dists, stds)


def pearson(xs, ys) -> tuple[float, bool]:
    """Sample Pearson r, with a zero-variance sentinel.

    Returns (0.0, True) when either side's variance is below 1e-18: a
    constant observation carries no information, which is exactly what a
    fully flattened temperature trace produces.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("paired value lists must be 1-D and equally long")
    if x.size < 2:
        raise ValueError("need at least 2 pairs")
    xc = x - x.mean()
    yc = y - y.mean()
    vx = float(np.dot(xc, xc)) / x.size
    vy = float(np.dot(yc, yc)) / y.size
    if vx < DEGENERATE_VARIANCE or vy < DEGENERATE_VARIANCE:
        return 0.0, True
    r = float(np.dot(xc, yc) / np.sqrt(np.dot(xc, xc) * np.dot(yc, yc)))
    return max(-1.0, min(1.0, r)), False


def svf(trace_inst: Trace, trace_temp: Trace, k: int, window: tuple[int, int]) -> SvfReport:
    """Correlate the two similarity structures with the observation delayed
    by k samples: pairs Dist_inst(i, j) against Dist_temp(i+k, j+k)."""
    if abs(trace_inst.sample_interval_s - trace_temp.sample_interval_s) > 1e-12 * trace_inst.sample_interval_s:
        raise ValueError("traces must share a sample interval")
    if k < 0:
        raise ValueError("delay k must be >= 0")
    start, stop = window
    if stop - start < 3:
        raise ValueError("window must span at least 3 samples")
    if start < 0 or stop > trace_inst.num_samples:
        raise ValueError("window exceeds instruction trace bounds")
    if stop + k > trace_temp.num_samples:
        raise ValueError(
            f"delayed window [{start + k},{stop + k}) exceeds observation trace "
            f"of {trace_temp.num_samples} samples")
    inst_stds = trace_inst.values.std(axis=0)
    temp_stds = trace_temp.values.std(axis=0)
    d_inst = _window_distances(trace_inst.values, (start, stop), inst_stds)
    d_temp = _window_distances(trace_temp.values, (start + k, stop + k), temp_stds)
    r, flat = pearson(d_inst, d_temp)
    return SvfReport(svf=r, abs_svf=abs(r), delay_k=k, num_pairs=d_inst.shape[0], zero_variance=flat)


def best_delay(
    trace_inst: Trace,
    trace_temp: Trace,
    k_max: int,
    window: tuple[int, int],
) -> tuple[int, SvfReport]:
    """Search k in [0, k_max] for the largest |SVF|; ties go to smaller k."""
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    best: tuple[int, SvfReport] | None = None
    for k in range(k_max + 1):
        report = svf(trace_inst, trace_temp, k, window)
        if best is None or report.abs_svf > best[1].abs_svf:
            best = (k, report)
    assert best is not None
    return best


def stsf(n: int, m: int) -> StsfReport:
    """Entropy ratio of a sorted block sequence collapsed into m groups:
    (ln n! - m ln((n/m)!)) / ln n!, via log-gamma. n = 1 is defined as 0."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if m < 1 or m > n:
        raise ValueError("m must satisfy 1 <= m <= n")
    if n % m != 0:
        raise ValueError(f"m={m} does not divide n={n}")
    if n == 1:
        return StsfReport(n=1, m=1, stsf=0.0)
    log_n_fact = lgamma(n + 1)
    value = (log_n_fact - m * lgamma(n // m + 1)) / log_n_fact
    return StsfReport(n=n, m=m, stsf=value)


def group_blocks(block_temps_c: dict[str, float], m: int) -> list[list[str]]:
    """Sort blocks by temperature descending (ties broken by id) and split
    into m equal contiguous groups."""
    n = len(block_temps_c)
    if n < 1:
        raise ValueError("need at least one block")
    if m < 1 or n % m != 0:
        raise ValueError(f"m={m} does not divide n={n}")
    ranked = sorted(block_temps_c.items(), key=lambda kv: (-kv[1], kv[0]))
    size = n // m
    return [[bid for bid, _ in ranked[i * size:(i + 1) * size]] for i in range(m)]


def largest_divisor_at_most(n: int, limit: int) -> int:
    for d in range(min(n, limit), 0, -1):
        if n % d == 0:
            return d
    return 1


def effective_groups(block_temps_c: dict[str, float], epsilon_c: float) -> int:
    """Number of temperature groups an observer can actually distinguish.

    Sort descending and count runs separated by gaps > epsilon, then round
    down to the largest divisor of n so the entropy ratio applies.
    """
    if epsilon_c <= 0:
        raise ValueError("epsilon must be > 0")
    n = len(block_temps_c)
    if n == 0:
        raise ValueError("need at least one block")
    temps = sorted(block_temps_c.values(), reverse=True)
    runs = 1 + sum(1 for a, b in zip(temps, temps[1:]) if a - b > epsilon_c)
    return largest_divisor_at_most(n, runs)


def mpu(gen_power: Trace, gen_power_max_avg: Trace) -> float:
    """Mean generator power relative to the maximal-injection baseline."""
    if gen_power.num_samples == 0 or gen_power_max_avg.num_samples == 0:
        raise ValueError("traces must be nonempty")
    denom = float(gen_power_max_avg.values.mean()) * gen_power_max_avg.num_channels
    if denom == 0.0:
        return 0.0
    num = float(gen_power.values.mean()) * gen_power.num_channels
    return num / denom


def power_overhead(gen_power: Trace, total_power: Trace) -> float:
    """Mean generator power over mean total system power."""
    if abs(gen_power.sample_interval_s - total_power.sample_interval_s) > 1e-12 * total_power.sample_interval_s:
        raise ValueError("traces must share a sample interval")
    if gen_power.num_samples == 0 or total_power.num_samples == 0:
        raise ValueError("traces must be nonempty")
    total = float(total_power.values.sum(axis=1).mean())
    if total == 0.0:
        return 0.0
    return float(gen_power.values.sum(axis=1).mean()) / total


def scaled_svf(svf_value: float, mpu_value: float) -> float:
    return svf_value * mpu_value


def geometric_mean_abs(values, floor: float = 1e-4) -> float:
    """Geometric mean of |values| with a floor guarding against zero collapse."""
    arr = np.maximum(np.abs(np.asarray(list(values), dtype=float)), floor)
    if arr.size == 0:
        raise ValueError("need at least one value")
    return float(np.exp(np.mean(np.log(arr))))
