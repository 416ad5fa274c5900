"""Independent straight-line oracle implementations used by the tests.

Deliberately written without numpy and without calling into the package so
they stay an independent route to the same quantities: plain loops, the
statistics module, and closed-form math.
"""

from __future__ import annotations

import math
import statistics


def sd_oracle(intervals: list[float]) -> float:
    return statistics.stdev(intervals)


def cv_oracle(intervals: list[float]) -> float:
    return statistics.stdev(intervals) / statistics.fmean(intervals)


def rmssd_oracle(intervals: list[float]) -> float:
    diffs = [b - a for a, b in zip(intervals, intervals[1:])]
    return math.sqrt(statistics.fmean([d * d for d in diffs]))


def pnn50_oracle(intervals: list[float]) -> float:
    diffs = [abs(b - a) for a, b in zip(intervals, intervals[1:])]
    return 100.0 * sum(1 for d in diffs if d > 50.0) / len(diffs)


def hr_oracle(intervals: list[float]) -> float:
    return 60000.0 / statistics.fmean(intervals)


def poincare_oracle(intervals: list[float], scale: float = 4.0) -> tuple[float, float]:
    """(L, T) from the successive-pair transform, sample SDs."""
    x = intervals[:-1]
    y = intervals[1:]
    diff_axis = [(a - b) / math.sqrt(2.0) for a, b in zip(x, y)]
    sum_axis = [(a + b) / math.sqrt(2.0) for a, b in zip(x, y)]
    sd1 = statistics.stdev(diff_axis)
    sd2 = statistics.stdev(sum_axis)
    return scale * sd2, scale * sd1


def butterworth_analog_gain(freq_hz: float, cutoff_hz: float, order: int) -> float:
    """Analytic low-pass magnitude response: 1/sqrt(1 + (f/fc)^(2n))."""
    return 1.0 / math.sqrt(1.0 + (freq_hz / cutoff_hz) ** (2 * order))


def db(gain: float) -> float:
    return 20.0 * math.log10(gain)


def quantile_midpoint_oracle(values: list[float], q: float) -> float:
    """Midpoint-interpolated quantile of a sample, by direct order statistics."""
    s = sorted(values)
    h = (len(s) - 1) * q
    lo = math.floor(h)
    hi = math.ceil(h)
    if lo == hi:
        return s[lo]
    return 0.5 * (s[lo] + s[hi])


def pearson_oracle(a: list[float], b: list[float]) -> float:
    ma = statistics.fmean(a)
    mb = statistics.fmean(b)
    num = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    da = math.sqrt(sum((x - ma) ** 2 for x in a))
    dbv = math.sqrt(sum((y - mb) ** 2 for y in b))
    return num / (da * dbv)


def mean_oracle(values: list[float]) -> float:
    return statistics.fmean(values)


def zscores_oracle(values: list[float]) -> list[float]:
    m = statistics.fmean(values)
    sd = statistics.stdev(values)
    return [abs(v - m) / sd for v in values]


def auc_pairs_oracle(scores: list[float], labels: list[int]) -> float:
    """AUC by exhaustive pair counting; ties count one half."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))
