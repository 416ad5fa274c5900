"""Pulse-wave preprocessing: filtering, beat detection, IBI validation,
segment quality gating, windowing, and per-participant outlier removal.

The pulse channel is low-pass filtered (Butterworth, zero-phase), beats are
picked as local maxima over an adaptive threshold, and inter-beat intervals
outside physiologic bounds are dropped. Segments with too few beats or too
many dropped intervals are rejected instead of the manual review a human
rater would do.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.signal import butter, filtfilt

from .tables import FeatureTable

log = logging.getLogger(__name__)

IBI_MIN_MS = 300.0   # 200 bpm
IBI_MAX_MS = 2000.0  # 30 bpm


class FilterDesignError(ValueError):
    pass


class SignalTooShortError(ValueError):
    pass


@dataclass(frozen=True)
class FilterCoefficients:
    """Digital IIR filter in transfer-function form."""

    numerator: np.ndarray
    denominator: np.ndarray
    order: int
    cutoff_hz: float
    rate_hz: float

    def __post_init__(self):
        b = np.asarray(self.numerator, dtype=float)
        a = np.asarray(self.denominator, dtype=float)
        if a[0] != 1.0:
            b = b / a[0]
            a = a / a[0]
        poles = np.roots(a)
        if poles.size and np.max(np.abs(poles)) >= 1.0:
            raise FilterDesignError("unstable filter: pole on or outside the unit circle")
        object.__setattr__(self, "numerator", b)
        object.__setattr__(self, "denominator", a)

    def response_at(self, freq_hz: float) -> float:
        """Magnitude of the transfer function at one frequency."""
        w = 2.0 * np.pi * freq_hz / self.rate_hz
        z = np.exp(-1j * w)
        num = np.polyval(self.numerator[::-1], z)
        den = np.polyval(self.denominator[::-1], z)
        return float(np.abs(num / den))


def design_butterworth_lowpass(order: int, cutoff_hz: float, rate_hz: float) -> FilterCoefficients:
    """Design a digital Butterworth low-pass with -3 dB point at ``cutoff_hz``."""
    if order < 1:
        raise FilterDesignError(f"order must be >= 1, got {order}")
    if not 0 < cutoff_hz < rate_hz / 2:
        raise FilterDesignError(
            f"cutoff {cutoff_hz} Hz must lie in (0, Nyquist={rate_hz / 2} Hz)"
        )
    b, a = butter(order, cutoff_hz, btype="low", fs=rate_hz)
    return FilterCoefficients(b, a, order=order, cutoff_hz=cutoff_hz, rate_hz=rate_hz)


def filter_zero_phase(coeffs: FilterCoefficients, signal: np.ndarray) -> np.ndarray:
    """Forward-backward filtering: no net phase shift, output length = input length."""
    x = np.asarray(signal, dtype=float)
    min_len = 3 * (coeffs.order + 1)
    if len(x) <= min_len:
        raise SignalTooShortError(
            f"need more than {min_len} samples for edge padding, got {len(x)}"
        )
    return filtfilt(coeffs.numerator, coeffs.denominator, x)


def _rolling_mean_sd(x: np.ndarray, win: int) -> tuple[np.ndarray, np.ndarray]:
    # centered window, shrinking at the edges
    n = len(x)
    half = win // 2
    c1 = np.concatenate([[0.0], np.cumsum(x)])
    c2 = np.concatenate([[0.0], np.cumsum(x * x)])
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, n)
    cnt = (hi - lo).astype(float)
    mean = (c1[hi] - c1[lo]) / cnt
    var = np.maximum((c2[hi] - c2[lo]) / cnt - mean * mean, 0.0)
    return mean, np.sqrt(var)


def detect_beats(
    bvp: np.ndarray,
    rate_hz: float = 64.0,
    threshold_window_s: float = 5.0,
    threshold_k: float = 0.5,
    refractory_s: float = 0.33,
) -> np.ndarray:
    """Beat times (seconds from segment start) at sample resolution.

    A sample is a beat candidate when it is a local maximum above a rolling
    mean + k * rolling SD threshold. Candidates closer than the refractory
    period (0.33 s keeps rates up to ~180 bpm) are merged, keeping the
    larger peak.
    """
    x = np.asarray(bvp, dtype=float)
    n = len(x)
    if n < 3:
        return np.empty(0)
    win = max(int(round(threshold_window_s * rate_hz)), 1)
    mean, sd = _rolling_mean_sd(x, win)
    thr = mean + threshold_k * sd
    interior = np.arange(1, n - 1)
    is_peak = (x[interior] > x[interior - 1]) & (x[interior] >= x[interior + 1])
    above = x[interior] > thr[interior]
    candidates = interior[is_peak & above]

    # quantize to samples so beats spaced exactly at the refractory survive
    refractory = int(round(refractory_s * rate_hz))
    kept: list[int] = []
    for i in candidates:
        if kept and i - kept[-1] < refractory:
            if x[i] > x[kept[-1]]:
                kept[-1] = int(i)
        else:
            kept.append(int(i))
    return np.asarray(kept, dtype=float) / rate_hz


@dataclass(frozen=True)
class IbiSeries:
    """Validated inter-beat intervals of one segment.

    ``beat_times`` keeps every detected beat; ``intervals`` holds only the
    successive differences inside the plausibility range, each paired with
    the time of its terminating beat in ``interval_times``. When nothing is
    dropped, len(intervals) == len(beat_times) - 1.
    """

    beat_times: np.ndarray
    intervals: np.ndarray       # ms
    interval_times: np.ndarray  # s, end beat of each kept interval
    dropped: int = 0
    flagged: bool = False       # true when fewer than two beats were available

    def __post_init__(self):
        object.__setattr__(self, "beat_times", np.asarray(self.beat_times, dtype=float))
        object.__setattr__(self, "intervals", np.asarray(self.intervals, dtype=float))
        object.__setattr__(self, "interval_times", np.asarray(self.interval_times, dtype=float))

    @property
    def drop_fraction(self) -> float:
        total = len(self.intervals) + self.dropped
        return self.dropped / total if total else 0.0

    def __len__(self) -> int:
        return len(self.intervals)


def beats_to_ibi(
    beat_times: np.ndarray,
    min_ms: float = IBI_MIN_MS,
    max_ms: float = IBI_MAX_MS,
) -> IbiSeries:
    """Successive beat differences in ms; out-of-range intervals dropped and counted."""
    times = np.asarray(beat_times, dtype=float)
    if len(times) >= 2 and np.any(np.diff(times) <= 0):
        raise ValueError("beat times must be strictly increasing")
    if len(times) < 2:
        return IbiSeries(times, np.empty(0), np.empty(0), dropped=0, flagged=True)
    raw = np.diff(times) * 1000.0
    valid = (raw >= min_ms) & (raw <= max_ms)
    return IbiSeries(
        beat_times=times,
        intervals=raw[valid],
        interval_times=times[1:][valid],
        dropped=int((~valid).sum()),
        flagged=False,
    )


class QualityReason(str, Enum):
    OK = "OK"
    TOO_FEW_BEATS = "TooFewBeats"
    IBI_OUT_OF_RANGE_EXCESS = "IbiOutOfRangeExcess"


@dataclass(frozen=True)
class SegmentQuality:
    accepted: bool
    reason: QualityReason

    def __post_init__(self):
        if self.accepted != (self.reason is QualityReason.OK):
            raise ValueError("accepted must hold exactly when reason is OK")


def assess_quality(
    ibi: IbiSeries,
    duration_s: float,
    min_beats_per_50s: int = 20,
    max_drop_fraction: float = 0.20,
) -> SegmentQuality:
    """Automated stand-in for manual exclusion of noisy pulse segments."""
    required = min_beats_per_50s * duration_s / 50.0
    if len(ibi.beat_times) < required:
        return SegmentQuality(False, QualityReason.TOO_FEW_BEATS)
    if ibi.drop_fraction > max_drop_fraction:
        return SegmentQuality(False, QualityReason.IBI_OUT_OF_RANGE_EXCESS)
    return SegmentQuality(True, QualityReason.OK)


def window_slices(
    samples: np.ndarray,
    rate_hz: float,
    window_s: float = 30.0,
    stride_s: float = 5.0,
) -> list[np.ndarray]:
    """Overlapping windows starting at 0, stride, 2*stride, ... seconds."""
    x = np.asarray(samples)
    win = int(round(window_s * rate_hz))
    step = int(round(stride_s * rate_hz))
    if len(x) < win:
        raise SignalTooShortError(
            f"segment of {len(x)} samples shorter than the {win}-sample window"
        )
    return [x[s:s + win] for s in range(0, len(x) - win + 1, step)]


@dataclass(frozen=True)
class OutlierRemoval:
    participant: str
    feature: str
    timestamp: float
    value: float
    zscore: float


REMOVAL_LOG_HEADER = "participant,feature,timestamp,value,zscore"


def removal_log_to_csv(records: list[OutlierRemoval]) -> str:
    lines = [REMOVAL_LOG_HEADER]
    lines += [
        f"{r.participant},{r.feature},{repr(r.timestamp)},{repr(r.value)},{repr(r.zscore)}"
        for r in records
    ]
    return "\n".join(lines) + "\n"


def remove_outliers_3sigma(
    table: FeatureTable,
    features: list[str] | None = None,
    sigma: float = 3.0,
    drop_features: list[str] | None = None,
) -> tuple[FeatureTable, list[OutlierRemoval]]:
    """Null out per-participant, per-feature values beyond ``sigma`` SDs.

    Statistics pool both periods of a participant, use the sample SD, and
    are computed once (single pass, no re-iteration). Values exactly at the
    threshold are kept. When ``drop_features`` is given, rows that lost any
    of those features are removed from the returned table.
    """
    feats = features if features is not None else table.feature_names
    values = {k: v.copy() for k, v in table.values.items()}
    removals: list[OutlierRemoval] = []
    for pid in table.participant_ids():
        rows = np.where(table.participants == pid)[0]
        for feat in feats:
            col = values[feat]
            finite = rows[np.isfinite(col[rows])]
            if len(finite) < 2:
                continue
            mean = float(np.mean(col[finite]))
            sd = float(np.std(col[finite], ddof=1))
            if sd == 0.0:
                continue
            z = np.abs(col[finite] - mean) / sd
            for idx in finite[z > sigma]:
                removals.append(OutlierRemoval(
                    participant=pid,
                    feature=feat,
                    timestamp=float(table.timestamps[idx]),
                    value=float(col[idx]),
                    zscore=float(abs(col[idx] - mean) / sd),
                ))
                col[idx] = np.nan
    out = FeatureTable(
        participants=table.participants.copy(),
        periods=table.periods.copy(),
        timestamps=table.timestamps.copy(),
        labels=table.labels.copy(),
        values=values,
    )
    if drop_features:
        out = out.subset(out.complete_rows(drop_features))
    removals.sort(key=lambda r: (r.participant, r.feature, r.timestamp))
    return out, removals
