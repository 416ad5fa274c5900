"""The 17 per-segment features: HRV time/geometry/frequency statistics from
the pulse channel, plus electrodermal, temperature and acceleration summaries.

Pulse-derived features are computed per overlapping 30 s window (5 s stride)
and averaged; the other channels use their full slice. A feature that cannot
be computed is NaN and propagates through the window average.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from . import preprocess
from .preprocess import IbiSeries, QualityReason
from .signals import LabeledSegment, Period
from .tables import FEATURE_NAMES, FeatureTable

log = logging.getLogger(__name__)

NAN = float("nan")


class SegmentRejectedError(ValueError):
    """Raised when a segment failed the quality gate."""

    def __init__(self, reason: QualityReason):
        super().__init__(f"segment rejected: {reason.value}")
        self.reason = reason


@dataclass(frozen=True)
class ExtractionSettings:
    """All preprocessing and feature knobs used per segment."""

    filter_order: int = 4
    filter_cutoff_hz: float = 3.0
    threshold_window_s: float = 5.0
    threshold_k: float = 0.5
    refractory_s: float = 0.33
    ibi_min_ms: float = 300.0
    ibi_max_ms: float = 2000.0
    min_beats_per_50s: int = 20
    max_ibi_drop_fraction: float = 0.20
    window_s: float = 30.0
    stride_s: float = 5.0
    poincare_scale: float = 4.0
    tachogram_rate_hz: float = 4.0
    lf_band: tuple[float, float] = (0.04, 0.15)
    hf_band: tuple[float, float] = (0.15, 0.40)
    min_freq_intervals: int = 4
    min_freq_span_s: float = 10.0


def hrv_time_features(ibi: IbiSeries) -> dict[str, float]:
    """SD, CV, RMSSD, pNN50 (%) and HR (bpm) from validated intervals (ms)."""
    iv = ibi.intervals
    out = {"SD": NAN, "CV": NAN, "RMSSD": NAN, "pNN50": NAN, "HR": NAN}
    if len(iv) >= 1:
        out["HR"] = 60000.0 / float(np.mean(iv))
    if len(iv) >= 2:
        mean = float(np.mean(iv))
        sd = float(np.std(iv, ddof=1))
        out["SD"] = sd
        out["CV"] = sd / mean
        d = np.diff(iv)
        out["RMSSD"] = float(np.sqrt(np.mean(d * d)))
        out["pNN50"] = 100.0 * float(np.mean(np.abs(d) > 50.0))
    return out


def poincare_axes(ibi: IbiSeries, scale: float = 4.0) -> dict[str, float]:
    """Long/short Poincare ellipse axes as scale * SD2 / scale * SD1."""
    iv = ibi.intervals
    if len(iv) < 3:
        return {"L": NAN, "T": NAN}
    x, y = iv[:-1], iv[1:]
    sd1 = float(np.std((x - y) / np.sqrt(2.0), ddof=1))
    sd2 = float(np.std((x + y) / np.sqrt(2.0), ddof=1))
    return {"L": scale * sd2, "T": scale * sd1}


def hrv_freq_features(
    ibi: IbiSeries,
    tachogram_rate_hz: float = 4.0,
    lf_band: tuple[float, float] = (0.04, 0.15),
    hf_band: tuple[float, float] = (0.15, 0.40),
    min_intervals: int = 4,
    min_span_s: float = 10.0,
) -> dict[str, float]:
    """Band powers (ms^2) of the interval tachogram.

    The (beat time, interval) pairs are cubic-interpolated onto a uniform
    grid, mean-removed, Hann-windowed, and integrated over the LF band
    [0.04, 0.15) and HF band [0.15, 0.4] of the periodogram.
    """
    out = {"LF": NAN, "HF": NAN, "LF_HF": NAN}
    times, iv = ibi.interval_times, ibi.intervals
    if len(iv) < min_intervals or times[-1] - times[0] < min_span_s:
        return out
    span = times[-1] - times[0]
    m = int(np.floor(span * tachogram_rate_hz)) + 1
    if m < 4:
        return out
    grid = times[0] + np.arange(m) / tachogram_rate_hz
    x = CubicSpline(times, iv)(grid)
    x = x - np.mean(x)
    w = np.hanning(m)
    spec = np.fft.rfft(x * w)
    psd = (np.abs(spec) ** 2) / (tachogram_rate_hz * np.sum(w * w))
    # one-sided: double everything except DC and (for even m) the Nyquist bin
    if m % 2 == 0:
        psd[1:-1] *= 2.0
    else:
        psd[1:] *= 2.0
    freqs = np.fft.rfftfreq(m, d=1.0 / tachogram_rate_hz)
    df = tachogram_rate_hz / m
    lf = float(np.sum(psd[(freqs >= lf_band[0]) & (freqs < lf_band[1])]) * df)
    hf = float(np.sum(psd[(freqs >= hf_band[0]) & (freqs <= hf_band[1])]) * df)
    out["LF"], out["HF"] = lf, hf
    out["LF_HF"] = lf / hf if hf > 0.0 else NAN
    return out


def eda_features(eda_slice: np.ndarray) -> dict[str, float]:
    x = np.asarray(eda_slice, dtype=float)
    if len(x) == 0:
        return {"EDA_ave": NAN, "EDA_max": NAN, "EDA_min": NAN, "EDA_diff": NAN}
    mx, mn = float(np.max(x)), float(np.min(x))
    return {"EDA_ave": float(np.mean(x)), "EDA_max": mx, "EDA_min": mn, "EDA_diff": mx - mn}


def temp_feature(temp_slice: np.ndarray) -> float:
    x = np.asarray(temp_slice, dtype=float)
    return float(np.mean(x)) if len(x) else NAN


def acc_features(acc_slice: np.ndarray) -> dict[str, float]:
    x = np.asarray(acc_slice, dtype=float)
    if x.size == 0:
        return {"Acc_ave": NAN, "Acc_max": NAN}
    mag = np.sqrt(np.sum(x * x, axis=1))
    return {"Acc_ave": float(np.mean(mag)), "Acc_max": float(np.max(mag))}


_BVP_FEATURES = ["SD", "CV", "RMSSD", "pNN50", "HR", "L", "T", "LF", "HF", "LF_HF"]


def _bvp_window_features(ibi: IbiSeries, settings: ExtractionSettings) -> dict[str, float]:
    out = hrv_time_features(ibi)
    out.update(poincare_axes(ibi, scale=settings.poincare_scale))
    out.update(hrv_freq_features(
        ibi,
        tachogram_rate_hz=settings.tachogram_rate_hz,
        lf_band=settings.lf_band,
        hf_band=settings.hf_band,
        min_intervals=settings.min_freq_intervals,
        min_span_s=settings.min_freq_span_s,
    ))
    return out


def segment_beats(segment: LabeledSegment, settings: ExtractionSettings) -> np.ndarray:
    """Filter the segment's pulse slice and detect beats on it."""
    coeffs = preprocess.design_butterworth_lowpass(
        settings.filter_order, settings.filter_cutoff_hz, segment.bvp_rate
    )
    filtered = preprocess.filter_zero_phase(coeffs, segment.bvp_slice)
    return preprocess.detect_beats(
        filtered,
        rate_hz=segment.bvp_rate,
        threshold_window_s=settings.threshold_window_s,
        threshold_k=settings.threshold_k,
        refractory_s=settings.refractory_s,
    )


@dataclass(frozen=True)
class FeatureVector:
    participant_id: str
    period: Period
    timestamp: float
    label: int
    values: dict[str, float] = field(default_factory=dict)


def segment_window_features(
    segment: LabeledSegment,
    settings: ExtractionSettings = ExtractionSettings(),
    beats: np.ndarray | None = None,
) -> list[dict[str, float]]:
    """Per-window pulse features (debug surface; the pipeline exports only
    their average). Window starts mirror preprocess.window_slices."""
    if beats is None:
        beats = segment_beats(segment, settings)
    win = int(round(settings.window_s * segment.bvp_rate))
    step = int(round(settings.stride_s * segment.bvp_rate))
    if len(segment.bvp_slice) < win:
        raise preprocess.SignalTooShortError(
            f"pulse slice shorter than one {settings.window_s} s window"
        )
    starts = [s / segment.bvp_rate for s in range(0, len(segment.bvp_slice) - win + 1, step)]
    per_window = []
    for w_start in starts:
        in_window = beats[(beats >= w_start) & (beats < w_start + settings.window_s)]
        w_ibi = preprocess.beats_to_ibi(in_window, settings.ibi_min_ms, settings.ibi_max_ms)
        per_window.append(_bvp_window_features(w_ibi, settings))
    return per_window


def extract_feature_vector(
    segment: LabeledSegment,
    settings: ExtractionSettings = ExtractionSettings(),
) -> FeatureVector:
    """Compute all 17 features for one quality-accepted segment.

    Raises SegmentRejectedError when the full-segment beat series fails the
    quality gate. Pulse features are averaged over the overlapping windows;
    one missing window makes the averaged feature missing.
    """
    beats = segment_beats(segment, settings)
    full_ibi = preprocess.beats_to_ibi(beats, settings.ibi_min_ms, settings.ibi_max_ms)
    duration = len(segment.bvp_slice) / segment.bvp_rate
    quality = preprocess.assess_quality(
        full_ibi, duration,
        min_beats_per_50s=settings.min_beats_per_50s,
        max_drop_fraction=settings.max_ibi_drop_fraction,
    )
    if not quality.accepted:
        raise SegmentRejectedError(quality.reason)

    per_window = segment_window_features(segment, settings, beats=beats)

    values: dict[str, float] = {}
    for name in _BVP_FEATURES:
        vals = np.array([w[name] for w in per_window])
        values[name] = float(np.mean(vals))  # any NaN window propagates
    values.update(eda_features(segment.eda_slice))
    values["Temp_ave"] = temp_feature(segment.temp_slice)
    values.update(acc_features(segment.acc_slice))

    return FeatureVector(
        participant_id=segment.participant_id,
        period=segment.period,
        timestamp=segment.annotation_time,
        label=segment.label.value,
        values=values,
    )


def extract_table(
    segments: list[LabeledSegment],
    settings: ExtractionSettings = ExtractionSettings(),
) -> tuple[FeatureTable, list[tuple[LabeledSegment, QualityReason]]]:
    """Feature vectors for every accepted segment, plus the rejected ones."""
    rows: list[FeatureVector] = []
    rejected: list[tuple[LabeledSegment, QualityReason]] = []
    for seg in segments:
        try:
            rows.append(extract_feature_vector(seg, settings))
        except SegmentRejectedError as err:
            log.info(
                "segment at %.3f (%s/%s) rejected: %s",
                seg.annotation_time, seg.participant_id, seg.period.value, err.reason.value,
            )
            rejected.append((seg, err.reason))
    return table_from_vectors(rows), rejected


def table_from_vectors(rows: list[FeatureVector]) -> FeatureTable:
    if not rows:
        return FeatureTable.empty()
    return FeatureTable(
        participants=np.array([r.participant_id for r in rows], dtype=object),
        periods=np.array([r.period.flag for r in rows], dtype=int),
        timestamps=np.array([r.timestamp for r in rows], dtype=float),
        labels=np.array([r.label for r in rows], dtype=int),
        values={
            name: np.array([r.values.get(name, NAN) for r in rows], dtype=float)
            for name in FEATURE_NAMES
        },
    )
