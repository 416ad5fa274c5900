"""Seed-deterministic ground-truth generators.

Two levels of fidelity back the test suite:

* feature-level datasets with known closed-form shape functions and injected
  period-2 drift (x-shift or y-scale), labels drawn from the exact logistic
  model, true logits recorded;
* raw-signal sessions (pulse train, electrodermal, temperature and
  acceleration channels plus an annotation log) whose per-annotation target
  feature values are bookkept so the full extraction pipeline can be checked
  against construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .signals import (
    ChannelKind,
    EmotionAnnotation,
    EmotionCategory,
    Period,
    RecordingSession,
    SampledChannel,
    STANDARD_RATES,
)
from .tables import FeatureTable

DEFAULT_PULSE_WIDTH_S = 0.25
DEFAULT_RENDER_LEAD_S = 0.2


# --- closed-form shapes and drift ---------------------------------------------

@dataclass(frozen=True)
class ShapeSpec:
    """True additive contribution of one feature, in log-odds.

    kinds: ``zero``; ``linear`` (slope * (x - center)); ``ramp`` (amplitude *
    (sigmoid((x - center)/width) - 1/2)); ``bump`` (amplitude *
    exp(-((x - center)/width)^2 / 2)).
    """

    kind: str = "zero"
    center: float = 0.0
    width: float = 1.0
    slope: float = 0.0
    amplitude: float = 0.0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "linear":
            return self.slope * (x - self.center)
        if self.kind == "ramp":
            return self.amplitude * (expit((x - self.center) / self.width) - 0.5)
        if self.kind == "bump":
            z = (x - self.center) / self.width
            return self.amplitude * np.exp(-0.5 * z * z)
        raise ValueError(f"unknown shape kind {self.kind!r}")


@dataclass(frozen=True)
class DriftSpec:
    """Second-period change of a feature's shape: none, x-shift, or y-scale."""

    kind: str = "none"
    amount: float = 0.0

    def total_period2(self, shape: ShapeSpec, x: np.ndarray) -> np.ndarray:
        if self.kind == "none":
            return shape(x)
        if self.kind == "x_shift":
            return shape(np.asarray(x, dtype=float) - self.amount)
        if self.kind == "y_scale":
            return self.amount * shape(x)
        raise ValueError(f"unknown drift kind {self.kind!r}")


@dataclass(frozen=True)
class Marginal:
    kind: str  # "normal" | "uniform"
    a: float   # mean | low
    b: float   # sd   | high
    levels: int = 0  # uniform only: quantize to this many cell midpoints (sensor resolution)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "normal":
            return rng.normal(self.a, self.b, n)
        if self.kind == "uniform":
            if self.levels > 0:
                cells = rng.integers(0, self.levels, n)
                return self.a + (self.b - self.a) * (cells + 0.5) / self.levels
            return rng.uniform(self.a, self.b, n)
        raise ValueError(f"unknown marginal kind {self.kind!r}")


@dataclass(frozen=True)
class FeatureTruth:
    name: str
    marginal: Marginal
    shape: ShapeSpec = ShapeSpec()
    drift: DriftSpec = DriftSpec()

    def f_com(self, x: np.ndarray) -> np.ndarray:
        return self.shape(x)

    def f_int(self, x: np.ndarray) -> np.ndarray:
        return self.drift.total_period2(self.shape, x) - self.shape(x)


@dataclass(frozen=True)
class TruthSpec:
    features: tuple[FeatureTruth, ...]
    intercept: float = 0.0
    n_per_period: tuple[int, int] = (240, 240)
    seed: int = 0

    def feature_names(self) -> list[str]:
        return [f.name for f in self.features]

    def true_logit(self, values: dict[str, np.ndarray], period_flag: int) -> np.ndarray:
        n = len(next(iter(values.values())))
        logit = np.full(n, self.intercept)
        for feat in self.features:
            x = values[feat.name]
            logit = logit + feat.f_com(x)
            if period_flag == 1:
                logit = logit + feat.f_int(x)
        return logit


def sample_features(
    spec: TruthSpec,
    period: Period,
    participant_id: str = "SYN",
) -> tuple[FeatureTable, np.ndarray]:
    """Draw one period's feature rows and Bernoulli labels from the true model.

    Returns the table and the true logits, deterministically from
    (spec.seed, period, participant).
    """
    flag = period.flag
    pid_entropy = _participant_entropy(participant_id)
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, pid_entropy, flag]))
    n = spec.n_per_period[flag]
    values = {feat.name: feat.marginal.sample(rng, n) for feat in spec.features}
    logits = spec.true_logit(values, flag)
    labels = (rng.random(n) < expit(logits)).astype(int)
    table = FeatureTable(
        participants=np.array([participant_id] * n, dtype=object),
        periods=np.full(n, flag, dtype=int),
        timestamps=1.7e9 + flag * 1.0e7 + 300.0 * np.arange(n),
        labels=labels,
        values=values,
    )
    return table, logits


def make_dataset(spec: TruthSpec, participant_id: str = "SYN") -> tuple[FeatureTable, np.ndarray]:
    """Both periods of one synthetic participant."""
    t1, l1 = sample_features(spec, Period.P1, participant_id)
    t2, l2 = sample_features(spec, Period.P2, participant_id)
    return FeatureTable.concat([t1, t2]), np.concatenate([l1, l2])


def _participant_entropy(participant_id: str) -> int:
    import hashlib

    digest = hashlib.sha256(participant_id.encode()).digest()
    return int.from_bytes(digest[:8], "big")


# --- pulse-train rendering ------------------------------------------------------

def render_pulse_train(
    beat_times: np.ndarray,
    duration_s: float,
    rate_hz: float = 64.0,
    pulse_width_s: float = DEFAULT_PULSE_WIDTH_S,
    amplitude: float = 1.0,
) -> np.ndarray:
    """Sum of identical raised-cosine pulses centered at the beat times."""
    n = int(round(duration_s * rate_hz))
    out = np.zeros(n)
    half = pulse_width_s / 2.0
    for t in np.asarray(beat_times, dtype=float):
        i0 = max(int(math.ceil((t - half) * rate_hz)), 0)
        i1 = min(int(math.floor((t + half) * rate_hz)) + 1, n)
        if i0 >= i1:
            continue
        ts = np.arange(i0, i1) / rate_hz
        out[i0:i1] += 0.5 * amplitude * (1.0 + np.cos(2.0 * np.pi * (ts - t) / pulse_width_s))
    return out


def render_bvp(
    intervals_ms: np.ndarray,
    rate_hz: float = 64.0,
    pulse_width_s: float = DEFAULT_PULSE_WIDTH_S,
    amplitude: float = 1.0,
    lead_s: float = DEFAULT_RENDER_LEAD_S,
) -> tuple[np.ndarray, np.ndarray]:
    """Render a beat sequence with the given intervals; returns (samples, beat times).

    An empty interval list renders a single pulse.
    """
    intervals = np.asarray(intervals_ms, dtype=float)
    beat_times = lead_s + np.concatenate([[0.0], np.cumsum(intervals) / 1000.0])
    duration = beat_times[-1] + lead_s
    return render_pulse_train(beat_times, duration, rate_hz, pulse_width_s, amplitude), beat_times


# --- full-session rendering -----------------------------------------------------

@dataclass(frozen=True)
class SessionPlan:
    """Schedule and feature model for rendering one participant period."""

    participant_id: str
    period: Period
    start_time: float = 1.7e9
    n_annotations: int = 40
    first_annotation_s: float = 300.0
    spacing_s: float = 300.0
    hr: Marginal = Marginal("normal", 72.0, 8.0)
    temp: Marginal = Marginal("normal", 33.0, 0.7)
    acc_level: Marginal = Marginal("uniform", 0.05, 0.6)
    eda_min: Marginal = Marginal("normal", 2.0, 0.5)
    eda_diff: Marginal = Marginal("uniform", 0.2, 1.2)
    truth: TruthSpec | None = None  # shapes over HR/Temp_ave/Acc_ave/EDA_min/EDA_max
    filler_ibi_ms: float = 800.0
    acc_pattern: str = "constant"   # or "bout": half-sine on top of a small baseline
    seed: int = 0


@dataclass(frozen=True)
class SegmentTruth:
    """What the generator wrote into one annotation's windows."""

    annotation_time: float
    label: int
    category: EmotionCategory
    true_logit: float
    hr: float                   # implied by the in-window intervals
    n_window_beats: int
    eda_min: float
    eda_max: float
    eda_ave: float
    temp_ave: float
    acc_ave: float
    acc_max: float


def render_session(plan: SessionPlan) -> tuple[RecordingSession, list[SegmentTruth]]:
    """Render the four channels plus annotations for one period.

    Each annotation time t gets a constant-interval pulse train and an
    electrodermal ramp over [t-50, t), a constant temperature over the same
    window, and a controlled acceleration pattern over [t-240, t-50). The
    arousal label is drawn from the true logistic model on the realized
    feature targets.
    """
    rng = np.random.default_rng(np.random.SeedSequence(
        [plan.seed, _participant_entropy(plan.participant_id), plan.period.flag]
    ))
    flag = plan.period.flag
    n_ann = plan.n_annotations
    ann_times_rel = plan.first_annotation_s + plan.spacing_s * np.arange(n_ann)
    duration = float(ann_times_rel[-1] + 60.0) if n_ann else 600.0
    if plan.first_annotation_s < 290.0:
        raise ValueError("first annotation must come at least 290 s into the session")
    if n_ann > 1 and plan.spacing_s < 290.0:
        raise ValueError("annotations must be at least 290 s apart")

    # per-annotation feature targets
    hr_t = plan.hr.sample(rng, n_ann)
    temp_t = plan.temp.sample(rng, n_ann)
    acc_t = plan.acc_level.sample(rng, n_ann)
    eda_min_t = plan.eda_min.sample(rng, n_ann)
    eda_max_t = eda_min_t + np.abs(plan.eda_diff.sample(rng, n_ann))
    targets = {
        "HR": hr_t, "Temp_ave": temp_t, "Acc_ave": acc_t,
        "EDA_min": eda_min_t, "EDA_max": eda_max_t,
    }
    if plan.truth is not None:
        logits = plan.truth.true_logit(targets, flag)
    else:
        logits = np.zeros(n_ann)
    labels = (rng.random(n_ann) < expit(logits)).astype(int)
    high = (EmotionCategory.HAPPY, EmotionCategory.NERVOUS)
    low = (EmotionCategory.SAD, EmotionCategory.RELAXED)
    picks = rng.integers(0, 2, n_ann)
    categories = [
        (high if lab == 1 else low)[picks[k]] for k, lab in enumerate(labels)
    ]

    # pulse channel: filler intervals outside windows, constant target interval inside
    beat_times: list[float] = []
    window_beats: list[list[float]] = [[] for _ in range(n_ann)]
    t_beat = 0.4
    for k, t_ann in enumerate(ann_times_rel):
        a, b = t_ann - 50.0, t_ann
        seg_interval = 60000.0 / hr_t[k] / 1000.0
        while t_beat < a:
            beat_times.append(t_beat)
            t_beat += plan.filler_ibi_ms / 1000.0
        while t_beat < b:
            beat_times.append(t_beat)
            if t_beat >= a:
                window_beats[k].append(t_beat)
            t_beat += seg_interval
    while t_beat < duration:
        beat_times.append(t_beat)
        t_beat += plan.filler_ibi_ms / 1000.0
    bvp = render_pulse_train(np.asarray(beat_times), duration, STANDARD_RATES["BVP"])

    eda_rate = STANDARD_RATES["EDA"]
    temp_rate = STANDARD_RATES["TEMP"]
    acc_rate = STANDARD_RATES["ACC"]
    eda = np.full(int(round(duration * eda_rate)), 1.0)
    temp = np.full(int(round(duration * temp_rate)), 33.0)
    acc = np.zeros((int(round(duration * acc_rate)), 3))
    acc[:, 2] = 0.02

    truths: list[SegmentTruth] = []
    for k, t_ann in enumerate(ann_times_rel):
        a, b = t_ann - 50.0, t_ann
        # same floor arithmetic the extraction uses
        i0, i1 = math.floor(a * eda_rate), math.floor(b * eda_rate)
        ramp = np.linspace(eda_min_t[k], eda_max_t[k], i1 - i0)
        eda[i0:i1] = ramp
        j0, j1 = math.floor(a * temp_rate), math.floor(b * temp_rate)
        temp[j0:j1] = temp_t[k]
        a0, a1 = math.floor((t_ann - 240.0) * acc_rate), math.floor((t_ann - 50.0) * acc_rate)
        if plan.acc_pattern == "constant":
            acc[a0:a1] = 0.0
            acc[a0:a1, 0] = acc_t[k]
        elif plan.acc_pattern == "bout":
            acc[a0:a1] = 0.0
            acc[a0:a1, 2] = 0.02
            m = a1 - a0
            bout = acc_t[k] * np.sin(np.pi * np.arange(m) / (m - 1))
            acc[a0:a1, 0] = bout
        else:
            raise ValueError(f"unknown acc pattern {plan.acc_pattern!r}")

        in_window = np.asarray(window_beats[k])
        ivals = np.diff(in_window) * 1000.0
        mag = np.sqrt(np.sum(acc[a0:a1] ** 2, axis=1))
        truths.append(SegmentTruth(
            annotation_time=plan.start_time + t_ann,
            label=int(labels[k]),
            category=categories[k],
            true_logit=float(logits[k]),
            hr=60000.0 / float(np.mean(ivals)) if len(ivals) else float("nan"),
            n_window_beats=len(in_window),
            eda_min=float(np.min(ramp)),
            eda_max=float(np.max(ramp)),
            eda_ave=float(np.mean(ramp)),
            temp_ave=float(temp_t[k]),
            acc_ave=float(np.mean(mag)),
            acc_max=float(np.max(mag)),
        ))

    annotations = tuple(
        EmotionAnnotation(timestamp=plan.start_time + float(t), category=categories[k])
        for k, t in enumerate(ann_times_rel)
    )
    channels = {
        ChannelKind.BVP: SampledChannel(ChannelKind.BVP, plan.start_time, 64.0, bvp),
        ChannelKind.EDA: SampledChannel(ChannelKind.EDA, plan.start_time, 4.0, eda),
        ChannelKind.TEMP: SampledChannel(ChannelKind.TEMP, plan.start_time, 4.0, temp),
        ChannelKind.ACC: SampledChannel(ChannelKind.ACC, plan.start_time, 32.0, acc),
    }
    session = RecordingSession(
        participant_id=plan.participant_id,
        period=plan.period,
        channels=channels,
        annotations=annotations,
    )
    return session, truths


# --- presets used by the validation harness -------------------------------------

PAPER_FEATURES = ["HR", "Temp_ave", "Acc_ave", "EDA_min", "EDA_max"]


def _base_features() -> list[FeatureTruth]:
    return [
        FeatureTruth("HR", Marginal("normal", 72.0, 8.0),
                     ShapeSpec(kind="linear", center=72.0, slope=0.11)),
        FeatureTruth("Temp_ave", Marginal("normal", 33.0, 0.7),
                     ShapeSpec(kind="ramp", center=33.0, width=0.5, amplitude=-2.2)),
        FeatureTruth("Acc_ave", Marginal("uniform", 0.05, 0.6),
                     ShapeSpec(kind="linear", center=0.32, slope=4.0)),
        FeatureTruth("EDA_min", Marginal("normal", 2.0, 0.5),
                     ShapeSpec(kind="bump", center=2.0, width=0.45, amplitude=1.8)),
        FeatureTruth("EDA_max", Marginal("normal", 3.0, 0.6),
                     ShapeSpec(kind="ramp", center=3.0, width=0.4, amplitude=2.0)),
    ]


def preset_null(seed: int = 0, n_per_period: int = 240) -> TruthSpec:
    """Identical mechanism in both periods (all interaction shapes zero)."""
    return TruthSpec(
        features=tuple(_base_features()),
        intercept=-0.3,
        n_per_period=(n_per_period, n_per_period),
        seed=seed,
    )


def preset_x_shift(
    seed: int = 0,
    n_per_period: int = 240,
    drift_feature: str = "EDA_min",
    shift: float = 0.9,
) -> TruthSpec:
    """One feature's shape slides along x in the second period; others stable."""
    feats = []
    for feat in _base_features():
        if feat.name == drift_feature:
            feats.append(replace(feat, drift=DriftSpec(kind="x_shift", amount=shift)))
        else:
            feats.append(feat)
    return TruthSpec(
        features=tuple(feats),
        intercept=-0.3,
        n_per_period=(n_per_period, n_per_period),
        seed=seed,
    )


def preset_y_scale(
    seed: int = 0,
    n_per_period: int = 240,
    drift_feature: str = "EDA_min",
    scale: float = 2.0,
) -> TruthSpec:
    """One feature's shape is amplified in the second period without moving."""
    feats = []
    for feat in _base_features():
        if feat.name == drift_feature:
            feats.append(replace(feat, drift=DriftSpec(kind="y_scale", amount=scale)))
        else:
            feats.append(feat)
    return TruthSpec(
        features=tuple(feats),
        intercept=-0.3,
        n_per_period=(n_per_period, n_per_period),
        seed=seed,
    )


def preset_calibrated_drift(seed: int = 0, n_per_period: int = 240) -> TruthSpec:
    """Drift preset tuned so a first-period model loses accuracy on
    second-period data at 90-per-period training draws: the x-shift breaks
    transfer (cases b vs c) and the damped second-period response keeps the
    second period intrinsically harder (cases a vs c)."""
    feats = []
    for feat in _base_features():
        if feat.name == "EDA_min":
            feats.append(replace(feat, drift=DriftSpec(kind="x_shift", amount=1.2)))
        elif feat.name == "HR":
            feats.append(replace(feat, drift=DriftSpec(kind="y_scale", amount=0.40)))
        else:
            feats.append(feat)
    return TruthSpec(
        features=tuple(feats),
        intercept=-0.3,
        n_per_period=(n_per_period, n_per_period),
        seed=seed,
    )


def preset_shape_recovery(seed: int = 0, n_per_period: int = 2000) -> TruthSpec:
    """Five smooth monotone shapes on sensor-resolution (8-level) marginals,
    sized so the per-bin information supports faithful shape recovery."""
    feats = (
        FeatureTruth("f1", Marginal("uniform", 50.0, 100.0, levels=8),
                     ShapeSpec("linear", center=75.0, slope=0.062)),
        FeatureTruth("f2", Marginal("uniform", 31.0, 35.0, levels=8),
                     ShapeSpec("ramp", center=33.0, width=0.7, amplitude=-3.2)),
        FeatureTruth("f3", Marginal("uniform", 0.0, 0.7, levels=8),
                     ShapeSpec("linear", center=0.35, slope=4.8)),
        FeatureTruth("f4", Marginal("uniform", 0.5, 3.5, levels=8),
                     ShapeSpec("ramp", center=2.0, width=0.5, amplitude=2.8)),
        FeatureTruth("f5", Marginal("uniform", 1.0, 5.0, levels=8),
                     ShapeSpec("ramp", center=3.0, width=0.7, amplitude=-3.2)),
    )
    return TruthSpec(
        features=feats,
        intercept=-0.3,
        n_per_period=(n_per_period, n_per_period),
        seed=seed,
    )


def preset_selection_benchmark(seed: int = 0, n_total: int = 2000,
                               duplicate_noise: int = 0) -> TruthSpec:
    """All 17 named features: the five the wearable study settled on are
    informative, the other twelve are pure noise (optionally plus extra
    duplicated noise columns named noise_dup_*)."""
    from .tables import FEATURE_NAMES

    informative = {f.name: f for f in _base_features()}
    feats = []
    for name in FEATURE_NAMES:
        if name in informative:
            feats.append(informative[name])
        else:
            feats.append(FeatureTruth(name, Marginal("normal", 0.0, 1.0)))
    for i in range(duplicate_noise):
        feats.append(FeatureTruth(f"noise_dup_{i}", Marginal("normal", 0.0, 1.0)))
    half = n_total // 2
    return TruthSpec(
        features=tuple(feats),
        intercept=-0.3,
        n_per_period=(half, n_total - half),
        seed=seed,
    )


PRESETS = {
    "null": preset_null,
    "x_shift": preset_x_shift,
    "y_scale": preset_y_scale,
    "calibrated": preset_calibrated_drift,
}


def truth_curves(spec: TruthSpec, grids: dict[str, np.ndarray]) -> dict[str, dict[str, np.ndarray]]:
    """True common/total curves on the given grids, for oracle comparisons."""
    out = {}
    for feat in spec.features:
        g = grids[feat.name]
        com = feat.f_com(g)
        out[feat.name] = {"com": com, "total": com + feat.f_int(g)}
    return out


# --- TruthSpec JSON (custom generator definitions for the CLI) -------------------

def truthspec_to_dict(spec: TruthSpec) -> dict:
    return {
        "intercept": spec.intercept,
        "n_per_period": list(spec.n_per_period),
        "seed": spec.seed,
        "features": [
            {
                "name": f.name,
                "marginal": {"kind": f.marginal.kind, "a": f.marginal.a,
                             "b": f.marginal.b, "levels": f.marginal.levels},
                "shape": {"kind": f.shape.kind, "center": f.shape.center,
                          "width": f.shape.width, "slope": f.shape.slope,
                          "amplitude": f.shape.amplitude},
                "drift": {"kind": f.drift.kind, "amount": f.drift.amount},
            }
            for f in spec.features
        ],
    }


def truthspec_from_dict(data: dict) -> TruthSpec:
    features = tuple(
        FeatureTruth(
            name=entry["name"],
            marginal=Marginal(**entry["marginal"]),
            shape=ShapeSpec(**entry.get("shape", {"kind": "zero"})),
            drift=DriftSpec(**entry.get("drift", {"kind": "none"})),
        )
        for entry in data["features"]
    )
    return TruthSpec(
        features=features,
        intercept=float(data.get("intercept", 0.0)),
        n_per_period=tuple(data.get("n_per_period", (240, 240))),
        seed=int(data.get("seed", 0)),
    )
