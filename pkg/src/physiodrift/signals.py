"""Sensor data model: channel CSV ingestion, arousal labels, and segment pairing.

A recording session bundles four wristband channels (BVP, EDA, TEMP, ACC)
with the emotion annotations logged during the same span. Each annotation is
paired with the 50 s of BVP/EDA/TEMP that precede it and the 240-to-50 s
pre-annotation ACC window; annotations whose windows fall outside the
recorded span are skipped, never fatal.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

# Nominal device rates in Hz; other rates parse fine but are flagged.
STANDARD_RATES = {"BVP": 64.0, "EDA": 4.0, "TEMP": 4.0, "ACC": 32.0}

# Raw ACC integers are 1/64 g per count.
ACC_RAW_PER_G = 64.0

# Pre-annotation windows in seconds.
SEGMENT_WINDOW_S = 50.0
ACC_WINDOW_START_S = 240.0  # window is [t-240, t-50) before annotation time t
ACC_WINDOW_END_S = 50.0


class ChannelKind(str, Enum):
    BVP = "BVP"
    EDA = "EDA"
    TEMP = "TEMP"
    ACC = "ACC"


class EmotionCategory(str, Enum):
    HAPPY = "Happy"
    NERVOUS = "Nervous"
    SAD = "Sad"
    RELAXED = "Relaxed"


class Period(str, Enum):
    P1 = "P1"
    P2 = "P2"

    @property
    def flag(self) -> int:
        """Binary period indicator: 0 for the first period, 1 for the second."""
        return 0 if self is Period.P1 else 1


# Quadrant positions of the four categories on the activation axis.
DEFAULT_AROUSAL_MAPPING = {
    EmotionCategory.HAPPY: 1,
    EmotionCategory.NERVOUS: 1,
    EmotionCategory.SAD: 0,
    EmotionCategory.RELAXED: 0,
}


class ChannelParseError(ValueError):
    """Malformed channel CSV; carries the offending 1-based row number."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class ChannelValidationError(ValueError):
    pass


@dataclass(frozen=True)
class SampledChannel:
    """One uniformly sampled sensor stream.

    ``samples`` is a (n,) float array for scalar kinds and (n, 3) for ACC
    (already scaled to g). ``nonstandard_rate`` flags rates that differ from
    the nominal device rate for the kind.
    """

    kind: ChannelKind
    start_time: float
    rate: float
    samples: np.ndarray
    nonstandard_rate: bool = False

    def __post_init__(self):
        if self.rate <= 0:
            raise ChannelValidationError(f"rate must be positive, got {self.rate}")
        samples = np.asarray(self.samples, dtype=float)
        if samples.shape[0] < 1:
            raise ChannelValidationError("channel must contain at least one sample")
        if self.kind is ChannelKind.ACC:
            if samples.ndim != 2 or samples.shape[1] != 3:
                raise ChannelValidationError("ACC samples must be 3-vectors")
        elif samples.ndim != 1:
            raise ChannelValidationError(f"{self.kind.value} samples must be scalar")
        object.__setattr__(self, "samples", samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.rate

    @property
    def end_time(self) -> float:
        return self.start_time + self.duration_s


@dataclass(frozen=True)
class EmotionAnnotation:
    timestamp: float
    category: EmotionCategory
    sublabel: str = ""


@dataclass(frozen=True)
class ArousalLabel:
    value: int

    def __post_init__(self):
        if self.value not in (0, 1):
            raise ValueError(f"arousal label must be 0 or 1, got {self.value}")


@dataclass(frozen=True)
class RecordingSession:
    participant_id: str
    period: Period
    channels: dict[ChannelKind, SampledChannel]
    annotations: tuple[EmotionAnnotation, ...]

    def __post_init__(self):
        if set(self.channels) != set(ChannelKind):
            missing = [k.value for k in ChannelKind if k not in self.channels]
            raise ValueError(f"session needs one channel per kind; missing {missing}")
        for kind, ch in self.channels.items():
            if ch.kind is not kind:
                raise ValueError(f"channel stored under {kind.value} has kind {ch.kind.value}")
        object.__setattr__(
            self,
            "annotations",
            tuple(sorted(self.annotations, key=lambda a: a.timestamp)),
        )


@dataclass(frozen=True)
class LabeledSegment:
    """Physiological slices paired with one arousal annotation."""

    participant_id: str
    period: Period
    annotation_time: float
    category: EmotionCategory
    label: ArousalLabel
    bvp_slice: np.ndarray
    eda_slice: np.ndarray
    temp_slice: np.ndarray
    acc_slice: np.ndarray
    bvp_rate: float = STANDARD_RATES["BVP"]
    eda_rate: float = STANDARD_RATES["EDA"]
    temp_rate: float = STANDARD_RATES["TEMP"]
    acc_rate: float = STANDARD_RATES["ACC"]


def parse_channel_csv(text: str, kind: ChannelKind) -> SampledChannel:
    """Parse an E4-style channel export.

    Row 1 holds the start epoch, row 2 the sample rate, the rest one sample
    per row. ACC files carry three comma-separated columns in every row and
    raw counts are scaled by 1/64 to g.
    """
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if len(lines) < 3:
        raise ChannelParseError(
            f"expected start row, rate row and at least one sample row, got {len(lines)} rows"
        )
    n_cols = 3 if kind is ChannelKind.ACC else 1

    def parse_row(line: str, row: int) -> list[float]:
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != n_cols:
            raise ChannelParseError(
                f"expected {n_cols} column(s), got {len(parts)}", row=row
            )
        try:
            return [float(p) for p in parts]
        except ValueError:
            raise ChannelParseError(f"non-numeric value {line!r}", row=row) from None

    start_vals = parse_row(lines[0], 1)
    rate_vals = parse_row(lines[1], 2)
    if len(set(start_vals)) != 1:
        raise ChannelParseError("start-time columns disagree", row=1)
    if len(set(rate_vals)) != 1:
        raise ChannelParseError("rate columns disagree", row=2)
    start_time, rate = start_vals[0], rate_vals[0]
    if rate <= 0:
        raise ChannelValidationError(f"rate must be positive, got {rate}")

    data = [parse_row(line, i + 3) for i, line in enumerate(lines[2:])]
    if kind is ChannelKind.ACC:
        samples = np.asarray(data, dtype=float) / ACC_RAW_PER_G
    else:
        samples = np.asarray([row[0] for row in data], dtype=float)
    return SampledChannel(
        kind=kind,
        start_time=start_time,
        rate=rate,
        samples=samples,
        nonstandard_rate=(rate != STANDARD_RATES[kind.value]),
    )


def channel_to_csv(channel: SampledChannel) -> str:
    """Inverse of :func:`parse_channel_csv`; reparsing yields identical fields."""
    if channel.kind is ChannelKind.ACC:
        header = [",".join([repr(float(channel.start_time))] * 3),
                  ",".join([repr(float(channel.rate))] * 3)]
        raw = channel.samples * ACC_RAW_PER_G
        rows = [",".join(repr(float(v)) for v in row) for row in raw]
    else:
        header = [repr(float(channel.start_time)), repr(float(channel.rate))]
        rows = [repr(float(v)) for v in channel.samples]
    return "\n".join(header + rows) + "\n"


def map_arousal(
    category: EmotionCategory,
    mapping: dict[EmotionCategory, int] | None = None,
) -> ArousalLabel:
    """Map an emotion category to its binary arousal label.

    Pure table lookup; the default mapping puts Happy/Nervous high and
    Sad/Relaxed low.
    """
    table = DEFAULT_AROUSAL_MAPPING if mapping is None else mapping
    if category not in table:
        raise KeyError(f"no arousal mapping for category {category!r}")
    return ArousalLabel(table[category])


def _slice_indices(channel: SampledChannel, t_start: float, t_end: float) -> tuple[int, int]:
    # floor rounding keeps indices deterministic and off by at most one sample
    i0 = math.floor((t_start - channel.start_time) * channel.rate)
    i1 = math.floor((t_end - channel.start_time) * channel.rate)
    return i0, i1


def extract_labeled_segments(
    session: RecordingSession,
    mapping: dict[EmotionCategory, int] | None = None,
) -> list[LabeledSegment]:
    """Pair each annotation with its preceding signal slices.

    Annotations whose BVP/EDA/TEMP window [t-50, t) or ACC window
    [t-240, t-50) is not fully recorded are skipped and logged.
    """
    segments = []
    for ann in session.annotations:
        t = ann.timestamp
        slices = {}
        reason = None
        for kind, (w_start, w_end) in {
            ChannelKind.BVP: (t - SEGMENT_WINDOW_S, t),
            ChannelKind.EDA: (t - SEGMENT_WINDOW_S, t),
            ChannelKind.TEMP: (t - SEGMENT_WINDOW_S, t),
            ChannelKind.ACC: (t - ACC_WINDOW_START_S, t - ACC_WINDOW_END_S),
        }.items():
            ch = session.channels[kind]
            i0, i1 = _slice_indices(ch, w_start, w_end)
            if i0 < 0 or i1 > len(ch.samples):
                reason = f"{kind.value} window [{w_start:.1f}, {w_end:.1f}) outside recording"
                break
            slices[kind] = ch.samples[i0:i1]
        if reason is not None:
            log.info(
                "skipping annotation at %.3f (%s/%s): %s",
                t, session.participant_id, session.period.value, reason,
            )
            continue
        segments.append(
            LabeledSegment(
                participant_id=session.participant_id,
                period=session.period,
                annotation_time=t,
                category=ann.category,
                label=map_arousal(ann.category, mapping),
                bvp_slice=slices[ChannelKind.BVP],
                eda_slice=slices[ChannelKind.EDA],
                temp_slice=slices[ChannelKind.TEMP],
                acc_slice=slices[ChannelKind.ACC],
                bvp_rate=session.channels[ChannelKind.BVP].rate,
                eda_rate=session.channels[ChannelKind.EDA].rate,
                temp_rate=session.channels[ChannelKind.TEMP].rate,
                acc_rate=session.channels[ChannelKind.ACC].rate,
            )
        )
    return segments


# --- Session directory layout -------------------------------------------------
#
# <session dir>/
#   BVP.csv  EDA.csv  TEMP.csv  ACC.csv   channel exports (format above)
#   annotations.csv                       header: timestamp,category,sublabel
#   session.json                          {"participant_id": ..., "period": "P1"|"P2"}

CHANNEL_FILES = {
    ChannelKind.BVP: "BVP.csv",
    ChannelKind.EDA: "EDA.csv",
    ChannelKind.TEMP: "TEMP.csv",
    ChannelKind.ACC: "ACC.csv",
}

ANNOTATION_HEADER = "timestamp,category,sublabel"


def parse_annotations_csv(text: str) -> list[EmotionAnnotation]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != ANNOTATION_HEADER:
        raise ChannelParseError(f"annotations.csv must start with header {ANNOTATION_HEADER!r}")
    anns = []
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split(",", 2)
        if len(parts) < 2:
            raise ChannelParseError("expected timestamp,category[,sublabel]", row=i)
        try:
            ts = float(parts[0])
        except ValueError:
            raise ChannelParseError(f"bad timestamp {parts[0]!r}", row=i) from None
        try:
            category = EmotionCategory(parts[1].strip())
        except ValueError:
            raise ChannelParseError(f"unknown category {parts[1]!r}", row=i) from None
        sublabel = parts[2].strip() if len(parts) > 2 else ""
        anns.append(EmotionAnnotation(timestamp=ts, category=category, sublabel=sublabel))
    return anns


def annotations_to_csv(annotations: list[EmotionAnnotation] | tuple[EmotionAnnotation, ...]) -> str:
    rows = [ANNOTATION_HEADER]
    rows += [f"{repr(float(a.timestamp))},{a.category.value},{a.sublabel}" for a in annotations]
    return "\n".join(rows) + "\n"


def load_session(session_dir: str | Path) -> RecordingSession:
    """Read a session directory into a RecordingSession."""
    session_dir = Path(session_dir)
    manifest_path = session_dir / "session.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"missing session manifest {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    channels = {}
    for kind, fname in CHANNEL_FILES.items():
        path = session_dir / fname
        if not path.exists():
            raise FileNotFoundError(f"missing channel file {path}")
        channels[kind] = parse_channel_csv(path.read_text(), kind)
    annotations = parse_annotations_csv((session_dir / "annotations.csv").read_text())
    return RecordingSession(
        participant_id=str(manifest["participant_id"]),
        period=Period(manifest["period"]),
        channels=channels,
        annotations=tuple(annotations),
    )


def write_session(session: RecordingSession, session_dir: str | Path,
                  extra_manifest: dict | None = None) -> None:
    """Write a session directory in the ingestion layout."""
    session_dir = Path(session_dir)
    session_dir.mkdir(parents=True, exist_ok=True)
    for kind, fname in CHANNEL_FILES.items():
        (session_dir / fname).write_text(channel_to_csv(session.channels[kind]))
    (session_dir / "annotations.csv").write_text(annotations_to_csv(session.annotations))
    manifest = {"participant_id": session.participant_id, "period": session.period.value}
    if extra_manifest:
        manifest.update(extra_manifest)
    (session_dir / "session.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    )


def discover_sessions(root: str | Path) -> list[Path]:
    """Find every session directory (identified by session.json) under root."""
    root = Path(root)
    return sorted(p.parent for p in root.rglob("session.json"))


@dataclass
class SessionIssue:
    severity: str  # "warning" | "error"
    message: str


def validate_session(session: RecordingSession) -> list[SessionIssue]:
    """Non-fatal conformance checks used by the ingest inventory."""
    issues = []
    for kind, ch in session.channels.items():
        if ch.nonstandard_rate:
            issues.append(SessionIssue(
                "warning",
                f"{kind.value} rate {ch.rate} Hz differs from nominal {STANDARD_RATES[kind.value]} Hz",
            ))
    if session.annotations:
        span_start = max(ch.start_time for ch in session.channels.values())
        span_end = min(ch.end_time for ch in session.channels.values())
        for ann in session.annotations:
            if not (span_start <= ann.timestamp <= span_end):
                issues.append(SessionIssue(
                    "warning",
                    f"annotation at {ann.timestamp:.3f} outside recorded span "
                    f"[{span_start:.3f}, {span_end:.3f}]",
                ))
    return issues
