"""Tabular container for per-segment feature vectors and its CSV format.

One row per labeled segment: identity columns (participant, period,
timestamp, label) followed by the 17 feature columns. Missing values are
NaN in memory and empty fields on disk. Lines starting with ``#`` are
reserved for metadata (the pipeline writes its config hash there).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signals import Period

# Canonical feature order; doubles as the tie-break order in selection.
FEATURE_NAMES = [
    "SD", "CV", "RMSSD", "pNN50", "HR", "L", "T", "LF", "HF", "LF_HF",
    "EDA_ave", "EDA_max", "EDA_min", "EDA_diff", "Temp_ave", "Acc_ave", "Acc_max",
]

CSV_HEADER = "participant,period,timestamp,label," + ",".join(FEATURE_NAMES)


def _fmt(v: float) -> str:
    return "" if not np.isfinite(v) else repr(float(v))


@dataclass
class FeatureTable:
    participants: np.ndarray  # (n,) str
    periods: np.ndarray      # (n,) int, 0 = first period, 1 = second
    timestamps: np.ndarray   # (n,) float epoch seconds
    labels: np.ndarray       # (n,) int in {0, 1}
    values: dict[str, np.ndarray]

    def __post_init__(self):
        self.participants = np.asarray(self.participants, dtype=object)
        self.periods = np.asarray(self.periods, dtype=int)
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        self.values = {k: np.asarray(v, dtype=float) for k, v in self.values.items()}
        n = len(self.participants)
        for name, arr in [("periods", self.periods), ("timestamps", self.timestamps),
                          ("labels", self.labels)]:
            if len(arr) != n:
                raise ValueError(f"{name} has {len(arr)} rows, expected {n}")
        for feat, arr in self.values.items():
            if len(arr) != n:
                raise ValueError(f"feature {feat!r} has {len(arr)} rows, expected {n}")

    def __len__(self) -> int:
        return len(self.participants)

    @property
    def feature_names(self) -> list[str]:
        return list(self.values)

    def subset(self, mask_or_idx) -> "FeatureTable":
        return FeatureTable(
            participants=self.participants[mask_or_idx],
            periods=self.periods[mask_or_idx],
            timestamps=self.timestamps[mask_or_idx],
            labels=self.labels[mask_or_idx],
            values={k: v[mask_or_idx] for k, v in self.values.items()},
        )

    def matrix(self, features: list[str]) -> np.ndarray:
        """Column-stack the named features into an (n, k) float matrix."""
        missing = [f for f in features if f not in self.values]
        if missing:
            raise KeyError(f"features not in table: {missing}")
        if not features:
            return np.empty((len(self), 0))
        return np.column_stack([self.values[f] for f in features])

    def complete_rows(self, features: list[str]) -> np.ndarray:
        """Boolean mask of rows with no missing value among ``features``."""
        mask = np.ones(len(self), dtype=bool)
        for f in features:
            mask &= np.isfinite(self.values[f])
        return mask

    def participant_ids(self) -> list[str]:
        return sorted(set(self.participants.tolist()))

    @classmethod
    def concat(cls, tables: list["FeatureTable"]) -> "FeatureTable":
        if not tables:
            return cls.empty()
        feats = tables[0].feature_names
        return cls(
            participants=np.concatenate([t.participants for t in tables]),
            periods=np.concatenate([t.periods for t in tables]),
            timestamps=np.concatenate([t.timestamps for t in tables]),
            labels=np.concatenate([t.labels for t in tables]),
            values={f: np.concatenate([t.values[f] for t in tables]) for f in feats},
        )

    @classmethod
    def empty(cls, features: list[str] | None = None) -> "FeatureTable":
        feats = FEATURE_NAMES if features is None else features
        return cls(
            participants=np.empty(0, dtype=object),
            periods=np.empty(0, dtype=int),
            timestamps=np.empty(0, dtype=float),
            labels=np.empty(0, dtype=int),
            values={f: np.empty(0, dtype=float) for f in feats},
        )

    def to_csv(self) -> str:
        # canonical column order first, then any extra (synthetic) features
        feats = [f for f in FEATURE_NAMES if f in self.values]
        feats += [f for f in self.feature_names if f not in FEATURE_NAMES]
        lines = ["participant,period,timestamp,label," + ",".join(feats)]
        for i in range(len(self)):
            period = Period.P2.value if self.periods[i] == 1 else Period.P1.value
            cells = [
                str(self.participants[i]),
                period,
                repr(float(self.timestamps[i])),
                str(int(self.labels[i])),
            ]
            cells += [_fmt(self.values[f][i]) for f in feats]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "FeatureTable":
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if not lines:
            raise ValueError("empty feature table CSV")
        header = lines[0].split(",")
        if header[:4] != ["participant", "period", "timestamp", "label"]:
            raise ValueError("feature table must start with participant,period,timestamp,label")
        feats = header[4:]
        parts, periods, ts, labels = [], [], [], []
        cols: dict[str, list[float]] = {f: [] for f in feats}
        for i, line in enumerate(lines[1:], start=2):
            cells = line.split(",")
            if len(cells) != len(header):
                raise ValueError(f"row {i}: expected {len(header)} cells, got {len(cells)}")
            parts.append(cells[0])
            periods.append(Period(cells[1]).flag)
            ts.append(float(cells[2]))
            labels.append(int(cells[3]))
            for f, cell in zip(feats, cells[4:]):
                cols[f].append(float(cell) if cell.strip() else float("nan"))
        return cls(
            participants=np.array(parts, dtype=object),
            periods=np.array(periods, dtype=int),
            timestamps=np.array(ts, dtype=float),
            labels=np.array(labels, dtype=int),
            values={f: np.array(v, dtype=float) for f, v in cols.items()},
        )
