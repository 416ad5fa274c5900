"""Pipeline configuration: one canonical record drives every stage.

All randomness flows from the single seed, and the SHA-256 hash of the
canonical config JSON is embedded in every output artifact so mixed-config
artifacts can be refused.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .ebm import EbmConfig
from .features import ExtractionSettings
from .selection import SelectionSettings

ENV_PREFIX = "PHYSIODRIFT_"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PathsConfig:
    sessions_root: str = "sessions"
    out_dir: str = "out"


@dataclass(frozen=True)
class EnsembleSettings:
    n_repeats: int = 100
    n_per_period: int = 90
    grid_points: int = 64


@dataclass(frozen=True)
class OutlierSettings:
    sigma: float = 3.0


@dataclass(frozen=True)
class SynthSettings:
    preset: str = "null"
    participants: tuple[str, ...] = ("S1",)
    n_annotations_per_period: int = 100
    spacing_s: float = 300.0
    start_time: float = 1.7e9


@dataclass(frozen=True)
class PipelineConfig:
    paths: PathsConfig = PathsConfig()
    extraction: ExtractionSettings = ExtractionSettings()
    outliers: OutlierSettings = OutlierSettings()
    selection: SelectionSettings = SelectionSettings()
    ebm: EbmConfig = EbmConfig()
    ensemble: EnsembleSettings = EnsembleSettings()
    synth: SynthSettings = SynthSettings()
    features_override: tuple[str, ...] | None = None  # skip selection.json when set
    seed: int = 7

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:12]

    def validate(self) -> None:
        ex, eb, sel, ens = self.extraction, self.ebm, self.selection, self.ensemble
        checks = [
            (ex.filter_order >= 1, "extraction.filter_order must be >= 1"),
            (ex.filter_cutoff_hz > 0, "extraction.filter_cutoff_hz must be positive"),
            (ex.window_s > 0 and ex.stride_s > 0, "window and stride must be positive"),
            (ex.ibi_min_ms > 0 and ex.ibi_max_ms > ex.ibi_min_ms,
             "IBI range must satisfy 0 < min < max"),
            (0 < ex.max_ibi_drop_fraction <= 1, "max_ibi_drop_fraction must be in (0, 1]"),
            (ex.min_beats_per_50s >= 2, "min_beats_per_50s must be >= 2"),
            (self.outliers.sigma > 0, "outliers.sigma must be positive"),
            (0 <= sel.k <= 17, "selection.k must be in [0, 17]"),
            (sel.folds >= 2, "selection.folds must be >= 2"),
            (eb.rounds >= 1, "ebm.rounds must be >= 1"),
            (0 < eb.learning_rate <= 10, "ebm.learning_rate must be in (0, 10]"),
            (eb.max_bins >= 2, "ebm.max_bins must be >= 2"),
            (eb.inner_bags >= 1, "ebm.inner_bags must be >= 1"),
            (ens.n_repeats >= 1, "ensemble.n_repeats must be >= 1"),
            (ens.n_per_period >= 2, "ensemble.n_per_period must be >= 2"),
            (ens.grid_points >= 3, "ensemble.grid_points must be >= 3"),
            (self.seed >= 0, "seed must be non-negative"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)


def _from_dict(cls, data: dict):
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        if f.name in _NESTED and isinstance(value, dict):
            value = _from_dict(_NESTED[f.name], value)
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[f.name] = value
    return cls(**kwargs)


_NESTED = {
    "paths": PathsConfig,
    "extraction": ExtractionSettings,
    "outliers": OutlierSettings,
    "selection": SelectionSettings,
    "ebm": EbmConfig,
    "wrapper": EbmConfig,
    "ensemble": EnsembleSettings,
    "synth": SynthSettings,
}


def config_from_dict(data: dict) -> PipelineConfig:
    unknown = set(data) - {f.name for f in dataclasses.fields(PipelineConfig)}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return _from_dict(PipelineConfig, data)
    except TypeError as err:
        raise ConfigError(str(err)) from None


def load_config(
    path: str | Path | None = None,
    overrides: dict | None = None,
    env: dict | None = None,
) -> PipelineConfig:
    """Defaults, then config file, then PHYSIODRIFT_* env vars, then flags."""
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as err:
            raise ConfigError(f"config file is not valid JSON: {err}") from None
    env = os.environ if env is None else env
    for key, raw in sorted(env.items()):
        if not key.startswith(ENV_PREFIX):
            continue
        dotted = key[len(ENV_PREFIX):].lower().split("__")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        for part in dotted[:-1]:
            node = node.setdefault(part, {})
        node[dotted[-1]] = value
    for dotted_key, value in (overrides or {}).items():
        node = data
        parts = dotted_key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    config = config_from_dict(data)
    config.validate()
    return config


def hashed_json(payload: dict, config_hash: str) -> str:
    out = {"config_hash": config_hash}
    out.update(payload)
    return json.dumps(out, sort_keys=True, indent=2) + "\n"


def hashed_csv(body: str, config_hash: str) -> str:
    return f"# config_hash={config_hash}\n{body}"


def read_embedded_hash(text: str) -> str | None:
    """Extract the config hash from a JSON or hash-commented CSV artifact."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            return json.loads(text).get("config_hash")
        except json.JSONDecodeError:
            return None
    for line in text.splitlines():
        if line.startswith("# config_hash="):
            return line.split("=", 1)[1].strip()
        if not line.startswith("#"):
            break
    return None
