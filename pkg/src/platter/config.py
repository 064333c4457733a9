"""Run configuration: one JSON file drives composition, preprocessing, and
evaluation, with command-line flags layered on top."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from platter.composer import ComposerConfig
from platter.wordprep import PrepConfig

DEFAULT_THRESHOLDS = [0.5, 0.75, 0.9]
DEFAULT_SPLITS = {"train": 0.8, "val": 0.1, "test": 0.1}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    language: str = "synthetic"
    thresholds: list[float] = field(default_factory=lambda: list(DEFAULT_THRESHOLDS))
    splits: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_SPLITS))
    composer: ComposerConfig = field(default_factory=ComposerConfig)
    prep: PrepConfig = field(default_factory=PrepConfig)


def _build(cls, data: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {where} option(s): {sorted(unknown)}")
    coerced = dict(data)
    for f in fields(cls):
        if f.name in coerced and isinstance(coerced[f.name], list):
            coerced[f.name] = tuple(coerced[f.name])
    try:
        return cls(**coerced)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {where} config: {exc}") from exc


def load_config(path: Path | str | None) -> RunConfig:
    """Load a RunConfig from a JSON file; None gives pure defaults."""
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc

    known = {"seed", "language", "thresholds", "splits", "composer", "prep"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config option(s): {sorted(unknown)}")

    seed = int(data.get("seed", 0))
    composer_data = dict(data.get("composer", {}))
    composer_data.setdefault("seed", seed)  # the one --seed flows everywhere
    cfg = RunConfig(
        seed=seed,
        language=data.get("language", "synthetic"),
        thresholds=[float(t) for t in data.get("thresholds", DEFAULT_THRESHOLDS)],
        splits={str(k): float(v) for k, v in data.get("splits", DEFAULT_SPLITS).items()},
        composer=_build(ComposerConfig, composer_data, "composer"),
        prep=_build(PrepConfig, data.get("prep", {}), "prep"),
    )
    for t in cfg.thresholds:
        if not (0.0 < t <= 1.0):
            raise ConfigError(f"IoU threshold {t} outside (0, 1]")
    return cfg
