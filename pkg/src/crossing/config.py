"""Session configuration: JSON file in, validated dataclasses out.

Every key is optional and falls back to the documented default. Unknown
keys are rejected with their full path so typos surface immediately;
JSON syntax errors are reported with line and column.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .driver import ConditionedDriver, DriverProfile, default_profiles
from .mdp import RewardParams
from .sim import WorldConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SessionConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    reward: RewardParams = field(default_factory=RewardParams)
    driver: ConditionedDriver = field(default_factory=default_profiles)
    seed: int = 0
    aware_first: bool = False
    lr: float = 1e-3
    reward_scale: float = 100.0
    freeze_after_exploration: bool = False
    blocks: int = 16
    trials_per_block: int = 12
    happy_tracks: tuple[str, ...] = ("happy_a", "happy_b")
    sad_tracks: tuple[str, ...] = ("sad_a", "sad_b")
    inter_trial_pause_s: float = 3.0
    pre_block_pause_s: float = 3.0
    state_sample_hz: float = 2.0
    warmup_seconds: float = 180.0
    resume_timeout_s: float = 60.0
    realtime: bool = True

    @property
    def total_trials(self) -> int:
        return self.blocks * self.trials_per_block

    def __post_init__(self) -> None:
        if self.blocks < 2 or self.blocks % 2 != 0:
            raise ConfigError("blocks must be even and at least 2")
        if self.trials_per_block < 1:
            raise ConfigError("trials_per_block must be at least 1")
        if self.total_trials % 4 != 0:
            raise ConfigError("blocks * trials_per_block must divide into 4 phases")
        if not self.happy_tracks or not self.sad_tracks:
            raise ConfigError("each track pool needs at least one track")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.reward_scale <= 0:
            raise ConfigError("reward_scale must be positive")


def _build(cls, data: dict, path: str):
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown config key '{path}{key}'")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config section '{path.rstrip('.') or '<root>'}': {exc}") from exc


def config_from_dict(data: dict[str, Any]) -> SessionConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    data = dict(data)
    world = _build(WorldConfig, data.pop("world", {}), "world.")
    reward = _build(RewardParams, data.pop("reward", {}), "reward.")
    driver_data = data.pop("driver", None)
    if driver_data is None:
        driver = default_profiles()
    else:
        if not isinstance(driver_data, dict):
            raise ConfigError("config key 'driver' must be an object")
        unknown = set(driver_data) - {"happy", "sad"}
        if unknown:
            raise ConfigError(f"unknown config key 'driver.{sorted(unknown)[0]}'")
        defaults = default_profiles()
        happy = _merged_profile(defaults.happy, driver_data.get("happy", {}), "driver.happy.")
        sad = _merged_profile(defaults.sad, driver_data.get("sad", {}), "driver.sad.")
        driver = ConditionedDriver(happy=happy, sad=sad)
    for key in ("happy_tracks", "sad_tracks"):
        if key in data:
            value = data[key]
            if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                raise ConfigError(f"config key '{key}' must be a list of strings")
            data[key] = tuple(value)
    cfg = _build(SessionConfig, {**data, "world": world, "reward": reward, "driver": driver}, "")
    return cfg


def _merged_profile(base: DriverProfile, override: dict, path: str) -> DriverProfile:
    if not isinstance(override, dict):
        raise ConfigError(f"config section '{path.rstrip('.')}' must be an object")
    merged = asdict(base)
    for key, value in override.items():
        if key not in merged:
            raise ConfigError(f"unknown config key '{path}{key}'")
        merged[key] = value
    try:
        return DriverProfile(**merged)
    except ValueError as exc:
        raise ConfigError(f"invalid config section '{path.rstrip('.')}': {exc}") from exc


def load_config(path: str | Path) -> SessionConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    try:
        return config_from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_to_dict(cfg: SessionConfig) -> dict[str, Any]:
    data = asdict(cfg)
    data["happy_tracks"] = list(cfg.happy_tracks)
    data["sad_tracks"] = list(cfg.sad_tracks)
    return data


def save_config(cfg: SessionConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")
