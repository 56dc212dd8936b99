"""Engine configuration: every tunable threshold in one dataclass.

Defaults reproduce the reference deployment: 12 s trigger interval, 16-slot
comparison window at 3.2 Hz with a 0.6 cosine threshold and 0.8 changed
fraction, 4.91 degree / 1000 ms fixations at 0.6 gaze confidence, 0.75
dedup threshold over the top-10 history, at most 2 items per delivery.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .agents import PipelineVariant
from .providers.base import ProviderConfig, ProviderTierConfig

CONFIG_SCHEMA = "engine_config/1"


class ConfigError(Exception):
    pass


@dataclass
class EngineConfig:
    interval_ms: int = 12000
    window_size: int = 16
    sim_threshold: float = 0.6
    changed_fraction: float = 0.8
    sample_hz: float = 3.2
    max_dispersion_deg: float = 4.91
    min_fixation_ms: int = 1000
    min_gaze_confidence: float = 0.6
    dedup_threshold: float = 0.75
    history_top_k: int = 10
    max_items: int = 2
    min_total: int = 2
    novelty_mandatory: bool = True
    variant: PipelineVariant = PipelineVariant.FULL
    overlay_tolerance_ms: int = 50
    overlay_max_points: int = 3
    overlay_radius_frac: float = 0.02
    reset_window_on_resume: bool = False
    history_dir: Optional[str] = None
    # Overrides the profile's preferred language for user-facing text.
    language_override: Optional[str] = None
    providers: ProviderConfig = field(default_factory=ProviderConfig)

    def validate(self) -> "EngineConfig":
        if self.interval_ms < 0:
            raise ConfigError("interval_ms must be non-negative")
        if self.window_size < 1:
            raise ConfigError("window_size must be at least 1")
        if not (-1.0 <= self.sim_threshold <= 1.0):
            raise ConfigError("sim_threshold must lie in [-1, 1]")
        if not (0.0 < self.changed_fraction <= 1.0):
            raise ConfigError("changed_fraction must lie in (0, 1]")
        if self.sample_hz <= 0:
            raise ConfigError("sample_hz must be positive")
        if self.max_dispersion_deg < 0:
            raise ConfigError("max_dispersion_deg must be non-negative")
        if self.min_fixation_ms < 0:
            raise ConfigError("min_fixation_ms must be non-negative")
        if not (0.0 <= self.min_gaze_confidence <= 1.0):
            raise ConfigError("min_gaze_confidence must lie in [0, 1]")
        if not (-1.0 <= self.dedup_threshold <= 1.0):
            raise ConfigError("dedup_threshold must lie in [-1, 1]")
        if self.history_top_k < 1:
            raise ConfigError("history_top_k must be at least 1")
        if self.max_items < 1:
            raise ConfigError("max_items must be at least 1")
        if self.overlay_tolerance_ms < 0:
            raise ConfigError("overlay_tolerance_ms must be non-negative")
        if self.overlay_max_points < 0:
            raise ConfigError("overlay_max_points must be non-negative")
        if not (0.0 < self.overlay_radius_frac <= 0.5):
            raise ConfigError("overlay_radius_frac must lie in (0, 0.5]")
        if self.language_override is not None and not self.language_override.strip():
            raise ConfigError("language_override must be None or non-empty")
        return self

    def to_dict(self) -> dict:
        raw = dataclasses.asdict(self)
        raw["variant"] = self.variant.value
        raw["schema"] = CONFIG_SCHEMA
        return raw


_TIER_KEYS = {"kind", "endpoint", "credentials_env", "model", "timeout_ms"}


def _tier_from_dict(raw: dict, where: str) -> ProviderTierConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(raw) - _TIER_KEYS
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    kind = raw.get("kind", "mock")
    if kind not in ("mock", "http"):
        raise ConfigError(f"{where}.kind must be 'mock' or 'http'")
    try:
        return ProviderTierConfig(
            kind=kind,
            endpoint=str(raw.get("endpoint", "")),
            credentials_env=str(raw.get("credentials_env", "")),
            model=str(raw.get("model", "")),
            timeout_ms=int(raw.get("timeout_ms", 30000)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value in {where}: {exc}") from exc


def config_from_dict(raw: dict) -> EngineConfig:
    """Build a validated config from a plain dict (file or API overrides)."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = dict(raw)
    raw.pop("schema", None)

    providers_raw = raw.pop("providers", None)
    if providers_raw is None:
        providers = ProviderConfig()
    else:
        if not isinstance(providers_raw, dict):
            raise ConfigError("providers must be an object")
        unknown = set(providers_raw) - {"fast", "strong", "embedding"}
        if unknown:
            raise ConfigError(f"unknown provider tiers: {sorted(unknown)}")
        providers = ProviderConfig(
            fast=_tier_from_dict(providers_raw.get("fast", {}), "providers.fast"),
            strong=_tier_from_dict(providers_raw.get("strong", {}), "providers.strong"),
            embedding=_tier_from_dict(providers_raw.get("embedding", {}), "providers.embedding"),
        )

    variant_raw = raw.pop("variant", PipelineVariant.FULL.value)
    if isinstance(variant_raw, PipelineVariant):
        variant = variant_raw
    else:
        try:
            variant = PipelineVariant(variant_raw)
        except ValueError:
            names = [v.value for v in PipelineVariant]
            raise ConfigError(f"unknown variant {variant_raw!r}; expected one of {names}") from None

    known = {f.name for f in dataclasses.fields(EngineConfig)} - {"providers", "variant"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    kwargs = {}
    for f in dataclasses.fields(EngineConfig):
        if f.name in ("providers", "variant") or f.name not in raw:
            continue
        value = raw[f.name]
        try:
            if f.name in ("history_dir", "language_override"):
                kwargs[f.name] = None if value is None else str(value)
            elif f.type in ("int", int):
                kwargs[f.name] = int(value)
            elif f.type in ("float", float):
                kwargs[f.name] = float(value)
            elif f.type in ("bool", bool):
                if not isinstance(value, bool):
                    raise ConfigError(f"{f.name} must be a boolean")
                kwargs[f.name] = value
            else:
                kwargs[f.name] = value
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {f.name}: {exc}") from exc

    return EngineConfig(variant=variant, providers=providers, **kwargs).validate()


def load_config(path: Union[str, Path]) -> EngineConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    return config_from_dict(raw)
