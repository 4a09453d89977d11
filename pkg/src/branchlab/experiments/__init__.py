"""Measurement scenarios: configs, builders and the report runner."""

from .config import EXPERIMENTS, ConfigError, ExperimentConfig, config_schema, parse_config
from .runner import (
    BORN_NOTE,
    ExperimentReport,
    beam_cascade,
    bell_aspect,
    cascade_conditioning,
    chsh,
    double_slit,
    mott_sphere,
    run,
    stern_gerlach,
    track_chamber,
    two_observer,
)
from .scenarios import Setup, build

__all__ = [
    "EXPERIMENTS",
    "BORN_NOTE",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentReport",
    "Setup",
    "beam_cascade",
    "bell_aspect",
    "build",
    "cascade_conditioning",
    "chsh",
    "config_schema",
    "double_slit",
    "mott_sphere",
    "parse_config",
    "run",
    "stern_gerlach",
    "track_chamber",
    "two_observer",
]
