"""Experiment configuration: defaults, JSON schemas and validation."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, replace
from typing import Any

import jsonschema

from ..errors import SchemaError

__all__ = [
    "EXPERIMENTS",
    "ConfigError",
    "ExperimentConfig",
    "config_schema",
    "parse_config",
    "complex_to_json",
]

EXPERIMENTS = (
    "stern-gerlach",
    "two-observer",
    "mott-sphere",
    "double-slit",
    "bell-aspect",
    "beam-cascade",
    "track-chamber",
)

MAX_DEPTH = 10
NORMALIZATION_TOL = 1e-9


class ConfigError(SchemaError):
    """Invalid config; ``path`` names the offending field (e.g. ``amplitudes[1]``)."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<config>'}: {message}")
        self.path = path
        self.message = message


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    amplitudes: tuple[complex, ...] | None = None
    n_grains: int = 12
    screen_cells: int = 64
    slit_separation: float = 1e-5
    wavelength: float = 5e-7
    screen_distance: float = 1.0
    fringes: int = 4
    theta_a: float = 0.0
    theta_b: float = math.pi / 3
    depth: int = 3
    transmissions: tuple[complex, ...] | None = None
    layers: int = 4
    cells: int = 3
    isolation_samples: int = 100
    seed: int = 0
    normalization_applied: bool = False

    def amplitude_vector(self) -> tuple[complex, ...]:
        """Amplitudes with experiment-specific defaults filled in."""
        if self.amplitudes is not None:
            return self.amplitudes
        name = self.experiment
        if name in ("stern-gerlach", "two-observer"):
            return (0.6 + 0j, 0.8 + 0j)
        if name == "double-slit":
            h = 1 / math.sqrt(2)
            return (h + 0j, h + 0j)
        if name == "mott-sphere":
            return (1 / math.sqrt(self.n_grains) + 0j,) * self.n_grains
        if name == "track-chamber":
            return (1 / math.sqrt(self.cells) + 0j,) * self.cells
        return ()

    def transmission_vector(self) -> tuple[complex, ...]:
        if self.transmissions is not None:
            return self.transmissions
        return (1 / math.sqrt(2) + 0j,) * self.depth

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready echo restricted to the fields the experiment reads."""
        out: dict[str, Any] = {"experiment": self.experiment}
        for key in _FIELDS[self.experiment]:
            value = getattr(self, key)
            if key == "amplitudes":
                value = [complex_to_json(a) for a in self.amplitude_vector()]
            elif key == "transmissions":
                value = [complex_to_json(t) for t in self.transmission_vector()]
            out[key] = value
        out["isolation_samples"] = self.isolation_samples
        out["seed"] = self.seed
        out["normalization_applied"] = self.normalization_applied
        return out

    def with_(self, **changes) -> ExperimentConfig:
        """Copy with changes, re-validated through the same path as JSON input."""
        data = self.to_dict()
        data.pop("experiment")
        data.pop("normalization_applied")
        for key, value in changes.items():
            if key in ("amplitudes", "transmissions") and value is not None:
                value = [complex_to_json(complex(v)) for v in value]
            data[key] = value
        data = {k: v for k, v in data.items() if v is not None}
        return parse_config(self.experiment, data)


def complex_to_json(z: complex) -> list[float]:
    z = complex(z)
    return [float(z.real), float(z.imag)]


_COMPLEX = {
    "oneOf": [
        {"type": "number"},
        {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
    ]
}
_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_COMMON = {
    "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    "isolation_samples": {"type": "integer", "minimum": 0, "maximum": 100000},
}
_PROPERTIES: dict[str, dict[str, Any]] = {
    "amplitudes": {"type": "array", "items": _COMPLEX, "minItems": 1},
    "n_grains": {"type": "integer", "minimum": 2},
    "screen_cells": {"type": "integer", "minimum": 3},
    "slit_separation": _POSITIVE,
    "wavelength": _POSITIVE,
    "screen_distance": _POSITIVE,
    "fringes": {"type": "integer", "minimum": 1},
    "theta_a": {"type": "number"},
    "theta_b": {"type": "number"},
    "depth": {"type": "integer", "minimum": 1, "maximum": MAX_DEPTH},
    "transmissions": {"type": "array", "items": _COMPLEX, "minItems": 1},
    "layers": {"type": "integer", "minimum": 1},
    "cells": {"type": "integer", "minimum": 2},
}
_FIELDS: dict[str, tuple[str, ...]] = {
    "stern-gerlach": ("amplitudes",),
    "two-observer": ("amplitudes",),
    "mott-sphere": ("n_grains", "amplitudes"),
    "double-slit": (
        "screen_cells", "amplitudes", "slit_separation", "wavelength", "screen_distance", "fringes",
    ),
    "bell-aspect": ("theta_a", "theta_b"),
    "beam-cascade": ("depth", "transmissions"),
    "track-chamber": ("layers", "cells", "amplitudes"),
}
_DESCRIPTIONS = {
    "amplitudes": "complex amplitudes, each a number or [re, im]; renormalized if needed",
    "n_grains": "number of film grains (and incident directions) on the sphere",
    "screen_cells": "number of screen cells M",
    "slit_separation": "slit separation d in meters",
    "wavelength": "wavelength in meters",
    "screen_distance": "slit-to-screen distance in meters",
    "fringes": "screen width in fringe periods (must not be a multiple of screen_cells)",
    "theta_a": "analyzer angle on side A, radians",
    "theta_b": "analyzer angle on side B, radians",
    "depth": "number of beam splitters in the cascade",
    "transmissions": "per-splitter complex transmission amplitude t, |t| <= 1",
    "layers": "number of chamber layers",
    "cells": "cells per layer (= number of incident directions)",
    "seed": "64-bit seed for the PCG64 generator used by isolation sampling",
    "isolation_samples": "random amplitude vectors drawn for the isolation check (0 skips it)",
}


def config_schema(experiment: str) -> dict[str, Any]:
    """JSON Schema (draft 2020-12) for one experiment's config file."""
    if experiment not in _FIELDS:
        raise ConfigError("experiment", f"unknown experiment {experiment!r}")
    props = {}
    for key in _FIELDS[experiment] + tuple(_COMMON):
        prop = copy.deepcopy(_PROPERTIES.get(key) or _COMMON[key])
        prop["description"] = _DESCRIPTIONS[key]
        props[key] = prop
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": f"branchlab {experiment} config",
        "type": "object",
        "properties": props,
        "additionalProperties": False,
    }


def _path(error: jsonschema.ValidationError) -> str:
    out = ""
    for part in error.absolute_path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    if error.validator == "additionalProperties":
        extra = sorted(set(error.instance) - set(error.schema.get("properties", {})))
        out = (out + "." if out else "") + ",".join(extra)
    return out


def _complex(value) -> complex:
    if isinstance(value, (list, tuple)):
        return complex(float(value[0]), float(value[1]))
    return complex(float(value), 0.0)


def parse_config(experiment: str, data: dict[str, Any] | None = None) -> ExperimentConfig:
    """Validate raw JSON data and build a config.

    Amplitude vectors that are not unit-norm (within 1e-9) are rescaled and
    ``normalization_applied`` is set.
    """
    data = {} if data is None else data
    schema = config_schema(experiment)
    if not isinstance(data, dict):
        raise ConfigError("", "config must be a JSON object")
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(_path(err), err.message)

    kw: dict[str, Any] = {k: v for k, v in data.items() if k not in ("amplitudes", "transmissions")}
    for key in ("slit_separation", "wavelength", "screen_distance", "theta_a", "theta_b"):
        if key in kw:
            kw[key] = float(kw[key])
            if not math.isfinite(kw[key]):
                raise ConfigError(key, "must be finite")
    if "transmissions" in data:
        kw["transmissions"] = tuple(_complex(v) for v in data["transmissions"])
    cfg = ExperimentConfig(experiment, **kw)

    if "amplitudes" in data:
        amps = tuple(_complex(v) for v in data["amplitudes"])
        expected = {
            "stern-gerlach": 2, "two-observer": 2, "double-slit": 2,
            "mott-sphere": cfg.n_grains, "track-chamber": cfg.cells,
        }[experiment]
        if len(amps) != expected:
            raise ConfigError("amplitudes", f"expected {expected} amplitudes, got {len(amps)}")
        if not all(math.isfinite(a.real) and math.isfinite(a.imag) for a in amps):
            raise ConfigError("amplitudes", "amplitudes must be finite")
        norm2 = sum(abs(a) ** 2 for a in amps)
        if norm2 == 0.0:
            raise ConfigError("amplitudes", "amplitude vector is zero")
        normalized = abs(norm2 - 1.0) > NORMALIZATION_TOL
        if normalized:
            norm = math.sqrt(norm2)
            amps = tuple(a / norm for a in amps)
        cfg = replace(cfg, amplitudes=amps, normalization_applied=normalized)

    if cfg.transmissions is not None:
        if len(cfg.transmissions) != cfg.depth:
            raise ConfigError("transmissions", f"expected {cfg.depth} values, got {len(cfg.transmissions)}")
        for k, t in enumerate(cfg.transmissions):
            if abs(t) > 1 + 1e-12:
                raise ConfigError(f"transmissions[{k}]", "|t| must not exceed 1")
    if experiment == "double-slit" and cfg.fringes % cfg.screen_cells == 0:
        raise ConfigError("fringes", "must not be a multiple of screen_cells")
    return cfg

