"""Sectioned key-value run configuration (INI syntax) with strict keys and documented defaults."""
from __future__ import annotations

import configparser
import os
import re
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .quantum import SystemConfig
from .studies import RefineConfig
from .training import CostConfig, Seeds

SEED_ENV = "PULSEFORGE_SEED"


class ConfigError(ValueError):
    """Unreadable config, unknown key, or a value violating an invariant."""


def _dataclass_defaults(cls, skip=()):
    return {f.name: f.default for f in fields(cls) if f.name not in skip}


STUDY_DEFAULTS = {
    "pulse_range": "2-9",
    "seeds_per_point": 3,
    "eval_states": 1000,
    "coverage": 0.75,
    "n_resamples": 10000,
    "sizes": "256,512,1024,2048,4096",
    "seeds_per_size": 3,
    "validation_states": 100,
    "n_comp_candidates": "3,4,5,6,7",
    "n_prepared_range": "3-10",
    "tolerance": 1e-3,
    "resolution_theta": 250,
    "resolution_phi": 250,
    "target": "0,1",
    "samples_per_pulse": 20,
    "theta": "0.65pi",
    "phi_samples": 400,
    "samples": 10000,
    "bins": 20,
    "checkpoints": "",
}

DEFAULTS = {
    "system": _dataclass_defaults(SystemConfig),
    "training": {**_dataclass_defaults(CostConfig), "hidden_sizes": "100,300", "activation": "relu"},
    "seeds": {"seed": 0, "init": "", "dataset": "", "validation": "", "shuffle": ""},
    "study": STUDY_DEFAULTS,
    "refine": _dataclass_defaults(RefineConfig),
    "io": {"out_dir": "runs", "checkpoint": "", "cache_dir": ""},
}


def _coerce(section, key, text, default):
    try:
        if isinstance(default, bool):
            return text.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {text!r} as {type(default).__name__}") from exc
    return text.strip()


@dataclass
class RunConfig:
    values: dict  # section -> key -> typed value

    def section(self, name) -> dict:
        return dict(self.values[name])

    @property
    def system(self) -> SystemConfig:
        try:
            return SystemConfig(**self.values["system"])
        except ValueError as exc:
            raise ConfigError(f"[system] {exc}") from exc

    @property
    def training(self) -> CostConfig:
        block = {k: v for k, v in self.values["training"].items() if k not in ("hidden_sizes", "activation")}
        try:
            return CostConfig(**block)
        except ValueError as exc:
            raise ConfigError(f"[training] {exc}") from exc

    @property
    def hidden_sizes(self) -> tuple:
        return tuple(parse_int_list(self.values["training"]["hidden_sizes"]))

    @property
    def activation(self) -> str:
        return self.values["training"]["activation"]

    @property
    def refine(self) -> RefineConfig:
        try:
            return RefineConfig(**self.values["refine"])
        except ValueError as exc:
            raise ConfigError(f"[refine] {exc}") from exc

    @property
    def seeds(self) -> Seeds:
        block = self.values["seeds"]
        base = Seeds.from_base(int(block["seed"]))
        overrides = {k: int(block[k]) for k in ("init", "dataset", "validation", "shuffle") if str(block[k]).strip()}
        return Seeds(**{**asdict(base), **overrides})

    @property
    def study(self) -> dict:
        return dict(self.values["study"])

    def override(self, section, key, value) -> None:
        if key not in DEFAULTS[section]:
            raise ConfigError(f"unknown key [{section}] {key}")
        self.values[section][key] = _coerce(section, key, str(value), DEFAULTS[section][key])

    def to_ini(self) -> str:
        lines = []
        for section, block in self.values.items():
            lines.append(f"[{section}]")
            lines.extend(f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}" for k, v in block.items())
            lines.append("")
        return "\n".join(lines)


def load_config(path=None, seed_override=None) -> RunConfig:
    """Parse an INI file; missing keys take defaults, unknown sections/keys are rejected.

    Seed precedence: ``seed_override`` > [seeds] seed in the file > $PULSEFORGE_SEED > 0.
    """
    parser = configparser.ConfigParser(interpolation=None)
    if path is not None:
        try:
            text = Path(path).read_text()
            parser.read_string(text, source=str(path))
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values = {section: dict(block) for section, block in DEFAULTS.items()}
    for section in parser.sections():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown section [{section}]")
        for key, text in parser.items(section):
            if key not in DEFAULTS[section]:
                raise ConfigError(f"unknown key [{section}] {key}")
            values[section][key] = _coerce(section, key, text, DEFAULTS[section][key])
    cfg = RunConfig(values)
    if seed_override is not None:
        cfg.override("seeds", "seed", seed_override)
    elif not parser.has_option("seeds", "seed") and os.environ.get(SEED_ENV):
        cfg.override("seeds", "seed", os.environ[SEED_ENV])
    cfg.system  # validate eagerly
    cfg.training
    cfg.refine
    return cfg


def parse_int_list(text) -> list[int]:
    """'2-9' -> [2..9]; '3,5,7' -> [3, 5, 7]; mixtures allowed."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part:
                lo, hi = part.split("-")
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
        except ValueError as exc:
            raise ConfigError(f"cannot parse integer list {text!r}") from exc
    return out


def parse_angle(text) -> float:
    """Radians, optionally written as a multiple of pi ('0.65pi', 'pi/4')."""
    s = str(text).strip().replace(" ", "")
    m = re.fullmatch(r"([-+]?[0-9.eE+-]*)\*?pi(?:/([0-9.]+))?", s)
    try:
        if m:
            coef = float(m.group(1)) if m.group(1) not in ("", "+", "-") else float(m.group(1) + "1")
            return coef * np.pi / (float(m.group(2)) if m.group(2) else 1.0)
        return float(s)
    except ValueError as exc:
        raise ConfigError(f"cannot parse angle {text!r}") from exc


def parse_target(text, n: int | None = None):
    """Target state from 'theta=.. phi=..' (qubit) or comma-separated (complex) amplitudes.

    Returns (normalized state, notice or None). Amplitudes accept Python complex
    literals, e.g. '0.7071,0.7071j'.
    """
    text = str(text).strip()
    if "=" in text:
        parts = dict(p.split("=", 1) for p in text.replace(",", " ").split())
        if set(parts) != {"theta", "phi"}:
            raise ConfigError(f"angle target needs exactly theta= and phi=, got {text!r}")
        theta, phi = parse_angle(parts["theta"]), parse_angle(parts["phi"])
        if not 0 <= theta <= np.pi:
            raise ConfigError(f"theta must lie in [0, pi], got {theta}")
        amps = np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)])
    else:
        try:
            amps = np.array([complex(p.strip().replace(" ", "")) for p in text.split(",")])
        except ValueError as exc:
            raise ConfigError(f"cannot parse amplitude list {text!r}") from exc
    if n is not None and amps.size != n:
        raise ConfigError(f"target has {amps.size} amplitudes but the model prepares n={n} levels")
    norm = np.linalg.norm(amps)
    if not np.isfinite(norm) or norm == 0:
        raise ConfigError(f"target {text!r} cannot be normalized")
    notice = None
    if abs(norm - 1) > 1e-9:
        notice = f"target normalized (norm was {norm:.6g})"
    return amps / norm, notice
