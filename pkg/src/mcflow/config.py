"""Flat ``key = value`` run configuration.

One key per line, ``#`` starts a comment, blank lines are ignored. Unknown or
duplicated keys are rejected with the offending line number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError

PERTURBATIONS = ("none", "near", "far")
NEAR_KEYS = ("a0", "a1", "r_m")
FAR_KEYS = ("a0", "z_a", "z_b", "n")


@dataclass
class RunConfig:
    gamma: float = 0.75
    c: float = 1.0
    tau0: float = 4.0
    R1: float | None = None
    Nx: int = 64
    Ny: int = 64
    Nz: int = 128
    Ntheta: int = 64
    z_max: float | None = None
    safety: float = 0.1
    perturbation: str = "none"
    a0: float | None = None
    a1: float | None = None
    r_m: float | None = None
    z_a: float | None = None
    z_b: float | None = None
    n: int | None = None
    r_min_floor: float | None = None
    curvature_ceiling: float = math.inf
    t_max: float = math.inf
    max_steps: int = 10_000_000
    snapshot_stride: int = 0
    series_stride: int = 10
    modes: int = 4
    output_dir: str = "out"
    lines: dict[str, int] = field(default_factory=dict, repr=False, compare=False)


def _positive(v, name):
    if not v > 0:
        raise ValueError(f"{name} must be positive")


def _check_gamma(v, name):
    if not v > 0.5:
        raise ValueError(
            "gamma must exceed 1/2 (the critical case gamma = 1/2 is not supported)"
        )


def _check_safety(v, name):
    if not 0 < v <= 1:
        raise ValueError("safety must lie in (0, 1]")


def _check_grid(v, name):
    if v < 5:
        raise ValueError(f"{name} must be at least 5")


def _check_ntheta(v, name):
    if v < 4 or v % 2:
        raise ValueError("Ntheta must be an even integer >= 4")


def _check_n(v, name):
    if v < 2 or v % 2:
        raise ValueError(
            "n must be an even integer >= 2; an odd n gives an off-center neck pinch "
            "and a coordinate singularity at r = 0"
        )


def _check_perturbation(v, name):
    if v not in PERTURBATIONS:
        raise ValueError(f"perturbation must be one of {', '.join(PERTURBATIONS)}")


def _nonneg(v, name):
    if v < 0:
        raise ValueError(f"{name} must be non-negative")


def _any(v, name):
    pass


_PARSERS = {
    "gamma": (float, _check_gamma),
    "c": (float, _positive),
    "tau0": (float, _any),
    "R1": (float, _positive),
    "Nx": (int, _check_grid),
    "Ny": (int, _check_grid),
    "Nz": (int, _check_grid),
    "Ntheta": (int, _check_ntheta),
    "z_max": (float, _any),
    "safety": (float, _check_safety),
    "perturbation": (str, _check_perturbation),
    "a0": (float, _any),
    "a1": (float, _any),
    "r_m": (float, _positive),
    "z_a": (float, _any),
    "z_b": (float, _any),
    "n": (int, _check_n),
    "r_min_floor": (float, _positive),
    "curvature_ceiling": (float, _positive),
    "t_max": (float, _positive),
    "max_steps": (int, _nonneg),
    "snapshot_stride": (int, _nonneg),
    "series_stride": (int, _positive),
    "modes": (int, _nonneg),
    "output_dir": (str, _any),
}


def _convert(kind, raw: str):
    if kind is int:
        value = float(raw)
        if value != int(value):
            raise ValueError(f"expected an integer, got {raw!r}")
        return int(value)
    if kind is float:
        value = float(raw)
        if math.isnan(value):
            raise ValueError("NaN is not allowed")
        return value
    return raw


def parse_config(text: str) -> RunConfig:
    """Parse and validate configuration text; missing keys take documented defaults."""
    cfg = RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", lineno)
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in cfg.lines:
            raise ConfigError(f"duplicate key {key!r} (first set on line {cfg.lines[key]})", lineno)
        kind, check = _PARSERS[key]
        try:
            value = _convert(kind, raw)
            check(value, key)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}", lineno) from None
        setattr(cfg, key, value)
        cfg.lines[key] = lineno
    _cross_check(cfg)
    return cfg


def _cross_check(cfg: RunConfig) -> None:
    required = {"none": (), "near": ("a0", "r_m"), "far": ("a0", "z_a", "z_b", "n")}[cfg.perturbation]
    allowed = {"none": (), "near": NEAR_KEYS, "far": FAR_KEYS}[cfg.perturbation]
    for key in set(NEAR_KEYS + FAR_KEYS):
        if key in cfg.lines and key not in allowed:
            raise ConfigError(f"key {key!r} does not apply to perturbation {cfg.perturbation!r}", cfg.lines[key])
    for key in required:
        if getattr(cfg, key) is None:
            raise ConfigError(f"perturbation {cfg.perturbation!r} requires key {key!r}", cfg.lines.get("perturbation"))
    if cfg.perturbation == "near" and cfg.a1 is None:
        cfg.a1 = 0.0
    if cfg.perturbation == "far":
        if not 0.0 < cfg.a0 < 1.0:
            raise ConfigError("a0 must lie in (0, 1) for a far perturbation", cfg.lines["a0"])
        if not cfg.z_a < cfg.z_b:
            raise ConfigError("need z_a < z_b", cfg.lines["z_b"])
    if cfg.Ntheta < 2 * cfg.modes + 2:
        raise ConfigError(f"modes={cfg.modes} needs Ntheta >= {2 * cfg.modes + 2}", cfg.lines.get("modes"))


def load_config(spec: str | Path) -> RunConfig:
    """Read a config file; the literal name ``default`` gives all defaults."""
    if str(spec) == "default":
        return RunConfig()
    return parse_config(Path(spec).read_text(encoding="utf-8"))


def config_keys() -> list[str]:
    return [f.name for f in fields(RunConfig) if f.name != "lines"]
