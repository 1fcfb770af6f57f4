"""TOML experiment configs: loading, flag overrides, hashing, emission.

Precedence for every field: environment (seed only, via
JACOBI_SPECTRA_SEED) > command-line flag > config file > built-in
default.  The config hash covers the experiment-defining payload
(distribution, sizes, seed, grids, methods) and deliberately excludes
execution details (thread count, output paths), so reruns that only move
the output or change parallelism hash identically.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .ensemble import (
    CoefficientDistribution,
    constant_triple_distribution,
    distribution_from_dict,
)

SEED_ENV_VAR = "JACOBI_SPECTRA_SEED"
SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


def load_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}")


def _pair_to_complex(v) -> complex:
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    raise ConfigError(f"expected a number or [re, im] pair, got {v!r}")


def distribution_from_config(section: dict) -> CoefficientDistribution:
    """Build a coefficient law from a [distribution] table."""
    if not isinstance(section, dict) or "variant" not in section:
        raise ConfigError("[distribution] table with a 'variant' key is required")
    variant = section["variant"]
    if variant == "constant":
        try:
            return constant_triple_distribution(
                _pair_to_complex(section["a"]),
                _pair_to_complex(section["b"]),
                _pair_to_complex(section["c"]),
            )
        except KeyError as exc:
            raise ConfigError(f"constant distribution needs key {exc}")
    try:
        return distribution_from_dict(section)
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad distribution config: {exc}")


@dataclass(frozen=True)
class GridSpec:
    re0: float
    re1: float
    im0: float
    im1: float
    nx: int
    ny: int

    def __post_init__(self):
        if not (self.re1 > self.re0 and self.im1 > self.im0):
            raise ConfigError("grid rectangle is degenerate")
        if self.nx < 2 or self.ny < 2:
            raise ConfigError("grid needs at least 2 nodes per side")

    @staticmethod
    def parse(text: str) -> "GridSpec":
        """Parse the flag form "re0,re1,im0,im1,nx,ny"."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 6:
            raise ConfigError('grid flag must be "re0,re1,im0,im1,nx,ny"')
        try:
            return GridSpec(
                float(parts[0]), float(parts[1]), float(parts[2]),
                float(parts[3]), int(parts[4]), int(parts[5]),
            )
        except ValueError as exc:
            raise ConfigError(f"bad grid flag: {exc}")

    @staticmethod
    def from_table(t: dict) -> "GridSpec":
        try:
            return GridSpec(
                float(t["re0"]), float(t["re1"]), float(t["im0"]),
                float(t["im1"]), int(t["nx"]), int(t["ny"]),
            )
        except KeyError as exc:
            raise ConfigError(f"[grid] table missing key {exc}")

    def to_dict(self) -> dict:
        return {
            "re0": self.re0, "re1": self.re1,
            "im0": self.im0, "im1": self.im1,
            "nx": self.nx, "ny": self.ny,
        }


@dataclass(frozen=True)
class ExperimentConfig:
    """Effective per-run configuration after all overrides."""

    subcommand: str
    distribution: Optional[CoefficientDistribution]
    seed: int
    n: int
    replicas: int
    threads: int
    out: Optional[str]
    grid: Optional[GridSpec] = None
    method: Optional[str] = None
    boundary: Optional[str] = None
    extras: dict = field(default_factory=dict)

    def payload(self) -> dict:
        """Hash-relevant content; excludes threads and output path."""
        p: dict[str, Any] = {
            "schema": SCHEMA_VERSION,
            "subcommand": self.subcommand,
            "seed": self.seed,
            "n": self.n,
            "replicas": self.replicas,
        }
        if self.distribution is not None:
            p["distribution"] = self.distribution.to_dict()
        if self.grid is not None:
            p["grid"] = self.grid.to_dict()
        if self.method is not None:
            p["method"] = self.method
        if self.boundary is not None:
            p["boundary"] = self.boundary
        for k in sorted(self.extras):
            p[k] = self.extras[k]
        return p

    def hash(self) -> str:
        return config_hash(self.payload())


def config_hash(payload: dict) -> str:
    """First 12 hex chars of sha256 over canonical JSON."""
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def resolve_seed(flag_seed: Optional[int], file_seed: Optional[int], env=None) -> int:
    """Seed precedence: env var, then flag, then file, then 0."""
    env = os.environ if env is None else env
    raw = env.get(SEED_ENV_VAR)
    if raw is not None:
        try:
            seed = int(raw)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}")
        if seed < 0:
            raise ConfigError(f"{SEED_ENV_VAR} must be non-negative")
        return seed
    for v in (flag_seed, file_seed):
        if v is not None:
            if v < 0:
                raise ConfigError("seed must be non-negative")
            return int(v)
    return 0


def _toml_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if not math.isfinite(v):
            raise ConfigError("non-finite float in config")
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    raise ConfigError(f"cannot emit {type(v).__name__} as TOML scalar")


def _toml_value(v) -> str:
    if isinstance(v, (list, tuple)):
        if any(isinstance(x, dict) for x in v):
            raise ConfigError("tables inside plain arrays are not supported")
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return _toml_scalar(v)


def dumps_toml(data: dict) -> str:
    """Deterministic TOML for the restricted config schema (scalars,
    arrays, nested tables, arrays of flat tables).  Keys are emitted
    sorted, scalars before tables."""
    lines: list[str] = []

    def emit(table: dict, prefix: str):
        scalars = {k: v for k, v in table.items() if not isinstance(v, dict)
                   and not (isinstance(v, list) and v and isinstance(v[0], dict))}
        for k in sorted(scalars):
            lines.append(f"{k} = {_toml_value(scalars[k])}")
        for k in sorted(table):
            v = table[k]
            name = f"{prefix}.{k}" if prefix else k
            if isinstance(v, dict):
                lines.append("")
                lines.append(f"[{name}]")
                emit(v, name)
            elif isinstance(v, list) and v and isinstance(v[0], dict):
                for item in v:
                    lines.append("")
                    lines.append(f"[[{name}]]")
                    emit(item, name)
    emit(data, "")
    out = "\n".join(lines).lstrip("\n")
    return out + "\n" if out else ""
