"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored. Lists are comma separated.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields
from pathlib import Path

PIPELINES = ("generate", "simulate", "extinction", "metastability", "structure",
             "oracle-check", "growth", "deficiency")
OUT_ENV = "RRCONTACT_OUT"


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class ExperimentConfig:
    pipeline: str
    n: int = 100
    d: int = 3
    lam: float = 2.5
    epsilon: float = 0.1
    replicas: int = 100
    t_cap: float = 1e4
    seed: int = 0
    out_dir: str = ""
    depth: int = 16
    horizon: float = 3.0
    M: int = 6
    T: float = 4.0
    L: float = 30.0
    a_grid: tuple[float, ...] = (5.0, 10.0, 20.0)
    n_grid: tuple[int, ...] = (50, 100, 200)
    mode: str = "active"
    graph: str = ""
    bootstrap: int = 1000

    def output_dir(self) -> Path:
        if self.out_dir:
            return Path(self.out_dir)
        return Path(os.environ.get(OUT_ENV, "runs")) / f"{self.pipeline}-seed{self.seed}"

    def to_mapping(self) -> dict[str, str]:
        """Canonical string form, keyed by the names used in config files."""
        out = {}
        for f in fields(self):
            out[_FILE_KEY.get(f.name, f.name)] = _format(getattr(self, f.name))
        return out

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.to_mapping().items())

    @classmethod
    def from_mapping(cls, raw: dict[str, str]) -> "ExperimentConfig":
        known = {_FILE_KEY.get(f.name, f.name): f for f in fields(cls)}
        for key in raw:
            if key not in known:
                raise ConfigError(key, "unknown key")
        if "pipeline" not in raw:
            raise ConfigError("pipeline", "required key missing")
        kwargs = {}
        for key, value in raw.items():
            f = known[key]
            kwargs[f.name] = _parse(key, value, f.type)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.pipeline not in PIPELINES:
            raise ConfigError("pipeline", f"must be one of {', '.join(PIPELINES)}")
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ConfigError("lambda", f"must be a finite rate >= 0, got {self.lam}")
        if self.pipeline in ("metastability", "growth") and self.lam <= 0:
            raise ConfigError("lambda", "supercritical pipelines need lambda > 0")
        if not 0 < self.epsilon < 1 / 8:
            raise ConfigError("epsilon", f"must lie in (0, 1/8), got {self.epsilon}")
        for key, val in (("n", self.n), ("d", self.d), ("replicas", self.replicas),
                         ("depth", self.depth), ("M", self.M), ("bootstrap", self.bootstrap)):
            if val <= 0:
                raise ConfigError(key, f"must be positive, got {val}")
        for key, val in (("t_cap", self.t_cap), ("horizon", self.horizon), ("T", self.T),
                         ("L", self.L)):
            if not (math.isfinite(val) and val > 0):
                raise ConfigError(key, f"must be a positive finite number, got {val}")
        if self.d < 3:
            raise ConfigError("d", "degree must be at least 3")
        if self.seed < 0:
            raise ConfigError("seed", "must be nonnegative")
        if not self.a_grid or any(a <= 0 for a in self.a_grid):
            raise ConfigError("a_grid", "must be a nonempty list of positive times")
        if not self.n_grid or any(n <= self.d for n in self.n_grid):
            raise ConfigError("n_grid", "must be a nonempty list of sizes above d")
        if self.mode not in ("active", "full"):
            raise ConfigError("mode", "must be 'active' or 'full'")


_FILE_KEY = {"lam": "lambda"}


def _format(v) -> str:
    if isinstance(v, tuple):
        return ",".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(key: str, value: str, typ):
    value = value.strip()
    try:
        if typ in ("int", int):
            return int(value)
        if typ in ("float", float):
            return float(value)
        if typ in ("str", str):
            return value
        if "tuple[float" in str(typ):
            return tuple(float(x) for x in value.split(",") if x.strip())
        if "tuple[int" in str(typ):
            return tuple(int(x) for x in value.split(",") if x.strip())
    except ValueError:
        raise ConfigError(key, f"cannot parse {value!r}") from None
    raise ConfigError(key, f"unsupported type {typ}")


def parse_text(text: str) -> dict[str, str]:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in raw:
            raise ConfigError(key, "given twice")
        raw[key] = value
    return raw


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    return ExperimentConfig.from_mapping(parse_text(text))
