"""
Pipeline configuration: defaults, ``key = value`` files and overrides.

Resolution order is defaults < config file < explicit overrides. The SGM
penalties default per cost function unless set explicitly at some level.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from typing import Mapping, Optional

PENALTY_DEFAULTS = {"census": (8, 32), "sad": (200, 800)}


class ConfigError(ValueError):
    """Bad configuration value; the message names the offending key."""

    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


@dataclass(frozen=True)
class PipelineConfig:
    cost: str = "census"
    d_max: int = 60
    p1: int = 8
    p2: int = 32
    radius: int = 2
    paths: int = 4
    engine: str = "reference"
    lr_tol: int = 1
    median_k: int = 5
    rect_left: Optional[str] = None
    rect_right: Optional[str] = None

    def __post_init__(self):
        validate(self)

    @classmethod
    def for_cost(cls, cost: str, **overrides) -> "PipelineConfig":
        p1, p2 = PENALTY_DEFAULTS.get(cost, (None, None))
        if p1 is None:
            raise ConfigError("cost", f"unknown cost function {cost!r} (use sad or census)")
        base = dict(cost=cost, p1=p1, p2=p2)
        base.update(overrides)
        return cls(**base)

    def describe(self) -> str:
        return " ".join(f"{k}={v}" for k, v in asdict(self).items())


def validate(cfg: PipelineConfig) -> None:
    if cfg.cost not in PENALTY_DEFAULTS:
        raise ConfigError("cost", f"unknown cost function {cfg.cost!r} (use sad or census)")
    if not 1 <= cfg.d_max <= 256:
        raise ConfigError("d_max", f"must be in [1, 256], got {cfg.d_max}")
    if cfg.p1 < 0 or cfg.p2 < 0:
        raise ConfigError("p1" if cfg.p1 < 0 else "p2", "penalties must be non-negative")
    if cfg.p1 > cfg.p2:
        raise ConfigError("p1", f"P1={cfg.p1} exceeds P2={cfg.p2}")
    if cfg.radius < 1:
        raise ConfigError("radius", f"must be >= 1, got {cfg.radius}")
    if cfg.cost == "census" and (2 * cfg.radius + 1) ** 2 - 1 > 32:
        raise ConfigError("radius", "census descriptors are limited to 32 bits (radius <= 2)")
    if cfg.paths not in (4, 8):
        raise ConfigError("paths", f"must be 4 or 8, got {cfg.paths}")
    if cfg.engine not in ("reference", "streaming"):
        raise ConfigError("engine", f"must be reference or streaming, got {cfg.engine!r}")
    if cfg.engine == "streaming" and cfg.paths != 4:
        raise ConfigError("paths", "the streaming engine supports four paths only")
    if cfg.lr_tol < 0:
        raise ConfigError("lr_tol", "must be non-negative")
    if cfg.median_k < 1 or cfg.median_k % 2 == 0:
        raise ConfigError("median_k", f"must be a positive odd number, got {cfg.median_k}")
    if (cfg.rect_left is None) != (cfg.rect_right is None):
        raise ConfigError("rect_left", "rectification maps must be given for both cameras or neither")


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}
_ALIASES = {"dmax": "d_max", "rect-left": "rect_left", "rect-right": "rect_right",
            "lr-tol": "lr_tol", "median-k": "median_k"}


def _coerce(key: str, raw):
    if raw is None:
        return None
    kind = _FIELD_TYPES[key]
    if kind == "int":
        try:
            return int(raw)
        except (TypeError, ValueError):
            raise ConfigError(key, f"expected an integer, got {raw!r}") from None
    if kind == "Optional[str]":
        s = str(raw).strip()
        return None if s.lower() in ("", "none") else s
    return str(raw).strip()


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key] = value
    return out


def _normalise(values: Mapping) -> dict:
    out = {}
    for key, raw in values.items():
        name = _ALIASES.get(key, key.replace("-", "_"))
        if name not in _FIELD_TYPES:
            raise ConfigError(key, "unknown configuration key")
        out[name] = _coerce(name, raw)
    return out


def parse_config(overrides: Optional[Mapping] = None, config_file=None) -> PipelineConfig:
    """
    Resolve a :class:`PipelineConfig`.

    Args:
        overrides: explicitly given values (e.g. from the command line);
            ``None`` entries are treated as "not given".
        config_file: optional ``key = value`` file.

    Raises:
        ConfigError: unknown key or invalid value.
    """
    merged = {}
    if config_file is not None:
        merged.update(_normalise(read_config_file(config_file)))
    if overrides:
        merged.update(_normalise({k: v for k, v in overrides.items() if v is not None}))
    cost = merged.get("cost", PipelineConfig.cost)
    if cost not in PENALTY_DEFAULTS:
        raise ConfigError("cost", f"unknown cost function {cost!r} (use sad or census)")
    p1, p2 = PENALTY_DEFAULTS[cost]
    resolved = dict(cost=cost, p1=p1, p2=p2)
    resolved.update(merged)
    return PipelineConfig(**resolved)


def with_overrides(cfg: PipelineConfig, **kw) -> PipelineConfig:
    return replace(cfg, **kw)
