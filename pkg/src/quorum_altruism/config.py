"""Treatment configuration and the flat ``key = value`` config file format.

Example file::

    # lists are comma-separated
    mutation_rate = 0.2
    updates = 5000
    palette = nop-A, nop-B, nop-C, h-alloc, h-copy, h-divide, h-search, mov-head

Keys mirror :class:`TreatmentConfig` field names. Unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .genome import OPCODE_INDEX, STANDARD_OPCODES, STRATEGY_OPCODES


class ConfigError(ValueError):
    """Invalid configuration value or config-file line."""


@dataclass(frozen=True)
class Placement:
    """Seed organisms of one ancestor ``kind`` and ``lineage`` into ``region``.

    Regions: ``center`` (one organism), ``left_half``, ``right_half``, ``rest``
    (every cell still empty), ``block:N:left|right`` (a near-square block of N
    cells centred in that half) and ``mixed:N`` (N random empty cells).
    """

    kind: str
    lineage: int
    region: str

    def __str__(self):
        return f"{self.kind}/{self.lineage}/{self.region}"

    @classmethod
    def parse(cls, text: str) -> "Placement":
        parts = text.strip().split("/")
        if len(parts) != 3:
            raise ConfigError(f"placement must be kind/lineage/region, got {text!r}")
        try:
            lineage = int(parts[1])
        except ValueError:
            raise ConfigError(f"bad lineage in placement {text!r}") from None
        return cls(parts[0], lineage, parts[2])


QS_PALETTE = STANDARD_OPCODES + ("quorum-sense", "smart-explode")
NONQS_PALETTE = STANDARD_OPCODES + ("explode",)


@dataclass(frozen=True)
class TreatmentConfig:
    treatment: str = "qs"
    palette: tuple[str, ...] = QS_PALETTE
    initial_placements: tuple[Placement, ...] = (Placement("default", 0, "center"),)
    mutation_rate: float = 0.02
    protected: bool = False
    width: int = 60
    height: int = 60
    updates: int = 30_000
    sample_interval: int = 100
    cycles_per_update: int = 30
    explode_prob: float = 0.05
    max_distance: int = 3
    replicates: int = 30
    stop_on_fixation: bool = False

    def __post_init__(self):
        for op in self.palette:
            if op not in OPCODE_INDEX:
                raise ConfigError(f"unknown opcode in palette: {op!r}")
        if not self.palette:
            raise ConfigError("palette must not be empty")
        if not 0 <= self.mutation_rate <= 10:
            raise ConfigError("mutation_rate must lie in [0, 10]")
        if self.width < 5 or self.height < 5:
            raise ConfigError("grid must be at least 5x5 so the 5x5 neighbourhood is distinct")
        if self.updates < 0 or self.sample_interval < 1 or self.cycles_per_update < 1:
            raise ConfigError("updates >= 0, sample_interval >= 1, cycles_per_update >= 1 required")
        if not 0.0 <= self.explode_prob <= 1.0:
            raise ConfigError("explode_prob must lie in [0, 1]")
        if self.max_distance < 0 or self.replicates < 1:
            raise ConfigError("max_distance >= 0 and replicates >= 1 required")
        if self.protected and any(op in STRATEGY_OPCODES for op in self.palette):
            raise ConfigError("protected mode requires the palette to exclude strategy opcodes")

    @property
    def protected_opcodes(self) -> tuple[str, ...]:
        return STRATEGY_OPCODES if self.protected else ()

    def replace(self, **changes) -> "TreatmentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["palette"] = list(self.palette)
        d["initial_placements"] = [str(p) for p in self.initial_placements]
        return d


_FIELD_TYPES = {f.name: f.type for f in fields(TreatmentConfig)}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def _convert(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    if key == "palette":
        return tuple(s.strip() for s in raw.split(",") if s.strip())
    if key == "initial_placements":
        return tuple(Placement.parse(s) for s in raw.split(",") if s.strip())
    if kind == "bool":
        return _parse_bool(raw)
    if kind == "int":
        return int(raw)
    if kind == "float":
        value = float(raw)
        if not math.isfinite(value):
            raise ValueError(raw)
        return value
    return raw.strip()


def parse_config_text(text: str, base: TreatmentConfig | None = None) -> TreatmentConfig:
    """Overlay a flat config text onto ``base`` (the defaults if omitted)."""
    changes = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value': {line.strip()}")
        key, raw = (s.strip() for s in stripped.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}: {line.strip()}")
        try:
            changes[key] = _convert(key, raw)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {line.strip()} ({exc})") from None
    return dataclasses.replace(base or TreatmentConfig(), **changes)


def load_config(path: str | Path, base: TreatmentConfig | None = None) -> TreatmentConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"), base)


def format_config(config: TreatmentConfig) -> str:
    lines = []
    for key, value in config.to_dict().items():
        if isinstance(value, list):
            value = ", ".join(value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def config_from_dict(data: dict) -> TreatmentConfig:
    """Rebuild a config from :meth:`TreatmentConfig.to_dict` output."""
    data = dict(data)
    data["palette"] = tuple(data["palette"])
    data["initial_placements"] = tuple(Placement.parse(p) for p in data["initial_placements"])
    return TreatmentConfig(**data)
