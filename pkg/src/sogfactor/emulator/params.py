"""Design parameters of the gate network, grouped by family tag.

Times are simulated microseconds. Rates (growth, decay, speed) are per µs.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple, Union

log = logging.getLogger(__name__)

DYNAMICS = ("score", "reference")
NORMALIZATIONS = ("max-abs", "none")


@dataclass(frozen=True)
class FamilyParams:
    """Coefficients shared by every unit or terminal carrying one family tag.

    Unit families use ``gain``, ``growth``, ``decay``, ``memory_init``,
    ``memory_cap`` and ``normalization``; variable families use ``speed``.
    """

    gain: float = 1.0
    growth: float = 450.0
    decay: float = 8.0
    memory_init: float = 0.0
    memory_cap: float = 60.0
    speed: float = 50.0
    normalization: str = "max-abs"

    def __post_init__(self):
        for f in ("gain", "growth", "decay", "memory_init", "memory_cap", "speed"):
            val = getattr(self, f)
            if not math.isfinite(val) or val < 0:
                raise ValueError(f"{f} must be finite and >= 0, got {val}")
        if self.memory_init > self.memory_cap:
            raise ValueError("memory_init must not exceed memory_cap")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "FamilyParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown family parameter(s): {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class DesignParams:
    families: Mapping[str, FamilyParams] = field(default_factory=dict)
    default: FamilyParams = field(default_factory=FamilyParams)
    dt: float = 1e-3
    threshold: float = 0.5
    hysteresis: float = 0.19
    drive_scale: float = 0.26
    relax: float = 1.4
    growth_spread: float = 0.7
    init_range: Tuple[float, float] = (0.0, 1.0)
    check_every: int = 10
    time_budget: float = 100.0
    dynamics: str = "score"

    def __post_init__(self):
        object.__setattr__(self, "families", dict(self.families))
        object.__setattr__(self, "init_range", tuple(float(x) for x in self.init_range))
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        if not 0 <= self.hysteresis < min(self.threshold, 1 - self.threshold):
            raise ValueError("hysteresis band must fit inside (0, 1)")
        lo, hi = self.init_range
        if not 0 <= lo <= hi <= 1:
            raise ValueError("init_range must satisfy 0 <= lo <= hi <= 1")
        if self.check_every < 1:
            raise ValueError("check_every must be >= 1")
        if self.time_budget < 0:
            raise ValueError("time_budget must be >= 0")
        if self.dynamics not in DYNAMICS:
            raise ValueError(f"dynamics must be one of {DYNAMICS}")
        for name in ("drive_scale", "relax", "growth_spread"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.growth_spread >= 1:
            raise ValueError("growth_spread must be < 1 so growth rates stay positive")

    def family(self, tag: str) -> FamilyParams:
        try:
            return self.families[tag]
        except KeyError:
            return self.default

    def with_family(self, tag: str, **changes) -> "DesignParams":
        fams = dict(self.families)
        fams[tag] = replace(self.family(tag), **changes)
        return replace(self, families=fams)

    def replace(self, **changes) -> "DesignParams":
        return replace(self, **changes)

    @property
    def n_steps(self) -> int:
        return int(round(self.time_budget / self.dt))

    # serialization -------------------------------------------------------

    def to_dict(self) -> Dict[str, object]:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("families", "default")}
        out["init_range"] = list(self.init_range)
        out["default"] = asdict(self.default)
        out["families"] = {k: asdict(v) for k, v in sorted(self.families.items())}
        return out

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "DesignParams":
        d = dict(d)
        fams = {k: FamilyParams.from_dict(v) for k, v in dict(d.pop("families", {})).items()}
        default = FamilyParams.from_dict(d.pop("default", {}))
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown design parameter(s): {sorted(unknown)}")
        return cls(families=fams, default=default, **d)

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DesignParams":
        return cls.from_dict(json.loads(text))

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "DesignParams":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def check_families(params: DesignParams, tags) -> Tuple[str, ...]:
    """Tags without their own entry; they fall back to ``params.default``."""
    missing = tuple(sorted(set(tags) - set(params.families)))
    if missing:
        log.warning("no design parameters for families %s; using defaults", ", ".join(missing))
    return missing


def default_design(overrides: Optional[Mapping[str, Mapping[str, float]]] = None) -> DesignParams:
    """Shipped defaults, tuned on 16-20 bit direct models."""
    fams = {
        "x-bits": FamilyParams(speed=174.6),
        "products": FamilyParams(speed=44.7),
        "remainders": FamilyParams(speed=35.7),
        "k-bits": FamilyParams(speed=174.6),
        "y-splits": FamilyParams(speed=174.6),
        "w-bits": FamilyParams(speed=174.6),
        "sum-bits": FamilyParams(speed=44.7),
        "soand": FamilyParams(gain=1.47, growth=583.0, decay=37.5, memory_cap=60.0),
        "soag": FamilyParams(gain=1.0, growth=448.0, decay=7.7, memory_cap=60.0),
    }
    for tag, ch in (overrides or {}).items():
        fams[tag] = replace(fams.get(tag, FamilyParams()), **ch)
    return DesignParams(families=fams)
