"""Timing studies: records per instance, medians per size, log-log polynomial fits."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

__all__ = [
    "ScalingRecord",
    "PolyFit",
    "fit_loglog",
    "fit_degrees",
    "select_degree",
    "median_table",
    "design_provenance",
    "write_scaling_csv",
    "save_records",
    "load_records",
]

METHODS = ("direct", "congruence")


@dataclass(frozen=True)
class ScalingRecord:
    bits: int
    wall_time: float  # seconds
    simulated_time: float  # µs
    method: str = "direct"
    converged: bool = True
    target: Optional[int] = None  # relation target for the congruence method
    provenance: str = "default"  # tuned, neighboring or default design
    seed: Optional[int] = None

    def __post_init__(self):
        if self.bits < 8:
            raise ValueError("bits must be >= 8")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.converged and (self.wall_time <= 0 or self.simulated_time <= 0):
            raise ValueError("converged records need positive times")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PolyFit:
    """``log(time) = sum_i coefficients[i] * log(bits)**(degree - i)``."""

    degree: int
    coefficients: Tuple[float, ...]  # highest power first
    residual_rms: float
    residual_std: float  # residual standard error, sqrt(rss / (N - degree - 1))
    n_points: int

    def __post_init__(self):
        if len(self.coefficients) != self.degree + 1:
            raise ValueError("coefficient count must equal degree + 1")

    def predict(self, bits) -> np.ndarray:
        return np.exp(np.polyval(self.coefficients, np.log(np.asarray(bits, dtype=float))))

    def to_dict(self) -> dict:
        return asdict(self)


def fit_loglog(bits: Sequence[float], times: Sequence[float], degree: int) -> PolyFit:
    x = np.log(np.asarray(bits, dtype=float))
    y = np.log(np.asarray(times, dtype=float))
    if len(x) != len(y):
        raise ValueError("bits and times differ in length")
    if len(x) < degree + 1:
        raise ValueError(f"degree {degree} needs at least {degree + 1} points")
    coef = np.polyfit(x, y, degree)
    resid = y - np.polyval(coef, x)
    rss = float(resid @ resid)
    dof = len(x) - degree - 1
    return PolyFit(degree, tuple(float(c) for c in coef), math.sqrt(rss / len(x)),
                   math.sqrt(rss / dof) if dof > 0 else 0.0, len(x))


def fit_degrees(bits, times, degrees: Iterable[int]) -> Dict[int, PolyFit]:
    return {d: fit_loglog(bits, times, d) for d in degrees}


def select_degree(bits, times, degrees: Iterable[int] = range(1, 6), alpha: float = 0.05) -> int:
    """Step up through ``degrees`` while the next term is significant.

    Each step is a nested-model F test on the residual sums of squares;
    the first step whose p-value is at least ``alpha`` stops the climb.
    """
    degrees = sorted(degrees)
    fits = fit_degrees(bits, times, degrees)
    n = fits[degrees[0]].n_points
    chosen = degrees[0]
    for lo, hi in zip(degrees, degrees[1:]):
        rss_lo = fits[lo].residual_rms**2 * n
        rss_hi = fits[hi].residual_rms**2 * n
        dof = n - hi - 1
        if dof <= 0:
            break
        if rss_hi <= 1e-300:
            return hi if rss_lo > 1e-300 else chosen
        F = ((rss_lo - rss_hi) / (hi - lo)) / (rss_hi / dof)
        if stats.f.sf(F, hi - lo, dof) >= alpha:
            break
        chosen = hi
    return chosen


def median_table(records: Sequence[ScalingRecord]) -> List[dict]:
    """Per size: median wall and simulated time over converged records, plus censored count."""
    by_bits: Dict[int, List[ScalingRecord]] = {}
    for r in records:
        by_bits.setdefault(r.bits, []).append(r)
    rows = []
    for bits in sorted(by_bits):
        ok = [r for r in by_bits[bits] if r.converged]
        rows.append({
            "bits": bits,
            "median_wall_s": float(np.median([r.wall_time for r in ok])) if ok else math.nan,
            "median_sim_us": float(np.median([r.simulated_time for r in ok])) if ok else math.nan,
            "instances": len(by_bits[bits]),
            "censored": len(by_bits[bits]) - len(ok),
            "provenance": by_bits[bits][0].provenance,
        })
    return rows


def design_provenance(bits: int, tuned_sizes: Iterable[int]) -> Tuple[str, Optional[int]]:
    """``tuned`` when a design exists for this size, ``neighboring`` when the
    closest smaller tuned size is reused, ``default`` otherwise."""
    sizes = sorted(tuned_sizes)
    if bits in sizes:
        return "tuned", bits
    smaller = [s for s in sizes if s < bits]
    if smaller:
        return "neighboring", smaller[-1]
    return "default", None


def write_scaling_csv(path, records: Sequence[ScalingRecord]) -> Path:
    """Header ``bits,median_wall_s,median_sim_us``; sizes with no converged run are left out."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["bits", "median_wall_s", "median_sim_us"])
        for row in median_table(records):
            if row["censored"] < row["instances"]:
                w.writerow([row["bits"], repr(row["median_wall_s"]), repr(row["median_sim_us"])])
    return path


def save_records(path, records: Sequence[ScalingRecord], fits: Optional[Mapping[int, PolyFit]] = None,
                 notes: Sequence[str] = ()) -> Path:
    doc = {"records": [r.to_dict() for r in records],
           "fits": {str(d): f.to_dict() for d, f in (fits or {}).items()},
           "notes": list(notes)}
    path = Path(path)
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return path


def load_records(path) -> List[ScalingRecord]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    rows = doc["records"] if isinstance(doc, dict) else doc
    return [ScalingRecord(**r) for r in rows]
