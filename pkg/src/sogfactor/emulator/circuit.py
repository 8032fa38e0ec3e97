"""Gate network built from an IlpModel.

Every row becomes one or two *units* of the form ``a . x <= c``: ``>=`` rows
are mirrored and equalities are split into two opposite inequalities. Units
keep exact integer coefficients (used for gaps and readout) and a float copy
scaled by the row's largest coefficient (used by the reference dynamics).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..ilp import IlpModel, Sense, VarRef
from .params import DesignParams, check_families

__all__ = ["UnitArrays", "Circuit", "build_circuit", "CoefficientRangeError"]

_INT_LIMIT = 1 << 62


class CoefficientRangeError(ValueError):
    """Row magnitudes exceed what the int64 kernel can evaluate exactly."""


@dataclass(frozen=True)
class UnitArrays:
    indptr: np.ndarray  # CSR row pointers
    cols: np.ndarray
    coef: np.ndarray  # exact int64
    rhs: np.ndarray  # exact int64
    coef_n: np.ndarray  # normalized float
    rhs_n: np.ndarray
    row: np.ndarray  # originating constraint index
    family: Tuple[str, ...]
    maxabs: np.ndarray  # largest |coefficient| per unit (1 for empty rows)

    @property
    def n_units(self) -> int:
        return len(self.rhs)

    def activities(self, bits: np.ndarray) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.int64)
        prods = self.coef * bits[self.cols]
        out = np.zeros(self.n_units, dtype=np.int64)
        np.add.at(out, np.repeat(np.arange(self.n_units), np.diff(self.indptr)), prods)
        return out

    def gaps(self, bits: np.ndarray) -> np.ndarray:
        """Exact integer gap ``max(0, a.x - c)`` per unit."""
        return np.maximum(self.activities(bits) - self.rhs, 0)


def _units_from_model(model: IlpModel, normalization_of) -> UnitArrays:
    indptr = [0]
    cols: List[int] = []
    coef: List[int] = []
    coef_n: List[float] = []
    rhs: List[int] = []
    rhs_n: List[float] = []
    row: List[int] = []
    fam: List[str] = []
    maxabs: List[int] = []
    for ri, con in enumerate(model.constraints):
        signs = {Sense.LE: (1,), Sense.GE: (-1,), Sense.EQ: (1, -1)}[con.sense]
        widest = max((abs(c) for c, _ in con.terms), default=1)
        scale = widest if normalization_of(con.family) == "max-abs" else 1
        if sum(abs(c) for c, _ in con.terms) + abs(con.rhs) >= _INT_LIMIT:
            raise CoefficientRangeError(f"row {con.name!r} is too wide for exact int64 evaluation")
        for sg in signs:
            for c, v in con.terms:
                cols.append(v.index)
                coef.append(sg * c)
                coef_n.append(sg * c / scale)
            indptr.append(len(cols))
            rhs.append(sg * con.rhs)
            rhs_n.append(sg * con.rhs / scale)
            row.append(ri)
            fam.append(con.family)
            maxabs.append(widest)
    return UnitArrays(
        indptr=np.asarray(indptr, dtype=np.int64),
        cols=np.asarray(cols, dtype=np.int64),
        coef=np.asarray(coef, dtype=np.int64),
        rhs=np.asarray(rhs, dtype=np.int64),
        coef_n=np.asarray(coef_n, dtype=np.float64),
        rhs_n=np.asarray(rhs_n, dtype=np.float64),
        row=np.asarray(row, dtype=np.int64),
        family=tuple(fam),
        maxabs=np.asarray(maxabs, dtype=np.int64),
    )


@dataclass
class Circuit:
    """Mutable network state: voltages, latched bits, unit memories, time."""

    model: IlpModel
    params: DesignParams
    units: UnitArrays
    gain: np.ndarray
    growth: np.ndarray
    decay: np.ndarray
    memory_init: np.ndarray
    memory_cap: np.ndarray
    speed: np.ndarray
    probes: Tuple[int, ...] = ()
    voltages: np.ndarray = field(default=None)
    latch: np.ndarray = field(default=None)
    memory: np.ndarray = field(default=None)
    growth_rate: np.ndarray = field(default=None)
    time: float = 0.0

    def __post_init__(self):
        n, m = self.model.n_vars, self.units.n_units
        if self.voltages is None:
            self.voltages = np.full(n, self.params.threshold)
        if self.latch is None:
            self.latch = (self.voltages > self.params.threshold).astype(np.int64)
        if self.memory is None:
            self.memory = self.memory_init.copy()
        if self.growth_rate is None:
            self.growth_rate = self.growth.copy()
        assert len(self.voltages) == n and len(self.memory) == m

    @property
    def n_vars(self) -> int:
        return self.model.n_vars

    @property
    def n_units(self) -> int:
        return self.units.n_units

    def reset(self, seed=None) -> "Circuit":
        """Random initial condition: uniform voltages, memories at x0, jittered growth."""
        rng = np.random.default_rng(seed)
        lo, hi = self.params.init_range
        self.voltages = rng.uniform(lo, hi, self.n_vars)
        self.latch = (self.voltages > self.params.threshold).astype(np.int64)
        self.memory = self.memory_init.copy()
        spread = self.params.growth_spread
        self.growth_rate = self.growth * (1.0 + spread * rng.uniform(-1.0, 1.0, self.n_units))
        self.time = 0.0
        return self

    def assignment(self) -> np.ndarray:
        """Digital readout of every terminal."""
        return self.latch.astype(np.int8)

    def unsat_count(self) -> int:
        return int(np.count_nonzero(self.units.gaps(self.latch)))

    def copy(self) -> "Circuit":
        return Circuit(
            self.model, self.params, self.units, self.gain, self.growth, self.decay,
            self.memory_init, self.memory_cap, self.speed, self.probes,
            self.voltages.copy(), self.latch.copy(), self.memory.copy(),
            self.growth_rate.copy(), self.time,
        )


def _resolve_probes(model: IlpModel, probes) -> Tuple[int, ...]:
    out = []
    for p in probes or ():
        if isinstance(p, VarRef):
            out.append(p.index)
        elif isinstance(p, str):
            out.append(model.var_by_name[p].index)
        else:
            idx = int(p)
            if not 0 <= idx < model.n_vars:
                raise IndexError(f"probe index {idx} out of range")
            out.append(idx)
    return tuple(out)


def build_circuit(
    model: IlpModel, params: Optional[DesignParams] = None, probes: Sequence = ()
) -> Circuit:
    """Compile a binary ILP into a gate network.

    Unknown family tags fall back to ``params.default`` with a logged warning.
    """
    from .params import default_design

    params = params or default_design()
    check_families(params, model.families)
    units = _units_from_model(model, lambda tag: params.family(tag).normalization)
    fam_params = [params.family(t) for t in units.family]
    arr = lambda attr: np.asarray([getattr(f, attr) for f in fam_params], dtype=np.float64)
    speed = np.asarray([params.family(v.family).speed for v in model.variables], dtype=np.float64)
    return Circuit(
        model=model,
        params=params,
        units=units,
        gain=arr("gain"),
        growth=arr("growth"),
        decay=arr("decay"),
        memory_init=arr("memory_init"),
        memory_cap=arr("memory_cap"),
        speed=speed,
        probes=_resolve_probes(model, probes),
    )
