"""Binary integer linear programs with family-tagged variables and rows."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "Sense",
    "VarRef",
    "LinearConstraint",
    "IlpModel",
    "ModelBuilder",
    "Evaluation",
    "evaluate",
    "AssignmentLengthError",
]

# Row activities beyond this bound fall back to exact Python integers.
_INT64_SAFE = 1 << 62


class AssignmentLengthError(ValueError):
    pass


class Sense(str, Enum):
    LE = "<="
    GE = ">="
    EQ = "="

    @classmethod
    def parse(cls, token: str) -> "Sense":
        token = token.strip()
        aliases = {"<=": cls.LE, "=<": cls.LE, "<": cls.LE, "L": cls.LE,
                   ">=": cls.GE, "=>": cls.GE, ">": cls.GE, "G": cls.GE,
                   "=": cls.EQ, "==": cls.EQ, "E": cls.EQ}
        try:
            return aliases[token.upper() if len(token) == 1 else token]
        except KeyError:
            raise ValueError(f"unknown constraint sense {token!r}") from None


@dataclass(frozen=True)
class VarRef:
    index: int
    name: str
    family: str = "default"


@dataclass(frozen=True)
class LinearConstraint:
    terms: Tuple[Tuple[int, VarRef], ...]
    sense: Sense
    rhs: int
    family: str = "default"
    name: str = ""

    def __post_init__(self):
        seen = set()
        for coef, var in self.terms:
            if coef == 0:
                raise ValueError(f"zero coefficient on {var.name} in row {self.name!r}")
            if var.index in seen:
                raise ValueError(f"duplicate variable {var.name} in row {self.name!r}")
            seen.add(var.index)

    def activity(self, bits: Sequence[int]) -> int:
        return sum(c * int(bits[v.index]) for c, v in self.terms)

    def violation(self, bits: Sequence[int]) -> int:
        """0 when satisfied. Positive shortfall for inequalities, lhs - rhs for equalities."""
        lhs = self.activity(bits)
        if self.sense is Sense.LE:
            return max(0, lhs - self.rhs)
        if self.sense is Sense.GE:
            return max(0, self.rhs - lhs)
        return lhs - self.rhs


@dataclass(frozen=True)
class Evaluation:
    violations: Tuple[Tuple[int, int], ...]

    @property
    def satisfied(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.satisfied


@dataclass(frozen=True, eq=False)
class IlpModel:
    """Immutable binary ILP: every variable is in {0, 1}."""

    variables: Tuple[VarRef, ...]
    constraints: Tuple[LinearConstraint, ...]
    name: str = "model"
    provenance: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        for i, v in enumerate(self.variables):
            if v.index != i:
                raise ValueError("variable indices must be dense and ordered")
        n = len(self.variables)
        for con in self.constraints:
            for _, v in con.terms:
                if v.index >= n or self.variables[v.index] != v:
                    raise ValueError(f"row {con.name!r} references undeclared variable {v.name}")

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    @cached_property
    def var_by_name(self) -> Dict[str, VarRef]:
        return {v.name: v for v in self.variables}

    @cached_property
    def families(self) -> Tuple[str, ...]:
        seen = dict.fromkeys(v.family for v in self.variables)
        seen.update(dict.fromkeys(c.family for c in self.constraints))
        return tuple(seen)

    @cached_property
    def arrays(self) -> "RowArrays":
        return RowArrays.from_model(self)

    def structurally_equal(self, other: "IlpModel") -> bool:
        """Same rows (sense, rhs, coefficient per variable position) and variable count."""
        if self.n_vars != other.n_vars or self.n_constraints != other.n_constraints:
            return False
        for a, b in zip(self.constraints, other.constraints):
            if a.sense is not b.sense or a.rhs != b.rhs:
                return False
            if sorted((v.index, c) for c, v in a.terms) != sorted((v.index, c) for c, v in b.terms):
                return False
        return True


@dataclass(frozen=True)
class RowArrays:
    """CSR view of the constraint matrix for fast repeated evaluation."""

    indptr: np.ndarray
    cols: np.ndarray
    coefs: np.ndarray  # int64 when safe, else object
    rhs: np.ndarray
    sense: np.ndarray  # 0: <=, 1: >=, 2: =
    exact_int64: bool

    @classmethod
    def from_model(cls, model: IlpModel) -> "RowArrays":
        indptr = [0]
        cols: List[int] = []
        coefs: List[int] = []
        rhs: List[int] = []
        sense: List[int] = []
        code = {Sense.LE: 0, Sense.GE: 1, Sense.EQ: 2}
        worst = 0
        for con in model.constraints:
            for c, v in con.terms:
                cols.append(v.index)
                coefs.append(c)
            indptr.append(len(cols))
            rhs.append(con.rhs)
            sense.append(code[con.sense])
            worst = max(worst, sum(abs(c) for c, _ in con.terms) + abs(con.rhs))
        safe = worst < _INT64_SAFE
        dtype = np.int64 if safe else object
        return cls(
            indptr=np.asarray(indptr, dtype=np.int64),
            cols=np.asarray(cols, dtype=np.int64),
            coefs=np.asarray(coefs, dtype=dtype),
            rhs=np.asarray(rhs, dtype=dtype),
            sense=np.asarray(sense, dtype=np.int8),
            exact_int64=safe,
        )

    def activities(self, bits: np.ndarray) -> np.ndarray:
        prods = self.coefs * np.asarray(bits, dtype=self.coefs.dtype)[self.cols]
        if len(prods) == 0:
            return np.zeros(len(self.rhs), dtype=self.coefs.dtype)
        sums = np.add.reduceat(prods, self.indptr[:-1]) if len(prods) else prods
        # reduceat misreports empty rows
        empty = self.indptr[1:] == self.indptr[:-1]
        if empty.any():
            sums = np.where(empty, 0, sums)
        return sums

    def unsatisfied_mask(self, bits: np.ndarray) -> np.ndarray:
        act = self.activities(bits)
        le = (self.sense == 0) & (act > self.rhs)
        ge = (self.sense == 1) & (act < self.rhs)
        eq = (self.sense == 2) & (act != self.rhs)
        return le | ge | eq


class ModelBuilder:
    """Incrementally declare variables and rows, then freeze into an IlpModel."""

    def __init__(self, name: str = "model", provenance: Optional[Mapping[str, object]] = None):
        self.name = name
        self.provenance = dict(provenance or {})
        self._vars: List[VarRef] = []
        self._names: Dict[str, VarRef] = {}
        self._rows: List[LinearConstraint] = []

    def add_var(self, name: str, family: str = "default") -> VarRef:
        if name in self._names:
            raise ValueError(f"variable {name!r} already declared")
        v = VarRef(len(self._vars), name, family)
        self._vars.append(v)
        self._names[name] = v
        return v

    def var(self, name: str) -> VarRef:
        return self._names[name]

    def add_constraint(
        self,
        terms: Iterable[Tuple[int, VarRef]],
        sense,
        rhs: int,
        family: str = "default",
        name: Optional[str] = None,
    ) -> LinearConstraint:
        merged: Dict[VarRef, int] = {}
        for c, v in terms:
            merged[v] = merged.get(v, 0) + int(c)
        clean = tuple((c, v) for v, c in merged.items() if c != 0)
        con = LinearConstraint(
            terms=clean,
            sense=sense if isinstance(sense, Sense) else Sense.parse(sense),
            rhs=int(rhs),
            family=family,
            name=name or f"c{len(self._rows)}",
        )
        self._rows.append(con)
        return con

    def add_equality_pair(self, terms, rhs: int, family: str, name: str):
        """An equality as two opposite inequalities (the gate-pair convention)."""
        terms = list(terms)
        return (
            self.add_constraint(terms, Sense.LE, rhs, family, f"{name}_le"),
            self.add_constraint(terms, Sense.GE, rhs, family, f"{name}_ge"),
        )

    def build(self) -> IlpModel:
        return IlpModel(tuple(self._vars), tuple(self._rows), self.name, dict(self.provenance))


def _as_bits(model: IlpModel, assignment) -> Sequence[int]:
    bits = list(assignment)
    if len(bits) != model.n_vars:
        raise AssignmentLengthError(
            f"assignment has {len(bits)} entries, model has {model.n_vars} variables"
        )
    if any(b not in (0, 1) for b in bits):
        raise ValueError("assignment entries must be 0 or 1")
    return bits


def evaluate(model: IlpModel, assignment) -> Evaluation:
    """Exact check of every row. Returns the (row index, violation) list."""
    bits = _as_bits(model, assignment)
    out = []
    for i, con in enumerate(model.constraints):
        viol = con.violation(bits)
        if viol != 0:
            out.append((i, viol))
    return Evaluation(tuple(out))
