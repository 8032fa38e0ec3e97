"""Bound-propagation presolve for binary ILPs.

Three rules are applied to a fixpoint: fixing variables whose value is
forced by a single row, propagating {0, 1} ranges through row activity
bounds, and dropping rows that hold for every completion.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

from .model import IlpModel, ModelBuilder, Sense, VarRef

__all__ = ["InfeasibleModelError", "PresolveResult", "presolve"]


class InfeasibleModelError(ValueError):
    """Presolve proved that no binary assignment satisfies the model."""


@dataclass(frozen=True)
class PresolveResult:
    model: IlpModel
    fixed: Dict[VarRef, int]
    # reduced variable index -> original VarRef
    origin: Tuple[VarRef, ...]
    original: IlpModel

    def restrict(self, assignment: Sequence[int]) -> List[int]:
        """Project a full assignment onto the reduced model's variables."""
        return [int(assignment[v.index]) for v in self.origin]

    def expand(self, reduced: Sequence[int]) -> List[int]:
        """Lift a reduced-model assignment back to the original variables."""
        full = [0] * self.original.n_vars
        for v, bit in self.fixed.items():
            full[v.index] = bit
        for v, bit in zip(self.origin, reduced):
            full[v.index] = int(bit)
        return full

    def consistent(self, assignment: Sequence[int]) -> bool:
        return all(int(assignment[v.index]) == b for v, b in self.fixed.items())


def _row_bounds(terms, fixed):
    const = 0
    lo = hi = 0
    free = []
    for c, v in terms:
        if v.index in fixed:
            const += c * fixed[v.index]
        else:
            free.append((c, v))
            if c > 0:
                hi += c
            else:
                lo += c
    return const, lo, hi, free


def presolve(model: IlpModel, max_passes: int = 1000) -> PresolveResult:
    fixed: Dict[int, int] = {}
    active = list(range(model.n_constraints))

    def fix(v: VarRef, bit: int):
        old = fixed.get(v.index)
        if old is not None and old != bit:
            raise InfeasibleModelError(f"{v.name} forced to both 0 and 1")
        if old is None:
            fixed[v.index] = bit
            return True
        return False

    for _ in range(max_passes):
        changed = False
        keep = []
        for ri in active:
            con = model.constraints[ri]
            const, lo, hi, free = _row_bounds(con.terms, fixed)
            rhs = con.rhs - const
            need_le = con.sense in (Sense.LE, Sense.EQ)
            need_ge = con.sense in (Sense.GE, Sense.EQ)
            if (need_le and lo > rhs) or (need_ge and hi < rhs):
                raise InfeasibleModelError(f"row {con.name!r} cannot be satisfied")
            if (not need_le or hi <= rhs) and (not need_ge or lo >= rhs):
                changed = True
                continue  # holds for every completion
            for c, v in free:
                if v.index in fixed:
                    continue
                if need_le:
                    # smallest activity with this variable pinned the other way
                    if c > 0 and lo + c > rhs:
                        changed |= fix(v, 0)
                    elif c < 0 and lo - c > rhs:
                        changed |= fix(v, 1)
                if need_ge and v.index not in fixed:
                    if c > 0 and hi - c < rhs:
                        changed |= fix(v, 1)
                    elif c < 0 and hi + c < rhs:
                        changed |= fix(v, 0)
            keep.append(ri)
        active = keep
        if not changed:
            break

    b = ModelBuilder(model.name + "_presolved", {**model.provenance, "presolved": True})
    origin = []
    remap: Dict[int, VarRef] = {}
    for v in model.variables:
        if v.index not in fixed:
            remap[v.index] = b.add_var(v.name, v.family)
            origin.append(v)
    for ri in active:
        con = model.constraints[ri]
        const, _, _, free = _row_bounds(con.terms, fixed)
        b.add_constraint(
            [(c, remap[v.index]) for c, v in free], con.sense, con.rhs - const, con.family, con.name
        )
    fixed_refs = {model.variables[i]: bit for i, bit in sorted(fixed.items())}
    return PresolveResult(b.build(), fixed_refs, tuple(origin), model)
