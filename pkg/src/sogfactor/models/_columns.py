"""Shared building blocks: AND gates, product blocks and grouped carry rows.

A *column map* sends an absolute bit position to the list of terms summed
at that weight. Terms are binary variables or the constant ``1``.
:func:`add_column_equalities` turns ``sum_g 2^g col[g] = sum_g 2^g target[g]``
into one equality per group of ``G`` consecutive columns. Each group emits
remainder bits that are fed, at their absolute weight, into the columns of
the higher groups.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple, Union

from ..ilp import LinearConstraint, ModelBuilder, Sense, VarRef

Term = Union[VarRef, int]
Columns = Dict[int, List[Term]]
Target = Dict[int, Union[VarRef, int]]

REMAINDER_MODES = ("tight", "wide")


@dataclass(frozen=True)
class GroupInfo:
    index: int
    first_column: int
    sup_lhs: int
    # (local position g, variable); the variable weighs 2^(first_column + g)
    remainders: Tuple[Tuple[int, VarRef], ...]


def encode_bit_product(
    builder: ModelBuilder, a: VarRef, b: VarRef, s: VarRef, family: str = "soand", name: str = ""
) -> Tuple[LinearConstraint, LinearConstraint]:
    """s = a AND b as ``a + b <= s + 1`` and ``a + b >= 2 s``."""
    if len({a.index, b.index, s.index}) != 3:
        raise ValueError("bit product needs three distinct variables")
    name = name or f"and_{s.name}"
    upper = builder.add_constraint([(1, a), (1, b), (-1, s)], Sense.LE, 1, family, f"{name}_u")
    lower = builder.add_constraint([(1, a), (1, b), (-2, s)], Sense.GE, 0, family, f"{name}_l")
    return upper, lower


def add_product_block(
    builder: ModelBuilder,
    a: Sequence[VarRef],
    b: Sequence[VarRef],
    prefix: str,
    var_family: str = "products",
    gate_family: str = "soand",
) -> Tuple[Dict[Tuple[int, int], VarRef], Columns]:
    """Bitwise products s_jk = a_j b_k; returns them and their column map."""
    s: Dict[Tuple[int, int], VarRef] = {}
    cols: Columns = {}
    for j, aj in enumerate(a):
        for k, bk in enumerate(b):
            sv = builder.add_var(f"{prefix}_{j}_{k}", var_family)
            encode_bit_product(builder, aj, bk, sv, gate_family, f"and_{prefix}_{j}_{k}")
            s[j, k] = sv
            cols.setdefault(j + k, []).append(sv)
    return s, cols


def _remainder_count(sup: int, G: int, mode: str) -> int:
    if mode == "tight":
        return (sup >> G).bit_length()
    if mode == "wide":
        # window g = G .. G + floor(log2 sup) + 1
        return sup.bit_length() + 1 if sup > 0 else 0
    raise ValueError(f"unknown remainder mode {mode!r}")


def add_column_equalities(
    builder: ModelBuilder,
    columns: Columns,
    target: Target,
    G: int,
    prefix: str,
    row_family: str = "soag",
    remainder_family: str = "remainders",
    remainder_mode: str = "tight",
) -> List[GroupInfo]:
    if G < 1:
        raise ValueError("group size G must be >= 1")
    pending: Columns = {g: list(ts) for g, ts in columns.items()}

    def top_column():
        cols = [g for g, ts in pending.items() if ts]
        cols += [g for g, t in target.items() if not (isinstance(t, int) and t == 0)]
        return max(cols, default=-1)

    groups: List[GroupInfo] = []
    M = 0
    while M * G <= top_column():
        base = M * G
        end = base + G
        terms: Dict[VarRef, int] = {}
        const = 0
        sup = 0
        for g in range(base, end):
            w = 1 << (g - base)
            for t in pending.pop(g, []):
                if isinstance(t, int):
                    const += w * t
                    sup += w * t
                else:
                    terms[t] = terms.get(t, 0) + w
                    sup += w
        rhs_const = 0
        for g in range(base, end):
            w = 1 << (g - base)
            t = target.get(g, 0)
            if isinstance(t, int):
                rhs_const += w * t
            else:
                terms[t] = terms.get(t, 0) - w
        remainders: List[Tuple[int, VarRef]] = []
        if top_column() >= end:
            for i in range(_remainder_count(sup, G, remainder_mode)):
                g_local = G + i
                rv = builder.add_var(f"{prefix}r_{M}_{g_local}", remainder_family)
                remainders.append((g_local, rv))
                terms[rv] = terms.get(rv, 0) - (1 << g_local)
                pending.setdefault(base + g_local, []).append(rv)
        row_terms = [(c, v) for v, c in terms.items() if c != 0]
        if row_terms or const != rhs_const:
            builder.add_equality_pair(row_terms, rhs_const - const, row_family, f"{prefix}grp_{M}")
        groups.append(GroupInfo(M, base, sup, tuple(remainders)))
        M += 1
    return groups


def bits_value(bits: Sequence[int], vars_: Sequence[VarRef]) -> int:
    return sum(int(bits[v.index]) << i for i, v in enumerate(vars_))
