"""Direct factorization model: find bits of p and q with p * q = n."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

from ..ilp import IlpModel, ModelBuilder, Sense, VarRef, evaluate
from ._columns import GroupInfo, add_column_equalities, add_product_block, bits_value

__all__ = ["DirectLayout", "DecodeError", "compile_direct", "decode_direct"]


class DecodeError(ValueError):
    """The assignment does not satisfy the model it is being decoded against."""

    def __init__(self, violations):
        self.violations = tuple(violations)
        super().__init__(f"assignment violates {len(self.violations)} constraint(s)")


@dataclass(frozen=True)
class DirectLayout:
    n: int
    n_bits: int
    Np: int
    Nq: int
    G: int
    p: Tuple[VarRef, ...]
    q: Tuple[VarRef, ...]
    s: Dict[Tuple[int, int], VarRef]
    groups: Tuple[GroupInfo, ...]
    pinned: bool

    @property
    def r(self) -> Dict[Tuple[int, int], VarRef]:
        return {(g.index, pos): v for g in self.groups for pos, v in g.remainders}

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def sup_lhs(self) -> Tuple[int, ...]:
        return tuple(g.sup_lhs for g in self.groups)


def compile_direct(
    n: int,
    Np: int,
    Nq: int,
    G: int = 2,
    pin: bool = True,
    remainder_mode: str = "tight",
) -> Tuple[IlpModel, DirectLayout]:
    """Binary ILP whose solutions are the factor pairs of ``n`` within the bit budget.

    With ``pin`` the first and last bit of both factors is forced to 1, which
    excludes ``1 * n`` and even factors, like the benchmark generator does.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be positive")
    if G < 1:
        raise ValueError("G must be >= 1")
    if Np < 1 or Nq < 1 or Np + Nq < n.bit_length():
        raise ValueError(
            f"bit budget Np + Nq = {Np + Nq} cannot hold a {n.bit_length()}-bit product"
        )
    b = ModelBuilder(f"direct_{n}", {"kind": "direct", "n": n, "Np": Np, "Nq": Nq, "G": G})
    p = [b.add_var(f"p_{j}", "x-bits") for j in range(Np)]
    q = [b.add_var(f"q_{k}", "x-bits") for k in range(Nq)]
    s, cols = add_product_block(b, p, q, "s", "products", "soand")
    target = {g: (n >> g) & 1 for g in range(n.bit_length())}
    groups = add_column_equalities(
        b, cols, target, G, prefix="", row_family="soag",
        remainder_family="remainders", remainder_mode=remainder_mode,
    )
    if pin:
        for bitvars in (p, q):
            for v in dict.fromkeys((bitvars[0], bitvars[-1])):
                b.add_constraint([(1, v)], Sense.GE, 1, "soag", f"pin_{v.name}")
    layout = DirectLayout(
        n=n, n_bits=n.bit_length(), Np=Np, Nq=Nq, G=G,
        p=tuple(p), q=tuple(q), s=s, groups=tuple(groups), pinned=pin,
    )
    return b.build(), layout


def decode_direct(layout: DirectLayout, model: IlpModel, assignment) -> Tuple[int, int]:
    ev = evaluate(model, assignment)
    if not ev.satisfied:
        raise DecodeError(ev.violations)
    p = bits_value(assignment, layout.p)
    q = bits_value(assignment, layout.q)
    if p * q != layout.n:
        raise AssertionError(f"satisfying assignment decodes to {p} * {q} != {layout.n}")
    return p, q
