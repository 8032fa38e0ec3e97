"""From smooth congruences to a factor.

Each congruence ``L + k n = R`` (with ``L = xbar x``) is multiplied by the
squarefree part ``s`` of ``L`` so its left side becomes a square:
``x'^2 + k' n = y'``. Relations whose exponent vectors sum to zero mod 2 give
``Y^2 - X^2 = K n`` and ``gcd(Y - X, n)`` usually splits n.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .models.congruence import CongruenceRelation, Rejection, make_relation
from .numtheory import FactorBase, build_factor_base

__all__ = [
    "NormalizedRelation",
    "FermatRelation",
    "RelationStore",
    "RelationError",
    "normalize",
    "combine_partials",
    "find_dependency",
    "gf2_dependency",
    "build_fermat",
    "extract_factor",
    "iter_factors",
]


class RelationError(ValueError):
    """A relation or selection breaks the algebra it is supposed to satisfy."""


def _exponents(rel: CongruenceRelation, side: str) -> Counter:
    f = rel.smooth_left if side == "left" else rel.smooth_y
    c = Counter(f.exponents)
    if f.large_prime:
        c[f.large_prime] += 1
    return c


def _value(exps: Mapping[int, int]) -> int:
    return math.prod(p**e for p, e in exps.items())


@dataclass(frozen=True)
class NormalizedRelation:
    """``x'^2 + k' n = y'`` with ``y'`` factored over the base.

    ``exponents`` holds the factor-base exponents of ``y'``; ``extra`` holds
    even exponents of large primes absorbed by pairing partial relations.
    """

    n: int
    s: int
    x_prime: int
    k_prime: int
    y_prime: int
    exponents: Dict[int, int]
    extra: Dict[int, int] = field(default_factory=dict)
    sources: Tuple[CongruenceRelation, ...] = ()

    def __post_init__(self):
        if self.x_prime**2 + self.k_prime * self.n != self.y_prime:
            raise RelationError("x'^2 + k' n != y'")
        if _value(self.exponents) * _value(self.extra) != self.y_prime:
            raise RelationError("exponent vector does not reconstruct y'")
        if any(e % 2 for e in self.extra.values()):
            raise RelationError("unpaired large prime left in y'")

    def parity_mask(self, fb: FactorBase) -> int:
        """Odd exponents as a bit mask over factor-base positions."""
        mask = 0
        for p, e in self.exponents.items():
            if e % 2:
                mask |= 1 << fb.index[p]
        return mask

    @property
    def key(self) -> Tuple[int, int]:
        return self.x_prime, self.y_prime


def _normalize_parts(n: int, left: Counter, right: Counter, fb: FactorBase,
                     sources: Tuple[CongruenceRelation, ...]) -> NormalizedRelation:
    s = math.prod(p for p, e in left.items() if e % 2)
    x_prime = math.prod(p ** ((e + e % 2) // 2) for p, e in left.items())
    y_exps = Counter(right)
    for p, e in left.items():
        if e % 2:
            y_exps[p] += 1
    y_prime = _value(y_exps)
    k_num = y_prime - x_prime**2
    if k_num % n:
        raise RelationError("normalized relation is not a congruence mod n")
    base = {p: e for p, e in y_exps.items() if p in fb and e}
    extra = {p: e for p, e in y_exps.items() if p not in fb and e}
    return NormalizedRelation(n, s, x_prime, k_num // n, y_prime, base, extra, sources)


def normalize(rel: CongruenceRelation, fb: FactorBase) -> NormalizedRelation:
    """Square up the left side of a fully smooth relation.

    Raises :class:`RelationError` for partial relations; those must be paired
    through :func:`combine_partials` first.
    """
    if not rel.is_full:
        raise RelationError(f"relation carries large prime {rel.large_prime}; combine it first")
    return _normalize_parts(rel.n, _exponents(rel, "left"), _exponents(rel, "right"), fb, (rel,))


def _combine_pair(a: CongruenceRelation, b: CongruenceRelation, fb: FactorBase) -> NormalizedRelation:
    # (La + ka n)(Lb + kb n) = La Lb + n (...): the product is again a congruence.
    left = _exponents(a, "left") + _exponents(b, "left")
    right = _exponents(a, "right") + _exponents(b, "right")
    return _normalize_parts(a.n, left, right, fb, (a, b))


@dataclass(frozen=True)
class FermatRelation:
    X: int
    Y: int
    K: int
    selected: Tuple[int, ...]
    x_reduced: bool = True

    def check(self, n: int) -> bool:
        return self.Y * self.Y - self.X * self.X == self.K * n


class _Gf2Basis:
    """Incremental Gaussian elimination over bit-packed rows.

    Each stored row remembers which input rows were XORed into it, so a row
    that reduces to zero yields a dependency immediately.
    """

    def __init__(self):
        self.pivots: Dict[int, Tuple[int, int]] = {}  # leading bit -> (row, combination)
        self.count = 0

    def add(self, row: int) -> Optional[int]:
        combo = 1 << self.count
        self.count += 1
        while row:
            lead = row.bit_length() - 1
            if lead not in self.pivots:
                self.pivots[lead] = (row, combo)
                return None
            prow, pcombo = self.pivots[lead]
            row ^= prow
            combo ^= pcombo
        return combo

    @property
    def rank(self) -> int:
        return len(self.pivots)


def gf2_dependency(rows: Sequence[Union[int, Sequence[int]]]) -> Optional[Tuple[int, ...]]:
    """First nonempty selection of rows whose XOR is zero, as a 0/1 tuple."""
    basis = _Gf2Basis()
    for r in rows:
        if not isinstance(r, (int, np.integer)):
            r = sum(int(b) << i for i, b in enumerate(r))
        combo = basis.add(int(r))
        if combo is not None:
            return tuple((combo >> i) & 1 for i in range(len(rows)))
    return None


class RelationStore:
    """Full relations, partial relations keyed by large prime, and their GF(2) rows."""

    def __init__(self, n: int, fb: Union[FactorBase, int], cutoff: Optional[int] = None):
        self.n = int(n)
        self.fb = fb if isinstance(fb, FactorBase) else build_factor_base(int(fb))
        self.cutoff = self.fb.bound if cutoff is None else int(cutoff)
        self.full: List[NormalizedRelation] = []
        self.partials: Dict[int, List[CongruenceRelation]] = {}
        self.raw: List[CongruenceRelation] = []
        self.dependencies: List[int] = []  # bit masks over self.full
        self._paired: Dict[int, int] = {}  # large prime -> partials already chained
        self._seen: set = set()
        self._basis = _Gf2Basis()

    # -- intake -----------------------------------------------------------
    def add(self, rel: CongruenceRelation, combine: bool = True) -> List[NormalizedRelation]:
        """Register a relation; returns the full relations it produced."""
        if rel.n != self.n:
            raise RelationError("relation belongs to a different n")
        key = (rel.left, rel.y)
        if key in self._seen:
            return []
        self._seen.add(key)
        self.raw.append(rel)
        if rel.is_full:
            return [r for r in [self._add_full(normalize(rel, self.fb))] if r]
        self.partials.setdefault(rel.large_prime, []).append(rel)
        return combine_partials(self) if combine else []

    def _add_full(self, nr: NormalizedRelation) -> Optional[NormalizedRelation]:
        if nr.x_prime**2 % self.n != nr.y_prime % self.n:
            raise RelationError("x'^2 and y' differ mod n")
        self.full.append(nr)
        combo = self._basis.add(nr.parity_mask(self.fb))
        if combo is not None:
            self.dependencies.append(combo)
        return nr

    # -- views ------------------------------------------------------------
    @property
    def rank(self) -> int:
        return self._basis.rank

    @property
    def n_partials(self) -> int:
        return sum(len(v) for v in self.partials.values())

    def matrix(self) -> np.ndarray:
        """Dense 0/1 matrix, one row per full relation, one column per base prime."""
        m = np.zeros((len(self.full), self.fb.size), dtype=np.uint8)
        for i, r in enumerate(self.full):
            for p, e in r.exponents.items():
                m[i, self.fb.index[p]] = e % 2
        return m

    def selection(self, combo: int) -> Tuple[int, ...]:
        return tuple((combo >> i) & 1 for i in range(len(self.full)))

    # -- text format ------------------------------------------------------
    def to_text(self) -> str:
        lines = [f"# relations n={self.n} b={self.fb.bound} cutoff={self.cutoff}"]
        for r in self.raw:
            exps = sorted(_exponents(r, "right").items())
            lines.append(" ".join([str(r.xbar), str(r.x), str(r.k), str(r.y)] + [f"{p}:{e}" for p, e in exps]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RelationStore":
        head, *rows = [ln for ln in text.splitlines() if ln.strip()]
        if not head.startswith("# relations"):
            raise ValueError("missing relation store header")
        meta = dict(tok.split("=") for tok in head.split()[2:])
        store = cls(int(meta["n"]), int(meta["b"]), int(meta["cutoff"]))
        for ln in rows:
            tok = ln.split()
            xbar, x, k, y = (int(t) for t in tok[:4])
            listed = {int(p): int(e) for p, e in (t.split(":") for t in tok[4:])}
            rel = make_relation(store.n, xbar, x, k, store.fb, store.cutoff)
            if isinstance(rel, Rejection) or rel.y != y or dict(_exponents(rel, "right")) != listed:
                raise ValueError(f"stored relation does not verify: {ln!r}")
            store.add(rel)
        return store

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "RelationStore":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def combine_partials(store: RelationStore) -> List[NormalizedRelation]:
    """Pair partial relations that share a large prime.

    Partials sharing ``P`` are chained as consecutive pairs ``(1,2), (2,3), ...``;
    pairs emitted by earlier calls are not repeated.
    """
    out: List[NormalizedRelation] = []
    for P, rels in store.partials.items():
        done = store._paired.get(P, 0)
        for i in range(max(done, 1), len(rels)):
            nr = store._add_full(_combine_pair(rels[i - 1], rels[i], store.fb))
            out.append(nr)
        store._paired[P] = max(done, len(rels))
    return out


def find_dependency(source: Union[RelationStore, Sequence], skip: int = 0) -> Optional[Tuple[int, ...]]:
    """A nonempty 0/1 selection whose exponent vectors sum to zero mod 2.

    ``source`` is a store (uses its incremental basis; ``skip`` selects later
    dependencies) or a sequence of rows given as bit tuples or integer masks.
    """
    if isinstance(source, RelationStore):
        if len(source.dependencies) <= skip:
            return None
        return source.selection(source.dependencies[skip])
    return gf2_dependency(source)


def build_fermat(selection: Sequence[int], store: RelationStore, n: Optional[int] = None) -> FermatRelation:
    """Multiply the selected relations into ``Y^2 - X^2 = K n``.

    ``Y`` is the exact square root of the product of the ``y'``; ``X`` is the
    product of the ``x'`` reduced mod n.
    """
    n = store.n if n is None else int(n)
    ids = tuple(i for i, e in enumerate(selection) if e)
    if not ids:
        raise RelationError("empty selection")
    prod_y = 1
    X = 1
    for i in ids:
        r = store.full[i]
        prod_y *= r.y_prime
        X = X * r.x_prime % n
    Y = math.isqrt(prod_y)
    if Y * Y != prod_y:
        raise RelationError("product of selected y' is not a perfect square")
    diff = Y * Y - X * X
    if diff % n:
        raise RelationError("Y^2 - X^2 is not a multiple of n")
    return FermatRelation(X, Y, diff // n, ids)


def extract_factor(n: int, fr: FermatRelation) -> Optional[int]:
    """``gcd(Y - X, n)`` when it is a proper divisor, else ``None``."""
    g = math.gcd(fr.Y - fr.X, n)
    return g if 1 < g < n else None


def iter_factors(store: RelationStore, start: int = 0) -> Iterator[Tuple[int, Optional[int], FermatRelation]]:
    """Try each recorded dependency from ``start`` on; yields (index, factor or None, relation)."""
    for i in range(start, len(store.dependencies)):
        fr = build_fermat(store.selection(store.dependencies[i]), store)
        yield i, extract_factor(store.n, fr), fr
