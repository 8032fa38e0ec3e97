"""Smooth-congruence models: find x, k with ``xbar * x + k * n = y`` and y smooth.

Three encodings of the right-hand side are available:

``grouped-product``
    y is the product of ``h``-bit splits, chained as ``z1 = y0 y1``,
    ``z2 = z1 y2``, ... so every solution is ``2**h``-smooth by construction.
``multi-equation``
    one equation ``xbar x + k n = w_j y_j`` per split; smoothness is likely
    but checked after decoding.
``basic``
    y is a plain bit vector; smoothness is entirely checked after decoding.

The quadratic reference model ``(x + isqrt(n))**2 = y z`` lives here too.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

from ..ilp import IlpModel, ModelBuilder, Sense, VarRef, evaluate
from ..numtheory import FactorBase, SmoothFactorization, build_factor_base, smooth_factorize
from ._columns import (
    Columns,
    GroupInfo,
    add_column_equalities,
    add_product_block,
    bits_value,
    encode_bit_product,
)
from .direct import DecodeError

__all__ = [
    "VARIANTS",
    "CongruenceParams",
    "CongruenceLayout",
    "CongruenceRelation",
    "Rejection",
    "choose_xbar",
    "xbar_window",
    "compile_congruence",
    "decode_congruence",
    "make_relation",
    "QuadraticLayout",
    "compile_quadratic_reference",
    "decode_quadratic",
]

VARIANTS = ("grouped-product", "multi-equation", "basic")
DEFAULT_BUDGET = {"grouped-product": 120.0, "multi-equation": 130.0, "basic": 100.0}


@dataclass(frozen=True)
class CongruenceParams:
    """Bit budgets of one congruence subproblem.

    ``H`` is the bit length of ``sup(k n) = (2**k_bits - 1) n``. When
    ``split_bits`` is omitted the splits are ``h`` bits each and their count
    is ``ceil(budget% * H / h)``.
    """

    n: int
    h: int = 8
    k_bits: int = 2
    x_bits: Optional[int] = None  # default h + r
    r: int = 2
    xbar: Optional[int] = None
    variant: str = "grouped-product"
    length_budget_pct: Optional[float] = None
    K_splits: Optional[int] = None
    split_bits: Optional[Tuple[int, ...]] = None
    w_y_headroom: int = 2
    pin_split_msb: Optional[bool] = None  # default: on for multi-equation
    G: int = 2

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        for name in ("h", "k_bits", "G"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.r < 0 or self.w_y_headroom < 0:
            raise ValueError("r and w_y_headroom must be >= 0")
        if self.x_bits is not None and self.x_bits < 1:
            raise ValueError("x_bits must be >= 1")
        if self.split_bits is not None:
            object.__setattr__(self, "split_bits", tuple(int(s) for s in self.split_bits))
            if not self.split_bits or min(self.split_bits) < 1:
                raise ValueError("split_bits must be a nonempty list of positive lengths")
        if self.budget_pct < 100:
            raise ValueError("length budget must be >= 100% of H")
        if self.variant != "basic" and sum(self.splits) < self.H:
            raise ValueError(
                f"split lengths sum to {sum(self.splits)} bits, below H = {self.H}: no solution is representable"
            )

    @property
    def b(self) -> int:
        return 1 << self.h

    @property
    def H(self) -> int:
        return (((1 << self.k_bits) - 1) * self.n).bit_length()

    @property
    def budget_pct(self) -> float:
        if self.length_budget_pct is not None:
            return float(self.length_budget_pct)
        return DEFAULT_BUDGET[self.variant]

    @property
    def n_x_bits(self) -> int:
        return self.h + self.r if self.x_bits is None else self.x_bits

    @property
    def splits(self) -> Tuple[int, ...]:
        if self.split_bits is not None:
            return self.split_bits
        K = self.K_splits or math.ceil(self.budget_pct / 100.0 * self.H / self.h - 1e-9)
        return (self.h,) * max(1, K)

    @property
    def pin_msb(self) -> bool:
        if self.pin_split_msb is None:
            return self.variant == "multi-equation"
        return self.pin_split_msb

    def with_xbar(self, xbar: int) -> "CongruenceParams":
        return replace(self, xbar=int(xbar))


def xbar_window(params: CongruenceParams) -> Tuple[int, int]:
    """``[2**(H-h-r), 2**(H-h-r+1)]`` so that x fits in ``h + r`` bits."""
    e = max(0, params.H - params.h - params.r)
    return 1 << e, 1 << (e + 1)


def _smooth_in_window(rng: random.Random, primes: Sequence[int], lo: int, hi: int, start: int = 1,
                      attempts: int = 10_000) -> int:
    for _ in range(attempts):
        v = start
        while v < lo:
            p = rng.choice(primes)
            if v * p > hi:
                break
            v *= p
        if lo <= v <= hi:
            return v
    raise ValueError(f"no smooth multiple of {start} found in [{lo}, {hi}]")


def choose_xbar(strategy: str, params: CongruenceParams, rng: Union[random.Random, int, None] = None,
                pending_large_primes: Sequence[int] = ()) -> int:
    """Pick the fixed multiplier of a subproblem.

    ``square`` returns a random odd square in the window, ``smooth-preset`` a
    random ``b``-smooth number, and ``large-prime-recycle`` a multiple of a
    pending large prime (the prime alone when it already exceeds the window).
    """
    if not isinstance(rng, random.Random):
        rng = random.Random(rng)
    lo, hi = xbar_window(params)
    if strategy == "square":
        roots = [s for s in range(math.isqrt(lo - 1) + 1, math.isqrt(hi) + 1) if s % 2 == 1]
        if not roots:
            raise ValueError(f"no odd square in [{lo}, {hi}]")
        return rng.choice(roots) ** 2
    primes = build_factor_base(params.b).primes
    if strategy == "smooth-preset":
        return _smooth_in_window(rng, primes, lo, hi)
    if strategy == "large-prime-recycle":
        if not pending_large_primes:
            raise ValueError("large-prime-recycle needs at least one pending large prime")
        P = int(rng.choice(list(pending_large_primes)))
        if P >= lo:
            return P
        return _smooth_in_window(rng, primes, lo, hi, start=P)
    raise ValueError(f"unknown xbar strategy {strategy!r}")


@dataclass(frozen=True)
class CongruenceLayout:
    params: CongruenceParams
    xbar: int
    x: Tuple[VarRef, ...]
    k: Tuple[VarRef, ...]
    lhs: Tuple[VarRef, ...]  # bits of xbar x + k n (the y of the basic variant)
    splits: Tuple[Tuple[VarRef, ...], ...]
    cofactors: Tuple[Tuple[VarRef, ...], ...]  # w_j, multi-equation only
    chain: Tuple[Tuple[VarRef, ...], ...]  # intermediate products, grouped-product only
    groups: Tuple[GroupInfo, ...]


def _scaled_columns(vars_: Sequence[VarRef], const: int) -> Columns:
    """Column map of ``const * sum 2^i v_i``."""
    cols: Columns = {}
    t = 0
    while const >> t:
        if (const >> t) & 1:
            for i, v in enumerate(vars_):
                cols.setdefault(i + t, []).append(v)
        t += 1
    return cols


def _merge(*maps: Columns) -> Columns:
    out: Columns = {}
    for m in maps:
        for g, ts in m.items():
            out.setdefault(g, []).extend(ts)
    return out


def _at_least_one(b: ModelBuilder, vars_: Sequence[VarRef], name: str):
    b.add_constraint([(1, v) for v in vars_], Sense.GE, 1, "soag", name)


def compile_congruence(params: CongruenceParams) -> Tuple[IlpModel, CongruenceLayout]:
    """Binary ILP whose solutions are congruences ``xbar x + k n = y``.

    ``x >= 1`` and ``k >= 1`` are enforced. Every equality between integers
    is emitted as grouped carry rows, each an ``<=``/``>=`` pair.
    """
    p = params
    if p.xbar is None:
        raise ValueError("params.xbar must be set (see choose_xbar)")
    xbar = int(p.xbar)
    if xbar < 1:
        raise ValueError("xbar must be >= 1")
    n, G = p.n, p.G
    b = ModelBuilder(
        f"congruence_{p.variant}_{n}_{xbar}",
        {"kind": "congruence", "variant": p.variant, "n": n, "xbar": xbar, "h": p.h},
    )
    x = [b.add_var(f"x_{i}", "x-bits") for i in range(p.n_x_bits)]
    k = [b.add_var(f"k_{i}", "k-bits") for i in range(p.k_bits)]
    _at_least_one(b, x, "x_pos")
    _at_least_one(b, k, "k_pos")
    sup = xbar * ((1 << len(x)) - 1) + n * ((1 << len(k)) - 1)
    lhs_family = "y-splits" if p.variant == "basic" else "sum-bits"
    t = [b.add_var(f"t_{i}", lhs_family) for i in range(sup.bit_length())]
    lhs_cols = _merge(_scaled_columns(x, xbar), _scaled_columns(k, n))
    groups: List[GroupInfo] = []
    groups += add_column_equalities(b, lhs_cols, dict(enumerate(t)), G, prefix="t")

    splits: List[List[VarRef]] = []
    for j, L in enumerate(p.splits if p.variant != "basic" else ()):
        ys = [b.add_var(f"y{j}_{i}", "y-splits") for i in range(L)]
        if p.pin_msb and L > 1:
            b.add_constraint([(1, ys[-1])], Sense.GE, 1, "soag", f"pin_y{j}")
        splits.append(ys)

    chain: List[List[VarRef]] = []
    cofactors: List[List[VarRef]] = []
    if p.variant == "grouped-product":
        acc = splits[0]
        if len(splits) == 1:
            cols = {i: [v] for i, v in enumerate(acc)}
            groups += add_column_equalities(b, cols, dict(enumerate(t)), G, prefix="z0")
        for j in range(1, len(splits)):
            last = j == len(splits) - 1
            _, cols = add_product_block(b, acc, splits[j], f"s{j}", "products", "soand")
            if last:
                target = dict(enumerate(t))
            else:
                width = len(acc) + len(splits[j])
                z = [b.add_var(f"z{j}_{i}", "sum-bits") for i in range(width)]
                chain.append(z)
                target = dict(enumerate(z))
            groups += add_column_equalities(b, cols, target, G, prefix=f"z{j}")
            if not last:
                acc = z
    elif p.variant == "multi-equation":
        for j, ys in enumerate(splits):
            wl = max(1, p.H + p.w_y_headroom - len(ys))
            w = [b.add_var(f"w{j}_{i}", "w-bits") for i in range(wl)]
            cofactors.append(w)
            _, cols = add_product_block(b, w, ys, f"s{j}", "products", "soand")
            groups += add_column_equalities(b, cols, dict(enumerate(t)), G, prefix=f"e{j}")

    layout = CongruenceLayout(
        params=p, xbar=xbar, x=tuple(x), k=tuple(k), lhs=tuple(t),
        splits=tuple(tuple(s) for s in splits), cofactors=tuple(tuple(w) for w in cofactors),
        chain=tuple(tuple(z) for z in chain), groups=tuple(groups),
    )
    return b.build(), layout


@dataclass(frozen=True)
class CongruenceRelation:
    """Validated ``xbar * x + k * n = y``.

    ``smooth_left`` certifies ``xbar * x`` and ``smooth_y`` certifies y over
    the factor base; at most one large prime occurs over both.
    """

    n: int
    xbar: int
    x: int
    k: int
    y: int
    y_splits: Tuple[int, ...]
    smooth_left: SmoothFactorization
    smooth_y: SmoothFactorization

    def __post_init__(self):
        if self.xbar * self.x + self.k * self.n != self.y:
            raise ValueError("relation does not satisfy xbar x + k n = y")
        if self.smooth_left.reconstruct() != self.xbar * self.x or self.smooth_y.reconstruct() != self.y:
            raise ValueError("smoothness certificate does not reconstruct its value")

    @property
    def left(self) -> int:
        return self.xbar * self.x

    @property
    def large_prime(self) -> Optional[int]:
        return self.smooth_left.large_prime or self.smooth_y.large_prime

    @property
    def is_full(self) -> bool:
        return self.large_prime is None


@dataclass(frozen=True)
class Rejection:
    """A decoded solution that does not yield a usable relation."""

    reason: str
    resample: bool = False
    values: Dict[str, int] = field(default_factory=dict)

    def __bool__(self):
        return False


def make_relation(n: int, xbar: int, x: int, k: int, fb: FactorBase, cutoff: Optional[int] = None,
                  y_splits: Sequence[int] = ()) -> Union[CongruenceRelation, Rejection]:
    """Certify ``xbar x + k n`` and ``xbar x`` over ``fb``; one large prime at most."""
    y = xbar * x + k * n
    vals = {"xbar": xbar, "x": x, "k": k, "y": y}
    sy = smooth_factorize(y, fb, cutoff)
    if sy is None:
        return Rejection("y-not-smooth", values=vals)
    sl = smooth_factorize(xbar * x, fb, cutoff)
    if sl is None:
        return Rejection("x-not-smooth", values=vals)
    if sl.large_prime and sy.large_prime:
        return Rejection("two-large-primes", values=vals)
    return CongruenceRelation(n, xbar, x, k, y, tuple(y_splits), sl, sy)


def decode_congruence(layout: CongruenceLayout, model: IlpModel, assignment, fb: FactorBase,
                      cutoff: Optional[int] = None) -> Union[CongruenceRelation, Rejection]:
    """Rebuild integers from the bits and certify the relation.

    Raises :class:`DecodeError` when the assignment violates the model.
    """
    ev = evaluate(model, assignment)
    if not ev.satisfied:
        raise DecodeError(ev.violations)
    p = layout.params
    x = bits_value(assignment, layout.x)
    k = bits_value(assignment, layout.k)
    y = layout.xbar * x + k * p.n
    if bits_value(assignment, layout.lhs) != y:
        raise AssertionError("left-hand side bits disagree with xbar x + k n")
    splits = tuple(bits_value(assignment, s) for s in layout.splits)
    if p.variant == "grouped-product" and math.prod(splits) != y:
        raise AssertionError("split product differs from y")
    if p.variant == "multi-equation":
        for s, w in zip(layout.splits, layout.cofactors):
            if bits_value(assignment, s) * bits_value(assignment, w) != y:
                raise AssertionError("split times cofactor differs from y")
        if len(set(splits)) < len(splits):
            return Rejection("duplicate-splits", resample=True, values={"x": x, "k": k, "y": y})
    return make_relation(p.n, layout.xbar, x, k, fb, cutoff, splits)


@dataclass(frozen=True)
class QuadraticLayout:
    n: int
    root: int
    x: Tuple[VarRef, ...]
    u: Tuple[VarRef, ...]  # x + isqrt(n)
    y: Tuple[VarRef, ...]
    z: Tuple[VarRef, ...]
    square: Tuple[VarRef, ...]  # bits of u**2 = y z
    groups: Tuple[GroupInfo, ...]


def compile_quadratic_reference(n: int, x_bits: int, y_bits: int, z_bits: int,
                                G: int = 2) -> Tuple[IlpModel, QuadraticLayout]:
    """``(x + isqrt(n))**2 = y z`` with one squaring block and one product block."""
    if min(x_bits, y_bits, z_bits) < 1:
        raise ValueError("bit budgets must be >= 1")
    root = math.isqrt(n)
    sup_u = root + (1 << x_bits) - 1
    if y_bits + z_bits < (root * root).bit_length():
        raise ValueError("y and z budgets cannot hold the square")
    b = ModelBuilder(f"quadratic_{n}", {"kind": "quadratic", "n": n})
    x = [b.add_var(f"x_{i}", "x-bits") for i in range(x_bits)]
    u = [b.add_var(f"u_{i}", "sum-bits") for i in range(sup_u.bit_length())]
    y = [b.add_var(f"y_{i}", "y-splits") for i in range(y_bits)]
    z = [b.add_var(f"z_{i}", "y-splits") for i in range(z_bits)]
    groups: List[GroupInfo] = []
    cols = _scaled_columns(x, 1)
    for i in range(root.bit_length()):
        if (root >> i) & 1:
            cols.setdefault(i, []).append(1)
    groups += add_column_equalities(b, cols, dict(enumerate(u)), G, prefix="u")
    # u*u: diagonal terms are u_j itself, off-diagonal pairs appear twice
    sq_cols: Columns = {}
    for j, uj in enumerate(u):
        sq_cols.setdefault(2 * j, []).append(uj)
        for i in range(j + 1, len(u)):
            s = b.add_var(f"sq_{j}_{i}", "products")
            encode_bit_product(b, uj, u[i], s, "soand", f"and_sq_{j}_{i}")
            sq_cols.setdefault(i + j, []).extend([s, s])
    width = max(2 * len(u), y_bits + z_bits)
    sq = [b.add_var(f"q_{i}", "sum-bits") for i in range(width)]
    groups += add_column_equalities(b, sq_cols, dict(enumerate(sq)), G, prefix="q")
    _, yz_cols = add_product_block(b, y, z, "p", "products", "soand")
    groups += add_column_equalities(b, yz_cols, dict(enumerate(sq)), G, prefix="yz")
    layout = QuadraticLayout(n, root, tuple(x), tuple(u), tuple(y), tuple(z), tuple(sq), tuple(groups))
    return b.build(), layout


def decode_quadratic(layout: QuadraticLayout, model: IlpModel, assignment) -> Tuple[int, int, int]:
    ev = evaluate(model, assignment)
    if not ev.satisfied:
        raise DecodeError(ev.violations)
    x = bits_value(assignment, layout.x)
    y = bits_value(assignment, layout.y)
    z = bits_value(assignment, layout.z)
    if (x + layout.root) ** 2 != y * z:
        raise AssertionError("decoded values violate (x + isqrt(n))^2 = y z")
    return x, y, z
