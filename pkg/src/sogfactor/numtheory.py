"""Exact integer number theory used by the factorization models.

Primality, benchmark biprime generation, factor bases, trial-division
smoothness certificates and Dickman-de Bruijn smoothness estimates.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "FactorBase",
    "SmoothFactorization",
    "BenchmarkBiprime",
    "DickmanEstimate",
    "BiprimeGenerationError",
    "is_probable_prime",
    "generate_benchmark_biprime",
    "build_factor_base",
    "smooth_factorize",
    "dickman_rho",
    "smoothness_probability",
]

# Deterministic Miller-Rabin witnesses for every n < 3.3e24 (covers 2^64).
_DETERMINISTIC_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)
_SMALL_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47)


class BiprimeGenerationError(RuntimeError):
    """Raised when the rejection loop cannot find two distinct primes."""


@dataclass(frozen=True)
class FactorBase:
    bound: int
    primes: Tuple[int, ...]
    index: Dict[int, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "index", {p: i for i, p in enumerate(self.primes)})

    @property
    def size(self) -> int:
        """pi(bound), the number of primes in the base."""
        return len(self.primes)

    def __len__(self):
        return len(self.primes)

    def __contains__(self, p):
        return p in self.index


@dataclass(frozen=True)
class SmoothFactorization:
    value: int
    exponents: Dict[int, int]
    large_prime: Optional[int] = None

    @property
    def is_full(self) -> bool:
        return self.large_prime is None

    def reconstruct(self) -> int:
        out = 1
        for p, e in self.exponents.items():
            out *= p**e
        if self.large_prime is not None:
            out *= self.large_prime
        return out


@dataclass(frozen=True)
class BenchmarkBiprime:
    n: int
    p: int
    q: int
    bits_n: int


@dataclass(frozen=True)
class DickmanEstimate:
    r: float
    rho: float
    method: str


def _miller_rabin_round(n: int, d: int, s: int, a: int) -> bool:
    x = pow(a, d, n)
    if x == 1 or x == n - 1:
        return True
    for _ in range(s - 1):
        x = x * x % n
        if x == n - 1:
            return True
    return False


def is_probable_prime(n: int, rounds: int = 40) -> bool:
    """Miller-Rabin primality test.

    Deterministic below 2**64; above that ``rounds`` random witnesses give an
    error probability of at most ``4**-rounds``. Witnesses are drawn from an
    RNG seeded by ``n`` so the answer is reproducible.
    """
    if n < 0 or rounds < 1:
        raise ValueError("need n >= 0 and rounds >= 1")
    if n < 2:
        return False
    for p in _SMALL_PRIMES:
        if n == p:
            return True
        if n % p == 0:
            return False
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    if n < 1 << 64:
        return all(_miller_rabin_round(n, d, s, a) for a in _DETERMINISTIC_BASES)
    rng = random.Random(n)
    for _ in range(rounds):
        a = rng.randrange(2, n - 1)
        if not _miller_rabin_round(n, d, s, a):
            return False
    return True


def _random_pinned_odd(rng: random.Random, nbits: int) -> int:
    # random interior bits, first and last bit forced to 1
    if nbits <= 2:
        return (1 << (nbits - 1)) | 1
    middle = rng.getrandbits(nbits - 2)
    return (1 << (nbits - 1)) | (middle << 1) | 1


def generate_benchmark_biprime(
    bits: int, seed=None, max_attempts: int = 100_000
) -> BenchmarkBiprime:
    """Draw an RSA-like biprime with exactly ``bits`` bits.

    Both factors have ``bits // 2`` bits with their first and last bit set,
    are distinct primes, and their product has exactly ``bits`` bits. The
    returned factors are ordered ``p < q``.
    """
    if bits < 8 or bits % 2:
        raise ValueError(f"bits must be even and >= 8, got {bits}")
    rng = random.Random(seed)
    half = bits // 2

    def draw_prime():
        for _ in range(max_attempts):
            c = _random_pinned_odd(rng, half)
            if is_probable_prime(c):
                return c
        raise BiprimeGenerationError(f"no {half}-bit prime found in {max_attempts} draws")

    for _ in range(max_attempts):
        p, q = draw_prime(), draw_prime()
        if p != q and (p * q).bit_length() == bits:
            p, q = min(p, q), max(p, q)
            return BenchmarkBiprime(n=p * q, p=p, q=q, bits_n=bits)
    raise BiprimeGenerationError(
        f"could not find two distinct {half}-bit primes with a {bits}-bit product"
    )


@lru_cache(maxsize=64)
def _sieve(b: int) -> Tuple[int, ...]:
    flags = np.ones(b + 1, dtype=bool)
    flags[:2] = False
    for i in range(2, math.isqrt(b) + 1):
        if flags[i]:
            flags[i * i :: i] = False
    return tuple(int(p) for p in np.flatnonzero(flags))


def build_factor_base(b: int) -> FactorBase:
    """All primes <= b (sieve of Eratosthenes)."""
    if b < 2:
        raise ValueError("factor base bound must be >= 2")
    return FactorBase(bound=int(b), primes=_sieve(int(b)))


def smooth_factorize(
    v: int, fb: FactorBase, large_prime_cutoff: Optional[int] = None
) -> Optional[SmoothFactorization]:
    """Trial-divide ``v`` over the factor base.

    Returns a full factorization when the cofactor is 1, a partial one when
    the cofactor is a single prime ``<= large_prime_cutoff``, and ``None``
    (rejection) otherwise.
    """
    if v < 1:
        raise ValueError("v must be >= 1")
    cutoff = fb.bound if large_prime_cutoff is None else large_prime_cutoff
    if cutoff < fb.bound:
        raise ValueError("large prime cutoff must be >= factor base bound")
    rest = v
    exps: Dict[int, int] = {}
    for p in fb.primes:
        if rest == 1:
            break
        if rest % p == 0:
            e = 0
            while rest % p == 0:
                rest //= p
                e += 1
            exps[p] = e
    if rest == 1:
        return SmoothFactorization(v, exps)
    if rest <= cutoff and is_probable_prime(rest):
        return SmoothFactorization(v, exps, large_prime=rest)
    return None


# Dickman-de Bruijn function: rho(u) = 1 on [0, 1], u rho'(u) = -rho(u - 1).
_DICKMAN_STEP = 1e-3


@lru_cache(maxsize=8)
def _dickman_table(upper: int) -> np.ndarray:
    """rho sampled on [0, upper] with spacing _DICKMAN_STEP (fixed-step RK4)."""
    h = _DICKMAN_STEP
    per_unit = int(round(1.0 / h))
    n = upper * per_unit + 1
    rho = np.ones(n)

    def delayed(u):
        # linear interpolation of rho(u - 1) on the grid computed so far
        t = (u - 1.0) / h
        if t <= per_unit:
            return 1.0
        i = int(t)
        frac = t - i
        return rho[i] if frac == 0.0 else (1 - frac) * rho[i] + frac * rho[i + 1]

    for i in range(per_unit, n - 1):
        u = i * h
        y = rho[i]
        k1 = -delayed(u) / u
        k2 = -delayed(u + h / 2) / (u + h / 2)
        k3 = k2  # right-hand side does not depend on y
        k4 = -delayed(u + h) / (u + h)
        rho[i + 1] = y + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6
    return rho


def dickman_rho(r: float, method: str = "analytic-delay-ode") -> DickmanEstimate:
    """Probability that a random integer of ``r*h`` bits is ``2**h``-smooth.

    ``method`` is ``"analytic-delay-ode"`` (numerical integration of the
    delay equation) or ``"power-approx"`` (the rough ``r**-r`` estimate).
    """
    if r <= 0:
        raise ValueError("r must be positive")
    if method == "power-approx":
        rho = 1.0 if r <= 1 else float(r) ** (-float(r))
    elif method == "analytic-delay-ode":
        if r <= 1:
            rho = 1.0
        else:
            table = _dickman_table(max(2, int(math.ceil(r))))
            t = r / _DICKMAN_STEP
            i = int(t)
            frac = t - i
            rho = float(table[i] if frac < 1e-12 else (1 - frac) * table[i] + frac * table[i + 1])
    else:
        raise ValueError(f"unknown method {method!r}")
    return DickmanEstimate(r=float(r), rho=min(1.0, max(0.0, rho)), method=method)


def smoothness_probability(
    bit_lengths: Sequence[int], h: int, method: str = "analytic-delay-ode"
) -> float:
    """Product of rho(L/h) over the factors longer than ``h`` bits."""
    if h < 1:
        raise ValueError("h must be >= 1")
    prob = 1.0
    for L in bit_lengths:
        if L > h:
            prob *= dickman_rho(L / h, method).rho
    return prob
