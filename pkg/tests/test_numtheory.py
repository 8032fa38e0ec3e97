import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from oracles import dickman_by_quadrature, is_prime_td, sieve_list, trial_division_factors
from sogfactor.numtheory import (
    build_factor_base,
    dickman_rho,
    generate_benchmark_biprime,
    is_probable_prime,
    smooth_factorize,
    smoothness_probability,
)


@pytest.mark.parametrize("n,expected", [(1, False), (13, True), (143, False), (0, False), (2, True)])
def test_primality_examples(n, expected):
    assert is_probable_prime(n, 40) is expected


def test_primality_matches_trial_division_below_5000():
    assert [n for n in range(5000) if is_probable_prime(n)] == [n for n in range(5000) if is_prime_td(n)]


def test_primality_large_known_values():
    assert is_probable_prime(2**61 - 1)
    assert is_probable_prime(2**127 - 1)
    assert not is_probable_prime((2**61 - 1) * (2**31 - 1))
    # strong pseudoprime to bases 2..37 is still caught by the deterministic set
    assert not is_probable_prime(3825123056546413051)


def test_eight_bit_biprimes_come_from_11_and_13():
    for seed in range(20):
        bp = generate_benchmark_biprime(8, seed=seed)
        assert (bp.p, bp.q) == (11, 13) and bp.n == 143


def test_generator_rejects_odd_bits():
    with pytest.raises(ValueError):
        generate_benchmark_biprime(15, seed=0)


def test_generator_is_deterministic():
    assert generate_benchmark_biprime(20, seed=5) == generate_benchmark_biprime(20, seed=5)


@settings(max_examples=60, deadline=None)
@given(bits=st.sampled_from([8, 10, 12, 16, 20, 24, 32, 40]), seed=st.integers(0, 10**6))
def test_generator_invariants(bits, seed):
    bp = generate_benchmark_biprime(bits, seed=seed)
    assert bp.p * bp.q == bp.n and bp.n.bit_length() == bits == bp.bits_n
    for f in (bp.p, bp.q):
        assert is_probable_prime(f)
        assert f.bit_length() == bits // 2
        assert f & 1 and f >> (bits // 2 - 1) == 1


@pytest.mark.parametrize("b,count", [(10, 4), (2, 1), (100, 25), (256, 54)])
def test_factor_base_size(b, count):
    fb = build_factor_base(b)
    assert fb.size == count == len(fb.primes)
    assert list(fb.primes) == sieve_list(b)


def test_factor_base_b10():
    assert build_factor_base(10).primes == (2, 3, 5, 7)


def test_smooth_factorize_examples():
    fb = build_factor_base(8)
    f = smooth_factorize(81, fb, 32)
    assert f.exponents == {3: 4} and f.large_prime is None
    f = smooth_factorize(77, fb, 32)
    assert f.exponents == {7: 1} and f.large_prime == 11
    assert smooth_factorize(74, fb, 32) is None


def test_smooth_factorize_rejects_composite_cofactor():
    fb = build_factor_base(8)
    assert smooth_factorize(11 * 13, fb, 1000) is None


def test_reconstruction_on_random_values():
    rng = random.Random(3)
    fb = build_factor_base(256)
    for _ in range(10_000):
        v = rng.randrange(1, 2**32)
        f = smooth_factorize(v, fb, 4096)
        if f is not None:
            assert f.reconstruct() == v
            assert all(p in fb for p in f.exponents)
            if f.large_prime:
                assert 256 < f.large_prime <= 4096 and is_prime_td(f.large_prime)
            else:
                assert max(trial_division_factors(v) or {1: 1}) <= 256


def test_dickman_examples():
    assert dickman_rho(1).rho == 1.0 == dickman_rho(1, "power-approx").rho
    assert dickman_rho(2, "power-approx").rho == 0.25
    assert dickman_rho(2).rho == pytest.approx(1 - math.log(2), abs=1e-6)
    assert dickman_rho(1.5).rho == pytest.approx(1 - math.log(1.5), abs=1e-6)


@pytest.mark.parametrize("r", [2.5, 3.0, 4.0, 5.5])
def test_dickman_against_quadrature(r):
    assert dickman_rho(r).rho == pytest.approx(dickman_by_quadrature(r), abs=1e-7)


def test_dickman_dominates_power_form_and_is_monotone():
    rs = [1 + 0.1 * i for i in range(31)]
    ana = [dickman_rho(r).rho for r in rs]
    assert all(a >= dickman_rho(r, "power-approx").rho for a, r in zip(ana, rs))
    assert all(x >= y for x, y in zip(ana, ana[1:]))
    assert all(0 <= a <= 1 for a in ana)


def test_smoothness_probability_examples():
    h = 8
    assert smoothness_probability([h, h, h], h) == 1.0
    assert smoothness_probability([2 * h], h) == dickman_rho(2).rho
    assert smoothness_probability([2 * h, 2 * h], h) == pytest.approx(dickman_rho(2).rho ** 2)


def test_empirical_smooth_fraction_of_12_bit_integers():
    fb = build_factor_base(256)
    values = range(2**11, 2**12)
    frac = sum(smooth_factorize(v, fb) is not None for v in values) / len(values)
    assert abs(frac - dickman_rho(1.5).rho) <= 0.3 * dickman_rho(1.5).rho
