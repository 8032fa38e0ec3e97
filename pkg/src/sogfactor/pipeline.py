"""End-to-end factoring: the direct product model and the congruence loop."""
from __future__ import annotations

import itertools
import logging
import math
import random
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .emulator import DesignParams, build_circuit, run_ensemble, solve
from .ilp import presolve
from .models import (
    CongruenceParams,
    choose_xbar,
    compile_congruence,
    compile_direct,
    decode_congruence,
    decode_direct,
)
from .numtheory import build_factor_base, is_probable_prime
from .relations import RelationStore, extract_factor, build_fermat

log = logging.getLogger(__name__)

__all__ = [
    "NotCompositeError",
    "FactorReport",
    "CongruenceConfig",
    "check_composite",
    "direct_bit_split",
    "factor_direct",
    "factor_congruence",
]

XBAR_STRATEGIES = ("smooth-preset", "square", "large-prime-recycle")


class NotCompositeError(ValueError):
    pass


def check_composite(n: int) -> None:
    if n < 4 or is_probable_prime(n):
        raise NotCompositeError(f"{n} is not composite")


@dataclass
class FactorReport:
    n: int
    method: str
    seed: int
    factors: Optional[Tuple[int, int]] = None
    runs: int = 0
    retries: int = 0  # subproblems (congruence) or restarts (direct) beyond the first
    relations: int = 0
    partials: int = 0
    dependencies_tried: int = 0
    rejections: Dict[str, int] = field(default_factory=dict)
    wall_time: float = 0.0
    simulated_time: float = 0.0
    exhausted: bool = False
    store_path: Optional[str] = None

    @property
    def success(self) -> bool:
        return self.factors is not None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["success"] = self.success
        return d


def direct_bit_split(n: int) -> Tuple[int, int]:
    """Factor bit budgets for a balanced biprime: ``(bits // 2, bits - bits // 2)``."""
    bits = n.bit_length()
    return bits // 2, bits - bits // 2


def _ordered(a: int, b: int) -> Tuple[int, int]:
    return (a, b) if a <= b else (b, a)


def factor_direct(
    n: int,
    design: Optional[DesignParams] = None,
    seed: int = 0,
    np_bits: Optional[int] = None,
    nq_bits: Optional[int] = None,
    G: int = 2,
    max_runs: int = 100_000,
    wall_budget: float = 120.0,
    budget: Optional[float] = None,
) -> FactorReport:
    """Compile the product model, restart the emulator until it converges, decode p and q."""
    n = int(n)
    check_composite(n)
    t0 = time.perf_counter()
    if n % 2 == 0:
        return FactorReport(n, "direct", seed, (2, n // 2), wall_time=time.perf_counter() - t0)
    dp, dq = direct_bit_split(n)
    model, layout = compile_direct(n, np_bits or dp, nq_bits or dq, G=G)
    res = solve(model, design, seed=seed, max_runs=max_runs, wall_budget=wall_budget, budget=budget)
    rep = FactorReport(n, "direct", seed, runs=res.n_runs, retries=max(0, res.n_runs - 1),
                       simulated_time=res.simulated_time)
    if res.solved:
        p, q = decode_direct(layout, model, res.assignment)
        if p * q != n or p in (1, n):
            raise AssertionError(f"decoded {p} * {q} is not a proper factorization of {n}")
        rep.factors = _ordered(p, q)
    else:
        rep.exhausted = True
    rep.wall_time = time.perf_counter() - t0
    return rep


@dataclass(frozen=True)
class CongruenceConfig:
    """Knobs of the relation-collection loop.

    ``k_windows`` lists the k bit widths cycled through subproblems;
    ``cutoff`` bounds the single large prime (default ``b**1.5``).
    """

    h: int = 8
    r: int = 2
    k_windows: Tuple[int, ...] = (2,)
    variant: str = "basic"
    cutoff: Optional[int] = None
    strategies: Tuple[str, ...] = XBAR_STRATEGIES
    seeds_per_subproblem: int = 32
    budget: float = 100.0  # simulated µs per run
    wall_budget: float = 600.0
    max_subproblems: Optional[int] = None
    full_collection: bool = False  # collect pi(b)+1 relations before extracting
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "k_windows", tuple(int(k) for k in self.k_windows))
        object.__setattr__(self, "strategies", tuple(self.strategies))
        if not self.k_windows or min(self.k_windows) < 1:
            raise ValueError("k_windows must be nonempty positive widths")
        bad = set(self.strategies) - set(XBAR_STRATEGIES)
        if bad or not self.strategies:
            raise ValueError(f"unknown xbar strategies {sorted(bad)}")
        if self.seeds_per_subproblem < 1 or self.budget <= 0 or self.wall_budget <= 0:
            raise ValueError("seeds_per_subproblem, budget and wall_budget must be positive")

    @property
    def b(self) -> int:
        return 1 << self.h

    @property
    def large_prime_cutoff(self) -> int:
        return self.cutoff if self.cutoff is not None else math.isqrt(self.b**3)

    @classmethod
    def from_dict(cls, d: dict) -> "CongruenceConfig":
        return cls(**d)


def _pending_primes(store: RelationStore) -> List[int]:
    return sorted(P for P, rels in store.partials.items() if len(rels) % 2 == 1)


def factor_congruence(
    n: int,
    config: CongruenceConfig = CongruenceConfig(),
    design: Optional[DesignParams] = None,
    seed: int = 0,
    store: Optional[RelationStore] = None,
    store_path: Optional[Union[str, Path]] = None,
) -> FactorReport:
    """Collect smooth congruences with the emulator until a dependency splits ``n``.

    Subproblems cycle through the x̄ strategies and k windows. Each compiled
    subproblem is run from ``seeds_per_subproblem`` initial conditions.
    The store is written to ``store_path`` after every subproblem, so an
    exhausted run can resume by passing the loaded store back in.
    """
    n = int(n)
    check_composite(n)
    t0 = time.perf_counter()
    rep = FactorReport(n, "congruence", seed, store_path=None if store_path is None else str(store_path))
    fb = build_factor_base(config.b)
    if store is None:
        store = RelationStore(n, fb, config.large_prime_cutoff)
    elif store.n != n:
        raise ValueError("store belongs to a different n")
    # a resumed store branches the streams so earlier subproblems are not replayed
    entropy = (seed, len(store.raw)) if store.raw else seed
    rng = random.Random(str(entropy))
    seed_stream = np.random.SeedSequence(entropy)
    target = fb.size + 1
    rejections: Counter = Counter()
    next_dep = 0
    schedule = itertools.cycle(itertools.product(config.strategies, config.k_windows))

    def try_dependencies() -> Optional[Tuple[int, int]]:
        nonlocal next_dep
        while next_dep < len(store.dependencies):
            fr = build_fermat(store.selection(store.dependencies[next_dep]), store)
            next_dep += 1
            rep.dependencies_tried += 1
            g = extract_factor(n, fr)
            if g:
                return _ordered(g, n // g)
        return None

    def finish(factors, exhausted):
        rep.factors = factors
        rep.exhausted = exhausted
        rep.relations = len(store.full)
        rep.partials = store.n_partials
        rep.rejections = dict(rejections)
        rep.wall_time = time.perf_counter() - t0
        if store_path is not None:
            store.save(store_path)
        return rep

    # a resumed store may already hold a usable dependency
    if not config.full_collection:
        found = try_dependencies()
        if found:
            return finish(found, False)

    subproblems = skipped = 0
    n_slots = len(config.strategies) * len(config.k_windows)
    while True:
        if time.perf_counter() - t0 > config.wall_budget:
            return finish(None, True)
        if config.max_subproblems is not None and subproblems >= config.max_subproblems:
            return finish(None, True)
        strategy, k_bits = next(schedule)
        params0 = CongruenceParams(n=n, h=config.h, k_bits=k_bits, r=config.r, variant=config.variant)
        pending = _pending_primes(store)
        try:
            if strategy == "large-prime-recycle" and not pending:
                raise ValueError("no pending large prime")
            xbar = choose_xbar(strategy, params0, rng, pending)
        except ValueError as exc:  # e.g. no odd square in a narrow window
            skipped += 1
            if skipped > 4 * n_slots:
                raise RuntimeError(f"no x̄ strategy applies to n={n}: {exc}") from exc
            continue
        skipped = 0
        model, layout = compile_congruence(params0.with_xbar(xbar))
        pre = presolve(model)
        circuit = build_circuit(pre.model, design)
        sub_seed = int(seed_stream.spawn(1)[0].generate_state(1)[0])
        outcomes = run_ensemble(circuit, n_runs=config.seeds_per_subproblem, seed=sub_seed,
                                budget=config.budget, n_jobs=config.n_jobs, max_records=16)
        subproblems += 1
        rep.retries = subproblems - 1
        for out in outcomes:
            rep.runs += 1
            rep.simulated_time += out.simulated_time
            if not out.converged:
                rejections["unconverged"] += 1
                continue
            rel = decode_congruence(layout, model, pre.expand(out.assignment.tolist()), fb, store.cutoff)
            if not rel:
                rejections[rel.reason] += 1
                continue
            store.add(rel)
        if store_path is not None:
            store.save(store_path)
        log.info("subproblem %d (%s, k_bits=%d): %d full, %d partial, rank %d",
                 subproblems, strategy, k_bits, len(store.full), store.n_partials, store.rank)
        if config.full_collection and len(store.full) < target:
            continue
        found = try_dependencies()
        if found:
            return finish(found, False)
