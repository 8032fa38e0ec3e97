"""Runs, ensembles and restart loops on top of the integrator."""
from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.base import BaseEstimator

from ..ilp import IlpModel, evaluate, presolve
from .circuit import Circuit, build_circuit
from .dynamics import integrate
from .params import DesignParams, default_design

log = logging.getLogger(__name__)

__all__ = [
    "RunOutcome",
    "SolveResult",
    "SOGSolver",
    "convergence_fraction",
    "derive_seeds",
    "run",
    "run_ensemble",
    "solve",
    "write_trajectory_csv",
]


@dataclass
class RunOutcome:
    """Result of one emulation from one random initial condition."""

    converged: bool
    tts: Optional[float]  # simulated µs, only when converged
    simulated_time: float
    wall_time: float
    assignment: np.ndarray
    times: np.ndarray  # check times, µs
    unsat: np.ndarray  # unsatisfied unit count at each check
    score: np.ndarray  # summed normalized gaps at each check
    probe_voltages: np.ndarray  # shape (n_checks, n_probes)
    probes: Tuple[int, ...] = ()
    steps: int = 0
    seed: Optional[int] = None

    @property
    def unsat_trace(self) -> List[Tuple[float, int]]:
        return list(zip(self.times.tolist(), self.unsat.tolist()))

    @property
    def min_unsat(self) -> int:
        return int(self.unsat.min()) if len(self.unsat) else 0

    @property
    def best_score(self) -> float:
        return float(self.score.min()) if len(self.score) else 0.0


def run(circuit: Circuit, seed=None, budget: Optional[float] = None,
        max_records: Optional[int] = None) -> RunOutcome:
    """Reset ``circuit`` from ``seed`` and integrate until satisfied or out of budget.

    ``budget`` is in simulated µs and defaults to ``params.time_budget``.
    The readout is checked against the model with exact integer arithmetic
    before convergence is reported.
    """
    p = circuit.params
    budget = p.time_budget if budget is None else budget
    n_steps = int(round(budget / p.dt))
    circuit.reset(seed)
    t0 = time.perf_counter()
    steps, conv, ts, tu, tsc, pv, _ = integrate(circuit, n_steps, max_records=max_records)
    wall = time.perf_counter() - t0
    bits = circuit.assignment()
    if conv and not evaluate(circuit.model, bits).satisfied:
        log.error("latched readout disagrees with exact evaluation; reporting unconverged")
        conv = False
    return RunOutcome(
        converged=bool(conv),
        tts=circuit.time if conv else None,
        simulated_time=circuit.time,
        wall_time=wall,
        assignment=bits,
        times=ts * p.dt,
        unsat=tu,
        score=tsc,
        probe_voltages=pv,
        probes=circuit.probes,
        steps=int(steps),
        seed=None if seed is None else int(seed),
    )


def derive_seeds(seed, n: int) -> List[int]:
    """``n`` independent 63-bit seeds from one master seed."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1, np.uint64)[0] >> np.uint64(1)) for c in children]


def _as_circuit(model_or_circuit, params) -> Circuit:
    if isinstance(model_or_circuit, Circuit):
        return model_or_circuit
    return build_circuit(model_or_circuit, params)


def run_ensemble(
    model: Union[IlpModel, Circuit],
    params: Optional[DesignParams] = None,
    n_runs: int = 100,
    seed=0,
    budget: Optional[float] = None,
    n_jobs: int = 1,
    max_records: Optional[int] = None,
) -> List[RunOutcome]:
    """Independent runs with seeds derived from ``seed``; results in seed order."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    base = _as_circuit(model, params)
    seeds = derive_seeds(seed, n_runs)

    def one(s):
        return run(base.copy(), s, budget, max_records)

    if n_jobs == 1:
        return [one(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(one, seeds))


def convergence_fraction(outcomes: Sequence[RunOutcome]) -> float:
    if not outcomes:
        return 0.0
    return sum(o.converged for o in outcomes) / len(outcomes)


@dataclass
class SolveResult:
    """Outcome of a restart loop on a (presolved) model."""

    solved: bool
    assignment: Optional[List[int]]  # over the original model's variables
    outcomes: List[RunOutcome] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def n_runs(self) -> int:
        return len(self.outcomes)

    @property
    def simulated_time(self) -> float:
        """Total simulated µs over every run, including failed ones."""
        return float(sum(o.simulated_time for o in self.outcomes))


def solve(
    model: IlpModel,
    params: Optional[DesignParams] = None,
    seed=0,
    max_runs: int = 1000,
    wall_budget: float = 120.0,
    budget: Optional[float] = None,
    use_presolve: bool = True,
) -> SolveResult:
    """Restart from fresh random initial conditions until one run converges.

    Stops after ``max_runs`` runs or once ``wall_budget`` seconds have passed.
    """
    t0 = time.perf_counter()
    pre = presolve(model) if use_presolve else None
    reduced = pre.model if pre else model
    circuit = build_circuit(reduced, params)
    outcomes: List[RunOutcome] = []
    for s in derive_seeds(seed, max_runs):
        out = run(circuit, s, budget, max_records=4096)
        outcomes.append(out)
        if out.converged:
            bits = out.assignment.tolist()
            full = pre.expand(bits) if pre else bits
            if not evaluate(model, full).satisfied:
                raise RuntimeError("expanded assignment fails the original model")
            return SolveResult(True, full, outcomes, time.perf_counter() - t0)
        if time.perf_counter() - t0 > wall_budget:
            break
    return SolveResult(False, None, outcomes, time.perf_counter() - t0)


def write_trajectory_csv(outcome: RunOutcome, path, names: Optional[Sequence[str]] = None) -> Path:
    """CSV with columns ``time_us``, one per probe, then ``unsat``."""
    names = list(names) if names is not None else [f"v{j}" for j in outcome.probes]
    if len(names) != outcome.probe_voltages.shape[1]:
        raise ValueError("one column name per probe is required")
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["time_us", *names, "unsat"])
        for t, row, u in zip(outcome.times, outcome.probe_voltages, outcome.unsat):
            w.writerow([repr(float(t)), *(repr(float(x)) for x in row), int(u)])
    return path


class SOGSolver(BaseEstimator):
    """Estimator-style wrapper: ``fit(model)`` searches for a satisfying assignment.

    After fitting, ``assignment_`` holds the bits over the original model (or
    ``None``), ``solved_`` the verdict and ``outcomes_`` every run attempted.
    """

    def __init__(self, design: Optional[DesignParams] = None, seed: int = 0, max_runs: int = 1000,
                 wall_budget: float = 120.0, time_budget: Optional[float] = None,
                 use_presolve: bool = True):
        self.design = design
        self.seed = seed
        self.max_runs = max_runs
        self.wall_budget = wall_budget
        self.time_budget = time_budget
        self.use_presolve = use_presolve

    def fit(self, model: IlpModel, y=None) -> "SOGSolver":
        if not isinstance(model, IlpModel):
            raise TypeError("SOGSolver.fit expects an IlpModel")
        if self.max_runs < 1:
            raise ValueError("max_runs must be >= 1")
        res = solve(model, self.design or default_design(), self.seed, self.max_runs,
                    self.wall_budget, self.time_budget, self.use_presolve)
        self.model_ = model
        self.solved_ = res.solved
        self.assignment_ = res.assignment
        self.outcomes_ = res.outcomes
        self.n_runs_ = res.n_runs
        self.wall_time_ = res.wall_time
        return self

    def predict(self, model: Optional[IlpModel] = None):
        """Satisfying assignment found by ``fit`` (refits when given a different model)."""
        if model is not None and model is not getattr(self, "model_", None):
            self.fit(model)
        if not hasattr(self, "solved_"):
            raise AttributeError("SOGSolver is not fitted yet")
        return None if self.assignment_ is None else np.asarray(self.assignment_, dtype=np.int8)
