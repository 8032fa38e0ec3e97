"""Parallel-tempering search over design parameters.

Each chain proposes a Gaussian step in unit coordinates, scores it with one
short emulator run, and accepts on a neighbour-smoothed objective that
penalises spread and rewards a left-skewed score distribution.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from .emulator import DesignParams, build_circuit, default_design, run, run_ensemble
from .emulator.params import FamilyParams
from .ilp import IlpModel

log = logging.getLogger(__name__)

__all__ = [
    "ParamSpec",
    "ParamSpace",
    "ScoreSample",
    "TemperingConfig",
    "TemperingResult",
    "Candidate",
    "EmulatorScorer",
    "objective",
    "estimate_objective",
    "acceptance_probability",
    "swap_probability",
    "run_parallel_tempering",
    "postprocess_convergence",
    "continuation_warm_start",
    "default_space",
]

GLOBAL = ""  # family tag of parameters that are not per-family
_FAMILY_FIELDS = ("gain", "growth", "decay", "memory_init", "memory_cap", "speed")
_GLOBAL_FIELDS = ("drive_scale", "relax", "hysteresis", "growth_spread")


def objective(scores: Sequence[float]) -> float:
    """``mean - std + cbrt(third central moment)``; lower is better."""
    s = np.asarray(scores, dtype=float)
    if s.size == 0:
        raise ValueError("objective needs at least one score")
    mu = s.mean()
    d = s - mu
    var = np.mean(d * d)
    m3 = np.mean(d * d * d)
    if abs(m3) <= 1e-12 * var**1.5:
        m3 = 0.0  # rounding residue of a symmetric sample; cbrt would blow it up
    return float(mu - math.sqrt(var) + np.cbrt(m3))


@dataclass(frozen=True)
class ParamSpec:
    name: str
    family: str = GLOBAL
    lower: float = 0.0
    upper: float = 1.0
    scale: str = "linear"

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)) or self.lower >= self.upper:
            raise ValueError(f"{self.key}: bounds must be finite with lower < upper")
        if self.scale not in ("linear", "log"):
            raise ValueError("scale must be 'linear' or 'log'")
        if self.scale == "log" and self.lower <= 0:
            raise ValueError(f"{self.key}: log scale needs a positive lower bound")
        allowed = _GLOBAL_FIELDS if self.family == GLOBAL else _FAMILY_FIELDS
        if self.name not in allowed:
            raise ValueError(f"unknown parameter {self.name!r} for family {self.family!r}")

    @property
    def key(self) -> str:
        return f"{self.family}.{self.name}" if self.family else self.name

    def to_unit(self, value: float) -> float:
        value = min(max(value, self.lower), self.upper)
        if self.scale == "log":
            return math.log(value / self.lower) / math.log(self.upper / self.lower)
        return (value - self.lower) / (self.upper - self.lower)

    def from_unit(self, u: float) -> float:
        u = min(max(float(u), 0.0), 1.0)
        if self.scale == "log":
            return self.lower * (self.upper / self.lower) ** u
        return self.lower + u * (self.upper - self.lower)


@dataclass(frozen=True)
class ParamSpace:
    specs: Tuple[ParamSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple(self.specs))
        keys = [s.key for s in self.specs]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate parameter in space")

    def __len__(self):
        return len(self.specs)

    @property
    def families(self) -> Tuple[str, ...]:
        return tuple(dict.fromkeys(s.family for s in self.specs if s.family != GLOBAL))

    def encode(self, design: DesignParams) -> np.ndarray:
        out = np.empty(len(self.specs))
        for i, s in enumerate(self.specs):
            src = design if s.family == GLOBAL else design.family(s.family)
            out[i] = s.to_unit(getattr(src, s.name))
        return out

    def decode(self, u: Sequence[float], base: Optional[DesignParams] = None) -> DesignParams:
        base = base or default_design()
        fams: Dict[str, Dict[str, float]] = {}
        glob: Dict[str, float] = {}
        for s, x in zip(self.specs, u):
            val = s.from_unit(x)
            if s.family == GLOBAL:
                glob[s.name] = val
            else:
                fams.setdefault(s.family, {})[s.name] = val
        families = dict(base.families)
        for tag, ch in fams.items():
            cur = asdict(base.family(tag))
            cur.update(ch)
            if cur["memory_init"] > cur["memory_cap"]:
                cur["memory_init"] = cur["memory_cap"]
            families[tag] = FamilyParams(**cur)
        return base.replace(families=families, **glob)

    def midpoint(self) -> np.ndarray:
        return np.full(len(self.specs), 0.5)

    def to_dict(self) -> List[dict]:
        return [asdict(s) for s in self.specs]

    @classmethod
    def from_dict(cls, d: Sequence[dict]) -> "ParamSpace":
        return cls(tuple(ParamSpec(**x) for x in d))

    @classmethod
    def load(cls, path) -> "ParamSpace":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def default_space(model: IlpModel, include_globals: bool = True) -> ParamSpace:
    """Bounds around the shipped defaults for every family in ``model``."""
    var_fams = dict.fromkeys(v.family for v in model.variables)
    row_fams = dict.fromkeys(c.family for c in model.constraints)
    specs: List[ParamSpec] = []
    for tag in var_fams:
        specs.append(ParamSpec("speed", tag, 5.0, 1000.0, "log"))
    for tag in row_fams:
        specs += [
            ParamSpec("gain", tag, 0.1, 10.0, "log"),
            ParamSpec("growth", tag, 10.0, 5000.0, "log"),
            ParamSpec("decay", tag, 0.1, 500.0, "log"),
        ]
    if include_globals:
        specs += [
            ParamSpec("drive_scale", GLOBAL, 0.01, 3.0, "log"),
            ParamSpec("relax", GLOBAL, 0.1, 10.0, "log"),
            ParamSpec("hysteresis", GLOBAL, 0.0, 0.45, "linear"),
            ParamSpec("growth_spread", GLOBAL, 0.0, 0.95, "linear"),
        ]
    return ParamSpace(tuple(specs))


@dataclass
class ScoreSample:
    params: np.ndarray  # unit coordinates
    score: float
    converged: bool
    tts: Optional[float] = None
    chain: int = -1
    iteration: int = -1

    def __post_init__(self):
        self.params = np.array(self.params, dtype=float)  # copy: chain states are updated in place
        if self.converged and self.score != 0:
            raise ValueError("a converged sample must have score 0")

    def to_dict(self) -> dict:
        return {"params": self.params.tolist(), "score": self.score, "converged": self.converged,
                "tts": self.tts, "chain": self.chain, "iteration": self.iteration}

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreSample":
        return cls(**d)


def _knn_objective(X: np.ndarray, scores: np.ndarray, point, k: int, current: Optional[float]) -> float:
    picked = [] if current is None else [current]
    if len(X):
        d = np.linalg.norm(X - np.asarray(point, dtype=float), axis=1)
        if len(d) > k:
            part = np.argpartition(d, k - 1)[:k]
            nearest = part[np.lexsort((part, d[part]))]
        else:
            nearest = np.argsort(d, kind="stable")
        picked += scores[nearest].tolist()
    if not picked:
        raise ValueError("history is empty and no current sample was given")
    return objective(picked)


def estimate_objective(history: Sequence[ScoreSample], point: Sequence[float], k: int = 8,
                       current: Optional[ScoreSample] = None) -> float:
    """Objective over the ``k`` history samples nearest to ``point`` plus ``current``."""
    X = np.stack([h.params for h in history]) if history else np.empty((0, len(point)))
    scores = np.array([h.score for h in history])
    return _knn_objective(X, scores, point, k, None if current is None else current.score)


class _History:
    """Append-only sample list with nearest-neighbour lookup.

    A KD-tree covers the bulk of the samples and is rebuilt once the
    brute-force tail of newer samples grows past a quarter of it.
    """

    def __init__(self, dims: int, samples: Sequence[ScoreSample] = ()):
        self.samples: List[ScoreSample] = []
        self._X = np.empty((max(64, 2 * len(samples)), dims))
        self._s = np.empty(len(self._X))
        self._tree: Optional[cKDTree] = None
        self._tree_n = 0
        for smp in samples:
            self.append(smp)

    def append(self, smp: ScoreSample) -> None:
        n = len(self.samples)
        if n == len(self._X):
            self._X = np.concatenate([self._X, np.empty_like(self._X)])
            self._s = np.concatenate([self._s, np.empty_like(self._s)])
        self._X[n] = smp.params
        self._s[n] = smp.score
        self.samples.append(smp)

    def _nearest(self, point: np.ndarray, k: int) -> np.ndarray:
        n = len(self.samples)
        if n - self._tree_n > max(256, self._tree_n // 4):
            self._tree = cKDTree(self._X[:n].copy())
            self._tree_n = n
        idx = np.arange(self._tree_n, n)
        dist = np.linalg.norm(self._X[self._tree_n:n] - point, axis=1)
        if self._tree_n:
            td, ti = self._tree.query(point, k=min(k, self._tree_n))
            idx = np.concatenate([np.atleast_1d(ti), idx])
            dist = np.concatenate([np.atleast_1d(td), dist])
        return idx[np.lexsort((idx, dist))[:k]]

    def estimate(self, point, k: int, current: Optional[float] = None) -> float:
        picked = [] if current is None else [current]
        if self.samples:
            picked += self._s[self._nearest(np.asarray(point, dtype=float), k)].tolist()
        if not picked:
            raise ValueError("history is empty and no current sample was given")
        return objective(picked)


def acceptance_probability(delta: float, temperature: float) -> float:
    """Metropolis rule ``min(1, exp(-delta / T))``."""
    if delta <= 0:
        return 1.0
    if temperature <= 0:
        return 0.0
    return math.exp(-delta / temperature)


def swap_probability(obj_i: float, obj_j: float, t_i: float, t_j: float) -> float:
    """Replica-exchange rule ``min(1, exp((obj_i - obj_j) (1/T_i - 1/T_j)))``."""
    if t_i == t_j:
        return 1.0
    x = (obj_i - obj_j) * (1.0 / t_i - 1.0 / t_j)
    return 1.0 if x >= 0 else math.exp(x)


@dataclass(frozen=True)
class TemperingConfig:
    routines: int = 2
    chains_per_routine: int = 10
    iterations: int = 500
    t_min: float = 0.01
    t_max: float = 1.0
    short_budget: float = 20.0  # simulated µs per scoring run
    step_size: float = 0.08  # proposal std in unit coordinates
    swap_every: int = 5
    k_neighbors: int = 8

    def __post_init__(self):
        if self.chains_per_routine < 2:
            raise ValueError("need at least 2 chains per routine")
        if not 0 < self.t_min < self.t_max:
            raise ValueError("need 0 < t_min < t_max")
        if self.routines < 1 or self.iterations < 0 or self.swap_every < 1 or self.k_neighbors < 1:
            raise ValueError("routines, swap_every and k_neighbors must be >= 1")

    def ladder(self) -> np.ndarray:
        return np.geomspace(self.t_min, self.t_max, self.chains_per_routine)

    @classmethod
    def from_dict(cls, d: dict) -> "TemperingConfig":
        return cls(**d)


Scorer = Callable[[np.ndarray, int], Union[float, Tuple[float, bool, Optional[float]]]]


class EmulatorScorer:
    """Score = lowest summed normalized gap seen during one short run."""

    def __init__(self, model: IlpModel, space: ParamSpace, base: Optional[DesignParams] = None,
                 budget: float = 20.0):
        self.model, self.space, self.budget = model, space, budget
        self.base = base or default_design()

    def __call__(self, u: np.ndarray, seed: int):
        c = build_circuit(self.model, self.space.decode(u, self.base))
        out = run(c, seed, self.budget)
        if out.converged:
            return 0.0, True, out.tts
        return out.best_score, False, None


@dataclass
class Candidate:
    params: np.ndarray
    estimate: float
    design: Optional[DesignParams] = None
    probability: Optional[float] = None
    mean_tts: Optional[float] = None


@dataclass
class TemperingResult:
    candidates: List[Candidate]
    samples: List[ScoreSample]
    states: np.ndarray  # (routines, chains, dims)
    objectives: np.ndarray  # (routines, chains)
    temperatures: np.ndarray
    iteration: int
    accept_rate: float
    swap_rate: float
    best_trace: List[float] = field(default_factory=list)


def _as_triple(res) -> Tuple[float, bool, Optional[float]]:
    if isinstance(res, tuple):
        score, conv, tts = res
        return float(score), bool(conv), tts
    return float(res), float(res) == 0.0, None


def _checkpoint(path, cfg, space, samples, states, objs, rng, it, best_trace, counts):
    doc = {
        "config": asdict(cfg),
        "space": space.to_dict(),
        "iteration": it,
        "samples": [s.to_dict() for s in samples],
        "states": states.tolist(),
        "objectives": objs.tolist(),
        "rng": rng.bit_generator.state,
        "best_trace": best_trace,
        "counts": counts,
    }
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(json.dumps(doc), encoding="utf-8")
    tmp.replace(path)


def run_parallel_tempering(
    scorer: Union[IlpModel, Scorer],
    space: ParamSpace,
    cfg: TemperingConfig = TemperingConfig(),
    seed=0,
    base: Optional[DesignParams] = None,
    initial: Optional[np.ndarray] = None,
    checkpoint: Optional[Union[str, Path]] = None,
    resume: bool = False,
    n_candidates: int = 10,
    checkpoint_every: int = 10,
) -> TemperingResult:
    """Metropolis-Hastings chains on a geometric temperature ladder with replica swaps.

    ``scorer`` is a model (scored by short emulator runs) or any callable
    ``(unit_point, seed) -> score`` or ``-> (score, converged, tts)``.
    ``initial`` optionally gives starting points, shape ``(chains,)+dims`` or
    ``(routines, chains, dims)``; otherwise chains start at random points.
    """
    if isinstance(scorer, IlpModel):
        scorer = EmulatorScorer(scorer, space, base, cfg.short_budget)
    R, C, D = cfg.routines, cfg.chains_per_routine, len(space)
    temps = cfg.ladder()
    rng = np.random.default_rng(seed)
    hist = _History(D)
    best_trace: List[float] = []
    counts = {"accept": 0, "proposed": 0, "swap_accept": 0, "swap_tried": 0}
    start = 0

    if resume and checkpoint and Path(checkpoint).exists():
        doc = json.loads(Path(checkpoint).read_text(encoding="utf-8"))
        hist = _History(D, [ScoreSample.from_dict(s) for s in doc["samples"]])
        states = np.asarray(doc["states"], dtype=float)
        objs = np.asarray(doc["objectives"], dtype=float)
        rng.bit_generator.state = doc["rng"]
        start = int(doc["iteration"])
        best_trace = list(doc["best_trace"])
        counts = doc["counts"]
    else:
        if initial is not None:
            init = np.asarray(initial, dtype=float)
            if init.ndim not in (2, 3):
                raise ValueError("initial must have shape (chains, dims) or (routines, chains, dims)")
            states = np.array(np.broadcast_to(init, (R, C, D)))
        else:
            states = rng.random((R, C, D))
        states = np.clip(states, 0.0, 1.0)
        objs = np.empty((R, C))
        for r in range(R):
            for c in range(C):
                s = ScoreSample(states[r, c], *_as_triple(scorer(states[r, c], int(rng.integers(2**62)))),
                                chain=r * C + c, iteration=0)
                hist.append(s)
        for r in range(R):
            for c in range(C):
                objs[r, c] = hist.estimate(states[r, c], cfg.k_neighbors)

    for it in range(start, cfg.iterations):
        for r in range(R):
            for c in range(C):
                prop = np.clip(states[r, c] + cfg.step_size * rng.standard_normal(D), 0.0, 1.0)
                cur = ScoreSample(prop, *_as_triple(scorer(prop, int(rng.integers(2**62)))),
                                  chain=r * C + c, iteration=it + 1)
                new_obj = hist.estimate(prop, cfg.k_neighbors, current=cur.score)
                hist.append(cur)
                old_obj = hist.estimate(states[r, c], cfg.k_neighbors)
                counts["proposed"] += 1
                if rng.random() < acceptance_probability(new_obj - old_obj, temps[c]):
                    states[r, c], objs[r, c] = prop, new_obj
                    counts["accept"] += 1
                else:
                    objs[r, c] = old_obj
            if (it + 1) % cfg.swap_every == 0:
                for c in range(C - 1):
                    counts["swap_tried"] += 1
                    if rng.random() < swap_probability(objs[r, c], objs[r, c + 1], temps[c], temps[c + 1]):
                        states[r, [c, c + 1]] = states[r, [c + 1, c]]
                        objs[r, [c, c + 1]] = objs[r, [c + 1, c]]
                        counts["swap_accept"] += 1
        best_trace.append(float(objs.min()))
        if checkpoint and ((it + 1) % checkpoint_every == 0 or it + 1 == cfg.iterations):
            _checkpoint(checkpoint, cfg, space, hist.samples, states, objs, rng, it + 1, best_trace, counts)

    # rank distinct sampled points by their neighbourhood estimate
    samples = hist.samples
    pts = np.unique(np.stack([s.params for s in samples]), axis=0)
    est = np.array([hist.estimate(p, cfg.k_neighbors) for p in pts])
    order = np.argsort(est, kind="stable")[:n_candidates]
    cands = [Candidate(pts[i], float(est[i]), space.decode(pts[i], base) if isinstance(scorer, EmulatorScorer) else None)
             for i in order]
    return TemperingResult(
        candidates=cands, samples=samples, states=states, objectives=objs, temperatures=temps,
        iteration=max(start, cfg.iterations), best_trace=best_trace,
        accept_rate=counts["accept"] / max(1, counts["proposed"]),
        swap_rate=counts["swap_accept"] / max(1, counts["swap_tried"]),
    )


def postprocess_convergence(candidates: Sequence[Union[Candidate, DesignParams]], model: IlpModel,
                            n_ics: int = 100, budget: float = 100.0, seed=0) -> List[Candidate]:
    """Converged fraction per candidate over ``n_ics`` initial conditions.

    Candidates come back sorted by probability (descending) then mean TTS.
    """
    if n_ics < 1:
        raise ValueError("n_ics must be >= 1")
    out: List[Candidate] = []
    for c in candidates:
        cand = c if isinstance(c, Candidate) else Candidate(np.empty(0), float("nan"), c)
        if cand.design is None:
            raise ValueError("candidate has no decoded design")
        outs = run_ensemble(model, cand.design, n_ics, seed, budget)
        tts = [o.tts for o in outs if o.converged]
        cand.probability = len(tts) / n_ics
        cand.mean_tts = float(np.mean(tts)) if tts else math.inf
        out.append(cand)
    out.sort(key=lambda c: (-c.probability, c.mean_tts))
    return out


def continuation_warm_start(designs: Sequence[DesignParams], space: ParamSpace, n_chains: int,
                            seed=0, jitter: float = 0.03) -> np.ndarray:
    """Starting points at a new size from designs tuned at a smaller one.

    Parameters of families known to the old designs are copied; the rest
    start at the middle of their range. Each chain gets a jittered copy of
    one design (round-robin). Without any shared family the chains start at
    random points.
    """
    rng = np.random.default_rng(seed)
    if not designs:
        raise ValueError("need at least one design")
    known = set().union(*(d.families for d in designs))
    shared = known & set(space.families)
    if not shared and space.families:
        log.warning("no family in common with the previous designs; random initialization")
        return rng.random((n_chains, len(space)))
    pts = []
    for d in designs:
        u = space.midpoint()
        for i, s in enumerate(space.specs):
            if s.family == GLOBAL or s.family in d.families:
                src = d if s.family == GLOBAL else d.family(s.family)
                u[i] = s.to_unit(getattr(src, s.name))
        pts.append(u)
    base = np.stack([pts[i % len(pts)] for i in range(n_chains)])
    return np.clip(base + jitter * rng.standard_normal(base.shape), 0.0, 1.0)
