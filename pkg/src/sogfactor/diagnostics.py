"""Statistics over emulator ensembles.

Time-to-solution distributions and gamma fits, a convergence verdict,
threshold-crossing trains with their cross-correlations, and summaries of
the fewest unsatisfied units each run reached.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from scipy import special, stats

from .ilp import IlpModel

__all__ = [
    "TtsDistribution",
    "GammaFit",
    "Verdict",
    "CorrelationResult",
    "UnsatSummary",
    "tts_distribution",
    "fit_gamma",
    "dissipativeness_verdict",
    "threshold_crossings",
    "correlation",
    "direct_correlation",
    "unsat_summary",
    "select_probe_pairs",
    "write_histogram_csv",
    "write_correlation_csv",
    "write_json",
]

POINT_DISSIPATIVE = "point-dissipative"
NOT_DISSIPATIVE = "not point-dissipative"
INCONCLUSIVE = "inconclusive"


@dataclass
class TtsDistribution:
    samples: np.ndarray  # converged runs only, simulated µs
    convergence_fraction: float
    n_runs: int

    def histogram(self, bins=20) -> Tuple[np.ndarray, np.ndarray]:
        return np.histogram(self.samples, bins=bins)


def tts_distribution(outcomes) -> TtsDistribution:
    tts = np.array([o.tts for o in outcomes if o.converged], dtype=float)
    n = len(outcomes)
    return TtsDistribution(tts, len(tts) / n if n else 0.0, n)


@dataclass(frozen=True)
class GammaFit:
    shape: float
    scale: float
    ks_statistic: float
    n: int
    wide_tolerance: bool  # fewer samples than the reliable minimum

    def cdf(self, x):
        return stats.gamma.cdf(x, self.shape, scale=self.scale)

    def pdf(self, x):
        return stats.gamma.pdf(x, self.shape, scale=self.scale)


def fit_gamma(samples: Sequence[float], min_samples: int = 30, tol: float = 1e-12,
              max_iter: int = 100) -> GammaFit:
    """Maximum-likelihood gamma fit (Newton on the digamma equation) plus KS distance.

    Fewer than ``min_samples`` values still give a fit, flagged ``wide_tolerance``.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or len(x) < 2:
        raise ValueError("need at least two samples")
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite and positive")
    if np.ptp(x) == 0:
        raise ValueError("degenerate sample: all values are equal")
    mean = x.mean()
    s = math.log(mean) - np.log(x).mean()
    k = (3 - s + math.sqrt((s - 3) ** 2 + 24 * s)) / (12 * s)
    for _ in range(max_iter):
        f = math.log(k) - special.digamma(k) - s
        fp = 1 / k - special.polygamma(1, k)
        step = f / fp
        k_new = k - step
        if k_new <= 0:
            k_new = k / 2
        if abs(k_new - k) <= tol * k:
            k = k_new
            break
        k = k_new
    theta = mean / k
    ks = stats.kstest(x, "gamma", args=(k, 0, theta)).statistic
    return GammaFit(float(k), float(theta), float(ks), len(x), len(x) < min_samples)


@dataclass(frozen=True)
class Verdict:
    label: str
    convergence_fraction: float
    n_runs: int
    fit: Optional[GammaFit] = None
    reason: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        return d


def dissipativeness_verdict(ensemble, ks_threshold: float = 0.05, min_runs: int = 30) -> Verdict:
    """Classify an ensemble run at full budget.

    Point-dissipative: every run converged and the TTS sample is gamma-like
    (KS distance at most ``ks_threshold``). Not point-dissipative: some run
    timed out. Inconclusive: too few runs, or full convergence with a poor
    gamma fit.
    """
    n = len(ensemble)
    tts = [o.tts for o in ensemble if o.converged]
    frac = len(tts) / n if n else 0.0
    if n < min_runs:
        return Verdict(INCONCLUSIVE, frac, n, None, f"{n} runs < minimum {min_runs}")
    if len(tts) < n:
        return Verdict(NOT_DISSIPATIVE, frac, n, None, f"{n - len(tts)} of {n} runs timed out")
    try:
        fit = fit_gamma(tts)
    except ValueError as exc:
        return Verdict(INCONCLUSIVE, frac, n, None, f"gamma fit failed: {exc}")
    if fit.ks_statistic <= ks_threshold:
        return Verdict(POINT_DISSIPATIVE, frac, n, fit, "all runs converged, gamma-distributed TTS")
    return Verdict(INCONCLUSIVE, frac, n, fit, f"KS {fit.ks_statistic:.3g} > {ks_threshold}")


def threshold_crossings(trajectory: Sequence[float], th: float = 0.5, lag: int = 1) -> np.ndarray:
    """1 where the signal sits on opposite sides of ``th`` at ``t - lag`` and ``t``."""
    x = np.asarray(trajectory, dtype=float)
    if lag < 1:
        raise ValueError("lag must be >= 1 sample")
    out = np.zeros(len(x), dtype=np.int8)
    if len(x) > lag:
        a, b = x[:-lag], x[lag:]
        out[lag:] = (np.maximum(a, b) > th) & (np.minimum(a, b) < th)
    return out


@dataclass
class CorrelationResult:
    taus: np.ndarray  # lag in samples, from -(N-1) to N-1
    C: np.ndarray
    R: np.ndarray
    C_filtered: np.ndarray
    pair: Tuple[int, int] = (-1, -1)

    def at(self, tau: int) -> float:
        return float(self.C[tau - self.taus[0]])


def _xcorr_fft(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = len(a)
    size = 1 << (2 * n - 1).bit_length()
    fa = np.fft.rfft(a, size)
    fb = np.fft.rfft(b, size)
    raw = np.fft.irfft(np.conj(fa) * fb, size)
    # raw[t] = sum_s a[s] b[s + t] for t >= 0, negative lags wrap to the end
    return np.concatenate([raw[size - (n - 1):], raw[:n]])


def direct_correlation(a: Sequence[float], b: Sequence[float]) -> np.ndarray:
    """``R(tau) = sum_t a[t] b[t + tau]`` by explicit summation (reference)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = len(a)
    out = np.empty(2 * n - 1)
    for i, tau in enumerate(range(-(n - 1), n)):
        if tau >= 0:
            out[i] = np.dot(a[: n - tau], b[tau:])
        else:
            out[i] = np.dot(a[-tau:], b[: n + tau])
    return out


def _baseline(taus: np.ndarray, C: np.ndarray, degree: int, central_window: int) -> np.ndarray:
    # raw trains overlap less at large lags, so even unrelated trains show a
    # baseline shaped like (N - |tau|); fit it in |tau| away from the centre
    lag = np.abs(taus).astype(float)
    tails = lag > central_window
    if tails.sum() <= degree + 1:
        return np.zeros_like(C)
    fit = Polynomial.fit(lag[tails], C[tails], degree)
    return fit(lag)


def correlation(train_a: Sequence[float], train_b: Sequence[float], pair: Tuple[int, int] = (-1, -1),
                baseline_degree: int = 3, central_window: Optional[int] = None) -> CorrelationResult:
    """Normalized cross-correlation of two equally long trains via FFT.

    ``C(tau) = R_ab(tau) / sqrt(R_aa(0) R_bb(0))`` with
    ``R_ab(tau) = sum_t a[t] b[t + tau]``; all zero when either train is
    silent. ``C_filtered`` subtracts a polynomial in ``|tau|`` fitted outside
    ``central_window`` lags (default ``max(10, N // 100)``).
    """
    a = np.asarray(train_a, dtype=float)
    b = np.asarray(train_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("trains must be one-dimensional and equally long")
    n = len(a)
    taus = np.arange(-(n - 1), n)
    if n == 0:
        empty = np.zeros(0)
        return CorrelationResult(taus, empty, empty, empty, pair)
    R = _xcorr_fft(a, b)
    if np.array_equal(a, np.round(a)) and np.array_equal(b, np.round(b)):
        R = np.rint(R)  # integer trains have integer correlations
    ea, eb = float(np.dot(a, a)), float(np.dot(b, b))
    if ea == 0 or eb == 0:
        C = np.zeros_like(R)
    else:
        C = np.clip(R / math.sqrt(ea * eb), -1.0, 1.0)
    window = max(10, n // 100) if central_window is None else int(central_window)
    Cf = np.clip(C - _baseline(taus, C, baseline_degree, window), -1.0, 1.0)
    return CorrelationResult(taus, C, R, Cf, pair)


@dataclass
class UnsatSummary:
    minima: np.ndarray
    histogram: np.ndarray  # histogram[m] = runs whose minimum is m
    peaks: Tuple[int, ...]

    @property
    def bimodal(self) -> bool:
        return len(self.peaks) >= 2


def _peaks(h: np.ndarray, floor: float = 0.15) -> Tuple[int, ...]:
    """Local maxima separated by a dip below half the smaller peak.

    Maxima lower than ``floor`` times the tallest bin are treated as noise.
    """
    least = max(1.0, floor * float(h.max())) if len(h) else 1.0
    cand = [i for i in range(len(h)) if h[i] >= least
            and (i == 0 or h[i] >= h[i - 1]) and (i == len(h) - 1 or h[i] > h[i + 1])]
    kept: List[int] = []
    for i in cand:
        if kept:
            j = kept[-1]
            valley = h[j:i + 1].min()
            if valley >= min(h[i], h[j]) / 2:
                if h[i] > h[j]:
                    kept[-1] = i
                continue
        kept.append(i)
    return tuple(kept)


def unsat_summary(outcomes) -> UnsatSummary:
    """Per-run minimum of the unsatisfied-unit count and its histogram."""
    minima = np.array([o.min_unsat if hasattr(o, "min_unsat") else int(np.min(o.unsat)) for o in outcomes],
                      dtype=int)
    hist = np.bincount(minima) if len(minima) else np.zeros(1, dtype=int)
    return UnsatSummary(minima, hist, _peaks(hist))


def select_probe_pairs(model: IlpModel, n_pairs: int = 4, seed=0) -> Dict[str, List[Tuple[int, int]]]:
    """Variable pairs that share a row ("adjacent") and pairs that share none ("non-local")."""
    rng = np.random.default_rng(seed)
    neighbours: Dict[int, set] = {v.index: set() for v in model.variables}
    for con in model.constraints:
        idx = [v.index for _, v in con.terms]
        for i in idx:
            neighbours[i].update(idx)
    adjacent, nonlocal_ = [], []
    order = rng.permutation(model.n_vars)
    for i in order:
        others = sorted(neighbours[int(i)] - {int(i)})
        if others and len(adjacent) < n_pairs:
            adjacent.append((int(i), int(rng.choice(others))))
        far = sorted(set(range(model.n_vars)) - neighbours[int(i)] - {int(i)})
        if far and len(nonlocal_) < n_pairs:
            nonlocal_.append((int(i), int(rng.choice(far))))
        if len(adjacent) >= n_pairs and len(nonlocal_) >= n_pairs:
            break
    return {"adjacent": adjacent, "non-local": nonlocal_}


def write_histogram_csv(path, samples: Sequence[float], bins=20, fit: Optional[GammaFit] = None) -> Path:
    """Columns ``bin_left,bin_right,count,density`` plus ``gamma_density`` when a fit is given."""
    counts, edges = np.histogram(np.asarray(samples, dtype=float), bins=bins)
    widths = np.diff(edges)
    total = counts.sum()
    dens = counts / (total * widths) if total else np.zeros_like(widths)
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_left", "bin_right", "count", "density"] + (["gamma_density"] if fit else []))
        for i in range(len(counts)):
            row = [repr(float(edges[i])), repr(float(edges[i + 1])), int(counts[i]), repr(float(dens[i]))]
            if fit:
                row.append(repr(float(fit.pdf(0.5 * (edges[i] + edges[i + 1])))))
            w.writerow(row)
    return path


def write_correlation_csv(path, result: CorrelationResult) -> Path:
    """Columns ``tau,C_raw,C_filtered``."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "C_raw", "C_filtered"])
        for t, c, f in zip(result.taus, result.C, result.C_filtered):
            w.writerow([int(t), repr(float(c) + 0.0), repr(float(f) + 0.0)])
    return path


def write_json(path, payload) -> Path:
    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.integer, np.floating)):
            return o.item()
        raise TypeError(f"cannot serialize {type(o).__name__}")

    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=default) + "\n", encoding="utf-8")
    return path
