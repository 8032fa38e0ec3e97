import csv
import json
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sogfactor.diagnostics import (
    INCONCLUSIVE,
    NOT_DISSIPATIVE,
    POINT_DISSIPATIVE,
    correlation,
    direct_correlation,
    dissipativeness_verdict,
    fit_gamma,
    select_probe_pairs,
    threshold_crossings,
    tts_distribution,
    unsat_summary,
    write_correlation_csv,
    write_histogram_csv,
    write_json,
)
from sogfactor.models import compile_direct


def _outcomes(tts, n_timeouts=0):
    conv = [SimpleNamespace(converged=True, tts=float(t)) for t in tts]
    return conv + [SimpleNamespace(converged=False, tts=None) for _ in range(n_timeouts)]


@pytest.mark.parametrize("shape", [0.5, 1.0, 2.0, 5.0])
def test_gamma_mle_recovers_planted_parameters(shape):
    rng = np.random.default_rng(int(shape * 10))
    x = rng.gamma(shape, 3.0, 10_000)
    fit = fit_gamma(x)
    assert fit.shape == pytest.approx(shape, rel=0.05)
    assert fit.scale == pytest.approx(3.0, rel=0.05)
    assert fit.ks_statistic < 0.02 and not fit.wide_tolerance


def test_gamma_fit_small_and_bad_samples():
    rng = np.random.default_rng(0)
    assert fit_gamma(rng.gamma(2.0, 1.0, 10)).wide_tolerance
    for bad in ([1.0], [1.0, -2.0], [2.0, 2.0, 2.0]):
        with pytest.raises(ValueError):
            fit_gamma(bad)


def test_gamma_cdf_pdf_agree():
    fit = fit_gamma(np.random.default_rng(1).gamma(3.0, 2.0, 2000))
    grid = np.linspace(0.01, 30, 3001)
    area = np.trapezoid(fit.pdf(grid), grid) if hasattr(np, "trapezoid") else np.trapz(fit.pdf(grid), grid)
    assert area == pytest.approx(fit.cdf(30.0) - fit.cdf(0.01), abs=1e-4)


def test_verdict_point_dissipative_for_full_gamma_ensemble():
    tts = np.random.default_rng(2).gamma(2.0, 5.0, 200)
    v = dissipativeness_verdict(_outcomes(tts))
    assert v.label == POINT_DISSIPATIVE and v.convergence_fraction == 1.0
    assert v.fit is not None and v.to_dict()["label"] == POINT_DISSIPATIVE


def test_verdict_not_dissipative_at_42_percent():
    tts = np.random.default_rng(3).gamma(2.0, 5.0, 42)
    v = dissipativeness_verdict(_outcomes(tts, n_timeouts=58))
    assert v.label == NOT_DISSIPATIVE and v.convergence_fraction == pytest.approx(0.42)


def test_verdict_inconclusive_cases():
    assert dissipativeness_verdict(_outcomes([1, 2, 3, 4, 5])).label == INCONCLUSIVE
    # everything converged but the times are nowhere near gamma shaped
    bimodal = np.r_[np.full(50, 1.0), np.full(50, 100.0)] + np.random.default_rng(4).random(100) * 1e-3
    assert dissipativeness_verdict(_outcomes(bimodal)).label == INCONCLUSIVE


def test_tts_distribution():
    d = tts_distribution(_outcomes([1.0, 2.0, 3.0], n_timeouts=1))
    assert d.convergence_fraction == 0.75 and d.n_runs == 4
    assert d.samples.tolist() == [1.0, 2.0, 3.0]
    counts, _ = d.histogram(3)
    assert counts.sum() == 3


def test_threshold_crossings():
    tr = [0.1, 0.9, 0.8, 0.2, 0.2, 0.7]
    assert threshold_crossings(tr).tolist() == [0, 1, 0, 1, 0, 1]
    assert threshold_crossings(tr, lag=2).tolist() == [0, 0, 1, 1, 1, 1]
    with pytest.raises(ValueError):
        threshold_crossings(tr, lag=0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=2, max_size=80), st.data())
def test_correlation_identities(a, data):
    b = data.draw(st.lists(st.integers(0, 1), min_size=len(a), max_size=len(a)))
    ab = correlation(a, b)
    ba = correlation(b, a)
    assert np.allclose(ab.C, ba.C[::-1], atol=1e-12, rtol=0)
    assert np.array_equal(ab.R, direct_correlation(a, b))
    if any(a):
        assert correlation(a, a).at(0) == pytest.approx(1.0, abs=1e-12)


def test_fft_matches_direct_on_float_signals():
    rng = np.random.default_rng(5)
    a, b = rng.standard_normal(3000), rng.standard_normal(3000)
    fast = correlation(a, b).R
    slow = direct_correlation(a, b)
    assert np.max(np.abs(fast - slow)) <= 1e-9 * np.max(np.abs(slow))


def test_silent_train_gives_zero_correlation():
    r = correlation([0, 0, 0, 0], [1, 0, 1, 0])
    assert not r.C.any() and not r.C_filtered.any()
    with pytest.raises(ValueError):
        correlation([0, 1], [0, 1, 0])


def test_delayed_copy_peaks_at_its_lag():
    rng = np.random.default_rng(6)
    a = (rng.random(4000) < 0.05).astype(int)
    b = np.roll(a, 7)
    b[:7] = 0
    r = correlation(a, b)
    assert r.taus[np.argmax(r.C_filtered)] == 7


def test_independent_trains_stay_near_noise_floor():
    rng = np.random.default_rng(7)
    n, p = 10_000, 0.05
    a = (rng.random(n) < p).astype(int)
    b = (rng.random(n) < p).astype(int)
    r = correlation(a, b)
    centre = np.abs(r.taus) <= 1000
    sigma = 1 / np.sqrt(n)  # normalized overlap of two unrelated sparse trains
    assert np.max(np.abs(r.C_filtered[centre])) < 6 * sigma


def test_unsat_summary_detects_two_modes():
    minima = [0] * 30 + [1] * 5 + [4] * 3 + [7] * 20 + [8] * 10
    outs = [SimpleNamespace(min_unsat=m) for m in minima]
    s = unsat_summary(outs)
    assert s.histogram[0] == 30 and s.peaks == (0, 7) and s.bimodal
    one = unsat_summary([SimpleNamespace(min_unsat=m) for m in [2, 3, 3, 3, 4]])
    assert one.peaks == (3,) and not one.bimodal


def test_probe_pairs_respect_structure():
    m, _ = compile_direct(143, 4, 4)
    pairs = select_probe_pairs(m, n_pairs=3, seed=1)
    shared = {frozenset(v.index for _, v in c.terms) for c in m.constraints}
    for i, j in pairs["adjacent"]:
        assert any({i, j} <= s for s in shared)
    for i, j in pairs["non-local"]:
        assert not any({i, j} <= s for s in shared)
    assert len(pairs["adjacent"]) == len(pairs["non-local"]) == 3


def test_csv_and_json_writers(tmp_path):
    x = np.random.default_rng(8).gamma(2.0, 1.0, 500)
    fit = fit_gamma(x)
    rows = list(csv.reader(write_histogram_csv(tmp_path / "h.csv", x, 10, fit).open()))
    assert rows[0] == ["bin_left", "bin_right", "count", "density", "gamma_density"]
    assert sum(int(r[2]) for r in rows[1:]) == 500
    r = correlation([1, 0, 1, 1], [0, 1, 1, 0])
    rows = list(csv.reader(write_correlation_csv(tmp_path / "c.csv", r).open()))
    assert rows[0] == ["tau", "C_raw", "C_filtered"] and len(rows) == 8
    assert all(not v.startswith("-0.0") or v != "-0.0" for row in rows[1:] for v in row)
    doc = json.loads(write_json(tmp_path / "d.json", {"a": np.arange(3), "b": np.float64(1.5)}).read_text())
    assert doc == {"a": [0, 1, 2], "b": 1.5}
