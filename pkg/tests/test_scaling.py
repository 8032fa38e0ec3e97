import math

import numpy as np
import pytest

from sogfactor.scaling import (
    PolyFit,
    ScalingRecord,
    design_provenance,
    fit_loglog,
    load_records,
    median_table,
    save_records,
    select_degree,
    write_scaling_csv,
)


def test_exact_power_law_is_recovered():
    bits = np.array([8, 12, 16, 24, 32, 48, 64], dtype=float)
    fit = fit_loglog(bits, 0.002 * bits**3, 1)
    assert abs(fit.coefficients[0] - 3.0) < 1e-9
    assert abs(math.exp(fit.coefficients[1]) - 0.002) < 1e-9
    assert fit.residual_rms < 1e-9
    assert np.allclose(fit.predict([20, 40]), 0.002 * np.array([20.0, 40.0]) ** 3)


def test_planted_degree_is_selected_on_noisy_data():
    rng = np.random.default_rng(0)
    bits = np.arange(8, 64, 4, dtype=float)
    lb = np.log(bits)
    hits = 0
    for _ in range(50):
        y = 0.8 * lb**2 - 1.0 * lb + 0.5 + rng.normal(0, 0.02, len(bits))
        hits += select_degree(bits, np.exp(y), range(1, 6)) == 2
    assert hits >= 45


def test_fit_needs_enough_points():
    with pytest.raises(ValueError):
        fit_loglog([8, 16], [1.0, 2.0], 2)
    with pytest.raises(ValueError):
        PolyFit(2, (1.0, 2.0), 0.0, 0.0, 3)


def test_record_validation():
    with pytest.raises(ValueError):
        ScalingRecord(6, 1.0, 1.0)
    with pytest.raises(ValueError):
        ScalingRecord(16, 1.0, 1.0, method="magic")
    with pytest.raises(ValueError):
        ScalingRecord(16, 0.0, 1.0)
    ScalingRecord(16, 0.0, 0.0, converged=False)  # censored runs may carry no time


def test_median_table_and_csv(tmp_path):
    recs = [ScalingRecord(16, t, 10 * t) for t in (1.0, 3.0, 2.0)] + [
        ScalingRecord(20, 5.0, 50.0), ScalingRecord(20, 99.0, 1.0, converged=False),
        ScalingRecord(24, 1.0, 1.0, converged=False)]
    rows = {r["bits"]: r for r in median_table(recs)}
    assert rows[16]["median_wall_s"] == 2.0 and rows[16]["median_sim_us"] == 20.0
    assert rows[20]["median_wall_s"] == 5.0 and rows[20]["censored"] == 1
    assert math.isnan(rows[24]["median_wall_s"])
    text = write_scaling_csv(tmp_path / "s.csv", recs).read_text().splitlines()
    assert text[0] == "bits,median_wall_s,median_sim_us"
    assert [ln.split(",")[0] for ln in text[1:]] == ["16", "20"]


def test_records_round_trip(tmp_path):
    recs = [ScalingRecord(16, 1.5, 2.5, "congruence", True, 55, "tuned", 3)]
    fits = {1: fit_loglog([8, 16, 32], [1.0, 2.0, 4.0], 1)}
    save_records(tmp_path / "r.json", recs, fits, ["note"])
    assert load_records(tmp_path / "r.json") == recs


def test_design_provenance():
    assert design_provenance(16, [16, 20]) == ("tuned", 16)
    assert design_provenance(24, [16, 20]) == ("neighboring", 20)
    assert design_provenance(12, [16, 20]) == ("default", None)
