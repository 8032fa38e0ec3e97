import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sogfactor.emulator import (
    DesignParams,
    FamilyParams,
    SOGSolver,
    build_circuit,
    default_design,
    integrate,
    rates,
    run,
    run_ensemble,
    solve,
    step,
    velocity,
    write_trajectory_csv,
)
from sogfactor.ilp import InfeasibleModelError, ModelBuilder, Sense, evaluate
from sogfactor.models import compile_direct, decode_direct


def _mixed_model():
    b = ModelBuilder("mixed")
    x, y, z = (b.add_var(n) for n in "xyz")
    b.add_constraint([(1, x), (1, y)], Sense.LE, 1, "le")
    b.add_constraint([(1, x), (1, z)], Sense.GE, 1, "ge")
    b.add_constraint([(2, x), (1, z)], Sense.EQ, 2, "eq")
    return b.build()


def test_units_per_sense():
    c = build_circuit(_mixed_model())
    assert c.n_units == 4
    assert c.units.row.tolist() == [0, 1, 2, 2]
    # >= rows are mirrored into <= form
    assert c.units.coef[c.units.indptr[1]:c.units.indptr[2]].tolist() == [-1, -1]
    assert c.units.rhs.tolist() == [1, -1, 2, -2]
    assert c.units.maxabs.tolist() == [1, 1, 2, 2]


def test_gaps_are_exact_integers():
    c = build_circuit(_mixed_model())
    assert c.units.gaps(np.array([1, 1, 0])).tolist() == [1, 0, 0, 0]
    assert c.units.gaps(np.array([0, 0, 1])).tolist() == [0, 0, 0, 1]
    assert c.units.gaps(np.array([0, 1, 0])).tolist() == [0, 1, 0, 2]


@pytest.mark.parametrize("dynamics", ["score", "reference"])
def test_no_unit_drive_at_a_solution(dynamics):
    m = _mixed_model()
    c = build_circuit(m, default_design().replace(dynamics=dynamics))
    sol = np.array([1, 0, 0])
    assert evaluate(m, sol)
    c.voltages = sol.astype(float)
    c.latch = sol.astype(np.int64)
    c.memory = np.full(c.n_units, 3.0)
    dv, dx = velocity(c)
    assert np.all(dv == 0)
    assert np.all(dx < 0)  # memories only decay once everything is satisfied


@pytest.mark.parametrize("dynamics", ["score", "reference"])
def test_memory_grows_while_violated(dynamics):
    m = _mixed_model()
    c = build_circuit(m, default_design().replace(dynamics=dynamics)).reset(3)
    bits = np.array([1, 1, 1])
    c.voltages, c.latch = bits.astype(float), bits.astype(np.int64)
    _, dx = rates(c)
    violated = c.units.gaps(bits) > 0
    assert violated.any() and np.all(dx[violated] > 0)


def test_reference_flow_formula():
    b = ModelBuilder()
    x, y = b.add_var("x"), b.add_var("y")
    b.add_constraint([(2, x), (4, y)], Sense.LE, 2)
    params = DesignParams(dynamics="reference", default=FamilyParams(gain=1.5, speed=2.0, growth=3.0))
    c = build_circuit(b.build(), params)
    c.voltages = np.array([1.0, 1.0])
    c.memory = np.array([0.5])
    dv, dx = rates(c)
    gap = (2 + 4 - 2) / 4
    w = 1.5 * 1.5
    assert dv.tolist() == pytest.approx([-2.0 * w * 0.5, -2.0 * w * 1.0])
    assert dx[0] == pytest.approx(c.growth_rate[0] * gap)


@st.composite
def random_models(draw):
    n = draw(st.integers(2, 6))
    b = ModelBuilder("r")
    vs = [b.add_var(f"v{i}") for i in range(n)]
    for _ in range(draw(st.integers(1, 5))):
        idx = draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=n, unique=True))
        terms = [(draw(st.integers(-5, 5).filter(bool)), vs[i]) for i in idx]
        b.add_constraint(terms, draw(st.sampled_from(list(Sense))), draw(st.integers(-4, 4)))
    return b.build()


@settings(max_examples=40, deadline=None)
@given(random_models(), st.integers(0, 2**32), st.sampled_from(["score", "reference"]))
def test_state_stays_in_the_box(model, seed, dynamics):
    c = build_circuit(model, default_design().replace(dynamics=dynamics)).reset(seed)
    for _ in range(300):
        step(c)
        assert np.all((0 <= c.voltages) & (c.voltages <= 1))
        assert np.all((0 <= c.memory) & (c.memory <= c.memory_cap))


def test_compiled_loop_matches_numpy_step():
    m, _ = compile_direct(143, 4, 4)
    a = build_circuit(m).reset(7)
    b = a.copy()
    steps, conv, *_ = integrate(a, 200, check_every=10**6)
    assert steps == 200 and not conv
    for _ in range(200):
        step(b)
    assert np.allclose(a.voltages, b.voltages, atol=1e-9)
    assert np.allclose(a.memory, b.memory, atol=1e-9)
    assert np.array_equal(a.latch, b.latch)


def test_runs_are_deterministic():
    m, _ = compile_direct(35, 3, 3)
    c = build_circuit(m)
    r1, r2 = run(c, seed=11, budget=5.0), run(c, seed=11, budget=5.0)
    assert r1.converged == r2.converged and r1.steps == r2.steps
    assert np.array_equal(r1.assignment, r2.assignment)


def test_ensemble_of_35_converges_and_decodes():
    m, layout = compile_direct(35, 3, 3)
    outs = run_ensemble(m, n_runs=20, seed=0, budget=100.0)
    assert sum(o.converged for o in outs) >= 18
    for o in outs:
        if o.converged:
            assert evaluate(m, o.assignment) and 0 < o.tts <= 100.0
            assert decode_direct(layout, m, o.assignment.tolist()) in {(5, 7), (7, 5)}


def test_ensemble_is_independent_of_thread_count():
    m, _ = compile_direct(143, 4, 4)
    serial = run_ensemble(m, n_runs=6, seed=4, budget=10.0)
    threaded = run_ensemble(m, n_runs=6, seed=4, budget=10.0, n_jobs=3)
    assert [o.seed for o in serial] == [o.seed for o in threaded]
    assert [o.steps for o in serial] == [o.steps for o in threaded]


def test_infeasible_model_is_reported():
    b = ModelBuilder()
    x = b.add_var("x")
    b.add_constraint([(1, x)], Sense.GE, 1)
    b.add_constraint([(1, x)], Sense.LE, 0)
    with pytest.raises(InfeasibleModelError):
        solve(b.build(), max_runs=2)


def test_unsatisfiable_without_presolve_never_converges():
    b = ModelBuilder()
    x, y = b.add_var("x"), b.add_var("y")
    b.add_constraint([(1, x), (1, y)], Sense.EQ, 1)
    b.add_constraint([(1, x), (-1, y)], Sense.EQ, 1)
    b.add_constraint([(1, x)], Sense.LE, 0)
    res = solve(b.build(), max_runs=3, budget=2.0, use_presolve=False)
    assert not res.solved and res.n_runs == 3 and res.simulated_time == pytest.approx(6.0)


def test_sog_solver_estimator():
    m, layout = compile_direct(143, 4, 4)
    est = SOGSolver(seed=1, max_runs=200)
    assert est.get_params()["max_runs"] == 200
    bits = est.fit(m).predict()
    assert est.solved_ and evaluate(m, bits)
    assert set(decode_direct(layout, m, bits.tolist())) == {11, 13}
    with pytest.raises(TypeError):
        SOGSolver().fit(np.zeros((3, 3)))
    with pytest.raises(AttributeError):
        SOGSolver().predict()


def test_design_round_trip_and_validation(tmp_path):
    d = default_design({"soag": {"gain": 2.5}})
    d.save(tmp_path / "d.json")
    back = DesignParams.load(tmp_path / "d.json")
    assert back == d and back.family("soag").gain == 2.5
    assert back.family("unknown") == back.default
    with pytest.raises(ValueError):
        DesignParams(hysteresis=0.6)
    with pytest.raises(ValueError):
        FamilyParams(gain=-1)
    with pytest.raises(ValueError):
        DesignParams.from_dict({"bogus": 1})


def test_trajectory_csv(tmp_path):
    m, _ = compile_direct(35, 3, 3)
    out = run(build_circuit(m, probes=[0, 1]), seed=0, budget=2.0)
    path = write_trajectory_csv(out, tmp_path / "t.csv")
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["time_us", "v0", "v1", "unsat"]
    assert len(rows) - 1 == len(out.times)
    with pytest.raises(ValueError):
        write_trajectory_csv(out, tmp_path / "bad.csv", names=["only-one"])
