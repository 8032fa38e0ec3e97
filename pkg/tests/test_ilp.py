import itertools
import subprocess

import pytest
from hypothesis import given, settings, strategies as st

from oracles import enumerate_solutions
from sogfactor.ilp import (
    AssignmentLengthError,
    InfeasibleModelError,
    ModelBuilder,
    Sense,
    evaluate,
    export_model,
    from_lp,
    from_mps,
    import_model,
    presolve,
    to_lp,
    to_mps,
)
from sogfactor.models import compile_direct, decode_direct


def _or_model():
    b = ModelBuilder("or")
    x1, x2 = b.add_var("x1"), b.add_var("x2")
    b.add_constraint([(1, x1), (1, x2)], Sense.GE, 1)
    return b.build()


def test_evaluate_examples():
    m = _or_model()
    assert evaluate(m, (1, 0)).satisfied
    ev = evaluate(m, (0, 0))
    assert not ev.satisfied and ev.violations == ((0, 1),)


def test_evaluate_rejects_wrong_length_and_values():
    m = _or_model()
    with pytest.raises(AssignmentLengthError):
        evaluate(m, (1,))
    with pytest.raises(ValueError):
        evaluate(m, (1, 2))


def test_builder_rejects_undeclared_and_duplicates():
    b = ModelBuilder()
    b.add_var("x")
    with pytest.raises(ValueError):
        b.add_var("x")
    other = ModelBuilder().add_var("y")
    b2 = ModelBuilder()
    b2.add_var("z")
    b2.add_var("w")
    b2.add_constraint([(1, other)], Sense.GE, 1)  # index 0 but a different VarRef
    with pytest.raises(ValueError):
        b2.build()


def test_presolve_examples():
    b = ModelBuilder()
    x = b.add_var("x")
    b.add_constraint([(1, x)], Sense.LE, 0)
    r = presolve(b.build())
    assert r.fixed == {x: 0} and r.model.n_constraints == 0

    b = ModelBuilder()
    x1, x2 = b.add_var("x1"), b.add_var("x2")
    b.add_constraint([(1, x1), (1, x2)], Sense.GE, 2)
    assert presolve(b.build()).fixed == {x1: 1, x2: 1}

    b = ModelBuilder()
    x = b.add_var("x")
    b.add_constraint([(1, x)], Sense.GE, 1)
    b.add_constraint([(1, x)], Sense.LE, 0)
    with pytest.raises(InfeasibleModelError):
        presolve(b.build())


@st.composite
def small_models(draw):
    nv = draw(st.integers(1, 6))
    b = ModelBuilder("rand")
    vs = [b.add_var(f"v{i}") for i in range(nv)]
    for _ in range(draw(st.integers(0, 6))):
        idx = draw(st.lists(st.integers(0, nv - 1), min_size=1, max_size=nv, unique=True))
        coefs = draw(st.lists(st.integers(-4, 4).filter(bool), min_size=len(idx), max_size=len(idx)))
        sense = draw(st.sampled_from(list(Sense)))
        rhs = draw(st.integers(-5, 5))
        b.add_constraint(list(zip(coefs, [vs[i] for i in idx])), sense, rhs)
    return b.build()


@settings(max_examples=200, deadline=None)
@given(small_models())
def test_presolve_preserves_evaluation(model):
    try:
        r = presolve(model)
    except InfeasibleModelError:
        assert not any(evaluate(model, a) for a in itertools.product((0, 1), repeat=model.n_vars))
        return
    for a in itertools.product((0, 1), repeat=model.n_vars):
        if r.consistent(a):
            assert evaluate(r.model, r.restrict(a)).satisfied == evaluate(model, a).satisfied
        else:
            assert not evaluate(model, a).satisfied
    for red in itertools.product((0, 1), repeat=r.model.n_vars):
        assert evaluate(model, r.expand(red)).satisfied == evaluate(r.model, red).satisfied


@settings(max_examples=100, deadline=None)
@given(small_models(), st.sampled_from(["mps", "lp"]))
def test_round_trip_is_structurally_equal(model, fmt):
    back = import_model(export_model(model, fmt), fmt)
    assert back.structurally_equal(model)
    for a in itertools.product((0, 1), repeat=model.n_vars):
        assert evaluate(back, a).satisfied == evaluate(model, a).satisfied


def test_mps_skeleton():
    b = ModelBuilder("one")
    x = b.add_var("x")
    b.add_constraint([(1, x)], Sense.GE, 1)
    text = to_mps(b.build())
    for section in ("ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"):
        assert section in text


def test_round_trip_direct_model_with_big_coefficients():
    m, _ = compile_direct(1_000_003 * 999_983, 20, 20)
    for fmt in ("mps", "lp"):
        back = import_model(export_model(m, fmt), fmt)
        assert back.n_constraints == m.n_constraints and back.structurally_equal(m)
        assert back.families == m.families


def test_unknown_format():
    with pytest.raises(ValueError):
        export_model(_or_model(), "xml")


# -- independent parser: pulp / CBC ------------------------------------------
pulp = pytest.importorskip("pulp")


def _cbc_path():
    path = pulp.PULP_CBC_CMD().path
    if not path:
        pytest.skip("CBC binary not available")
    return path


def test_mps_read_by_pulp(tmp_path):
    m, _ = compile_direct(143, 4, 4)
    f = tmp_path / "m.mps"
    f.write_text(to_mps(m))
    _, prob = pulp.LpProblem.fromMPS(str(f))
    assert len(prob.constraints) == m.n_constraints
    assert len(prob.variables()) == m.n_vars
    assert all(v.cat == pulp.LpInteger and v.lowBound == 0 and v.upBound == 1 for v in prob.variables())


def _solve_with_cbc(tmp_path, text, suffix):
    f = tmp_path / f"m.{suffix}"
    f.write_text(text)
    sol = tmp_path / "sol.txt"
    cmd = [_cbc_path(), str(f), "solve", "solu", str(sol)]
    subprocess.run(cmd, check=True, capture_output=True, timeout=120)
    values = {}
    lines = sol.read_text().splitlines()
    assert "Optimal" in lines[0], lines[0]
    for line in lines[1:]:
        parts = line.split()
        if len(parts) >= 3:
            values[parts[1]] = round(float(parts[2]))
    return values


@pytest.mark.parametrize("fmt", ["lp", "mps"])
def test_cbc_solves_exported_143(tmp_path, fmt):
    m, layout = compile_direct(143, 4, 4)
    text = to_lp(m) if fmt == "lp" else to_mps(m)
    values = _solve_with_cbc(tmp_path, text, fmt)
    names = [v.name for v in m.variables]
    if fmt == "mps":  # MPS names may be shortened; map through a re-import
        names = [v.name for v in from_mps(text).variables]
    else:
        names = [v.name for v in from_lp(text).variables]
    a = [values.get(nm, 0) for nm in names]
    p, q = decode_direct(layout, m, a)
    assert {p, q} == {11, 13}


def test_cbc_feasible_set_matches_enumeration_for_35(tmp_path):
    m, layout = compile_direct(35, 3, 3)
    sols = {decode_direct(layout, m, a) for a in enumerate_solutions(m)}
    assert sols == {(5, 7), (7, 5)}
    values = _solve_with_cbc(tmp_path, to_lp(m), "lp")
    names = [v.name for v in from_lp(to_lp(m)).variables]
    assert decode_direct(layout, m, [values.get(nm, 0) for nm in names]) in sols
