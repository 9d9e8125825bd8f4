import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aqclab import bell, fileio, moments, quantum, theorems
from conftest import FIXTURES

scenarios = st.sampled_from([
    bell.Scenario.uniform(2, 2, 2), bell.Scenario((2, 3), (3, 2)), bell.Scenario.uniform(3, 2, 2), bell.Scenario((1,), (4,)),
])


@settings(max_examples=30, deadline=None)
@given(scenarios, st.integers(0, 2**32 - 1))
def test_functional_round_trip(s, seed):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(s.shape) * (rng.random(s.shape) < 0.5)
    f = bell.BellFunctional(s, c)
    g = fileio.parse_functional(fileio.format_functional(f, "random"))
    assert g.scenario == s
    assert np.array_equal(g.coefficients, f.coefficients)


@settings(max_examples=20, deadline=None)
@given(scenarios, st.integers(0, 2**32 - 1))
def test_quantum_model_round_trip(s, seed):
    rng = np.random.default_rng(seed)
    m = quantum.random_model(s, [max(2, d) for d in s.outputs], rng)
    r = fileio.parse_quantum_model(fileio.format_quantum_model(m))
    assert r.dims == m.dims and r.scenario == m.scenario
    assert np.array_equal(r.state.amplitudes, m.state.amplitudes)
    for p in range(s.n):
        assert np.array_equal(r.assembly.projectors[p], m.assembly.projectors[p])


def test_generalized_model_round_trip(rng):
    m = theorems.GeneralizedModel.from_quantum(quantum.random_model(bell.Scenario.uniform(2, 2, 2), (2, 2), rng))
    r = fileio.parse_generalized_model(fileio.format_generalized_model(m))
    assert r.dims is None and r.dim == 4
    assert np.allclose(theorems.behavior(r).table, theorems.behavior(m).table, atol=1e-15)


@pytest.mark.parametrize("level", ["1", "2", "aqc"])
def test_moment_matrix_round_trip(level, rng):
    g = moments.moment_matrix_of_model(quantum.random_model(bell.Scenario.uniform(2, 3, 2), (2, 2), rng), level)
    r = fileio.parse_moment_matrix(fileio.format_moment_matrix(g))
    assert r.words == g.words and r.level == level
    assert np.array_equal(r.gamma, g.gamma)


def test_shipped_fixtures_match_builtins():
    assert np.array_equal(fileio.load_functional(FIXTURES / "chsh.fn").coefficients, bell.chsh().coefficients)
    assert np.array_equal(fileio.load_functional(FIXTURES / "mermin.fn").coefficients, bell.mermin().coefficients)
    assert np.array_equal(fileio.load_functional(FIXTURES / "i3322.fn").coefficients, bell.i3322().coefficients)
    assert isinstance(fileio.load_model(FIXTURES / "chsh_optimal.qm"), quantum.QuantumModel)
    assert isinstance(fileio.load_model(FIXTURES / "gns_i3322.gm"), theorems.GeneralizedModel)


def test_comments_and_blank_lines():
    text = "# header\n\nscenario 2 2 2 2 2  # CHSH shape\n1 1 1 1 0.5 # one cell\n\n"
    f = fileio.parse_functional(text)
    assert f.coefficients[0, 0, 0, 0] == 0.5
    assert np.count_nonzero(f.coefficients) == 1


def test_repeated_cells_accumulate():
    f = fileio.parse_functional("scenario 2 2 2 2 2\n1 1 1 1 0.5\n1 1 1 1 0.25\n")
    assert f.coefficients[0, 0, 0, 0] == 0.75


@pytest.mark.parametrize(
    "text, line, col, words",
    [
        ("", 1, 1, "empty"),
        ("scenaro 2 2 2 2 2\n", 1, 1, "scenario"),
        ("scenario 2 2 2 2\n", 1, 16, "needs 4 counts"),
        ("scenario 2 2 2 2 2\n1 1 1 1\n", 2, 1, "expected 4 indices"),
        ("scenario 2 2 2 2 2\n1 3 1 1 1.0\n", 2, 3, "outcome 3 out of range"),
        ("scenario 2 2 2 2 2\n1 1 1 0 1.0\n", 2, 7, "input 0 out of range"),
        ("scenario 2 2 2 2 2\n1 1 1 1 abc\n", 2, 9, "expected a number"),
        ("scenario 2 2 2 2 2\n1 1 1 1 nan\n", 2, 9, "non-finite"),
        ("scenario 2 0 2 2 2\n", 1, 12, "input count 0"),
    ],
)
def test_functional_parse_errors(text, line, col, words):
    with pytest.raises(fileio.ParseError) as info:
        fileio.parse_functional(text, "f.fn")
    e = info.value
    assert (e.line, e.col) == (line, col), str(e)
    assert words in e.msg
    assert str(e).startswith(f"f.fn:{line}:{col}:")


def test_malformed_fixture_position():
    with pytest.raises(fileio.ParseError) as info:
        fileio.load_functional(FIXTURES / "malformed.fn")
    assert (info.value.line, info.value.col) == (6, 7)


def test_quantum_model_parse_errors():
    good = fileio.format_quantum_model(quantum.chsh_optimal_model())
    with pytest.raises(fileio.ParseError, match="must start with 'dims'"):
        fileio.parse_quantum_model("state 1 0")
    truncated = "\n".join(good.splitlines()[:-1])
    with pytest.raises(fileio.ParseError, match="file ends"):
        fileio.parse_quantum_model(truncated)
    missing = good.replace("proj 2 2 2", "proj 2 2 1", 1)
    with pytest.raises(fileio.ParseError, match="duplicate proj 2 2 1"):
        fileio.parse_quantum_model(missing)
    bad_party = good.replace("proj 2 2 2", "proj 3 2 2", 1)
    with pytest.raises(fileio.ParseError, match="party 3 out of range") as info:
        fileio.parse_quantum_model(bad_party)
    assert info.value.col == 6
    unnormalized = good.replace("0.7071067811865475", "0.8", 1)
    with pytest.raises(fileio.ParseError, match="state norm"):
        fileio.parse_quantum_model(unnormalized)


def test_moment_matrix_parse_errors(rng):
    g = moments.moment_matrix_of_model(quantum.chsh_optimal_model(), "1")
    text = fileio.format_moment_matrix(g)
    with pytest.raises(fileio.ParseError, match="has 5 words, file declares 6"):
        fileio.parse_moment_matrix(text.replace("words 5", "words 6"))
    with pytest.raises(fileio.ParseError, match="expected E1"):
        fileio.parse_moment_matrix(text.replace("E1[1|1]", "E2[1|1]", 1))
    with pytest.raises(fileio.ParseError, match="unknown level"):
        fileio.parse_moment_matrix(text.replace("level 1", "level 9"))
    with pytest.raises(fileio.ParseError, match="trailing"):
        fileio.parse_moment_matrix(text + "0.0\n")


def test_load_model_dispatch_and_missing_file(tmp_path):
    p = tmp_path / "x.model"
    p.write_text("hello\n")
    with pytest.raises(fileio.ParseError, match="must start with"):
        fileio.load_model(p)
    with pytest.raises(fileio.ParseError, match="cannot read"):
        fileio.load_model(tmp_path / "absent.qm")


def test_digest_is_sha256(tmp_path):
    import hashlib

    p = tmp_path / "a.fn"
    p.write_bytes(b"scenario 1 1 2\n")
    assert fileio.digest(p) == hashlib.sha256(b"scenario 1 1 2\n").hexdigest()
