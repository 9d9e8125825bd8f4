
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aqclab import bell, moments, quantum, sdp

TSIRELSON = 2 * np.sqrt(2)
S222 = bell.Scenario.uniform(2, 2, 2)
S322 = bell.Scenario.uniform(3, 2, 2)
S232 = bell.Scenario.uniform(2, 3, 2)

letter_st = st.tuples(st.integers(0, 2), st.integers(0, 1), st.integers(0, 1))
word_st = st.lists(letter_st, max_size=5).map(tuple)


@pytest.mark.parametrize(
    "s, level, count",
    [
        (S222, "1", 5), (S222, "2", 13), (S222, "aqc", 9),
        (S322, "1", 7), (S322, "2", 25), (S322, "aqc", 27),
        (S232, "1", 7), (S232, "2", 28), (S232, "aqc", 16),
    ],
)
def test_word_counts(s, level, count):
    # aqc: prod_p (1 + m_p (d_p - 1)); level 1: 1 + sum_p m_p (d_p - 1)
    assert len(moments.build_word_list(s, level)) == count


def test_aqc_word_count_formula():
    for s in (S222, S322, S232, bell.Scenario((2, 3), (3, 2))):
        expect = int(np.prod([1 + m * (d - 1) for m, d in zip(s.inputs, s.outputs)]))
        assert len(moments.build_word_list(s, "aqc")) == expect


def test_unknown_level_rejected():
    with pytest.raises(ValueError):
        moments.build_word_list(S222, "7")


@settings(max_examples=200, deadline=None)
@given(word_st)
def test_reduce_word_idempotent_and_adjoint_involution(w):
    r = moments.reduce_word(w)
    if r is None:
        return
    assert moments.reduce_word(r) == r
    assert moments.adjoint(moments.adjoint(r)) == r
    lab, conj = moments.canonical_label(w)
    lab2, _ = moments.canonical_label(moments.adjoint(r))
    assert lab == lab2


@settings(max_examples=100, deadline=None)
@given(word_st)
def test_word_text_round_trip(w):
    r = moments.reduce_word(w)
    if r is None:
        return
    assert moments.parse_word(moments.word_text(r)) == r


def test_orthogonal_outcomes_give_zero():
    assert moments.reduce_word([(0, 0, 0), (0, 0, 1)]) is None
    assert moments.reduce_word([(0, 0, 0), (1, 0, 0), (0, 0, 0)]) == ((0, 0, 0), (1, 0, 0))


def brute_label_classes(s, level, samples=4, dim=3, seed=1):
    """Entry coincidences read off numerically from random quantum moment matrices."""
    rng = np.random.default_rng(seed)
    gs = np.stack([
        moments.moment_matrix_of_model(quantum.random_model(s, [dim] * s.n, rng), level).gamma
        for _ in range(samples)
    ])
    n = gs.shape[1]
    entries = [(i, j) for i in range(n) for j in range(i, n)]
    vals = np.array([gs[:, i, j] for i, j in entries])
    cnt = {"zero": 0, "one": 0, "equal": 0, "real": 0}
    seen = []
    for e, (i, j) in enumerate(entries):
        v = vals[e]
        if np.abs(v).max() < 1e-9:
            cnt["zero"] += 1
            continue
        if (i, j) == (0, 0):
            cnt["one"] += 1
            continue
        if any(np.abs(vals[f] - v).max() < 1e-9 or np.abs(np.conj(vals[f]) - v).max() < 1e-9 for f in seen):
            cnt["equal"] += 1
            continue
        seen.append(e)
        if i != j and np.abs(v.imag).max() < 1e-9:
            cnt["real"] += 1
    return cnt


@pytest.mark.parametrize("s", [S222, S232, S322, bell.Scenario((2, 3), (3, 2))])
@pytest.mark.parametrize("level", ["1", "2", "aqc"])
def test_constraint_pattern_matches_numeric_oracle(s, level):
    from collections import Counter

    got = Counter(c.kind for c in moments.aqc_constraints(s, level))
    want = brute_label_classes(s, level)
    assert {k: got.get(k, 0) for k in want} == want


@settings(max_examples=15, deadline=None)
@given(st.sampled_from([S222, S232, S322]), st.sampled_from(["1", "2", "aqc"]), st.integers(0, 2**32 - 1))
def test_quantum_moment_matrices_satisfy_constraints(s, level, seed):
    rng = np.random.default_rng(seed)
    m = quantum.random_model(s, [2] * s.n, rng)
    g = moments.moment_matrix_of_model(m, level)
    assert g.constraint_residual() < 1e-12
    assert g.min_eig() > -1e-12
    if level == "1" and s.n > 2:
        # no word of this matrix reaches all three parties
        with pytest.raises(ValueError):
            g.behavior()
    else:
        assert np.allclose(g.behavior().table, quantum.behavior_from_model(m).table, atol=1e-12)


@pytest.mark.parametrize("level", ["1", "2", "aqc"])
def test_chsh_tsirelson_all_levels(level):
    r = moments.maximize_over_aqc(bell.chsh(), level)
    assert r.optimal
    assert 2.828426 <= r.value <= 2.828429
    assert r.gap <= 1e-7


def test_mermin_aqc_is_four():
    r = moments.maximize_over_aqc(bell.mermin(), "aqc")
    assert r.optimal and abs(r.value - 4) <= 1e-5


def test_i3322_hierarchy_is_nested():
    f = bell.i3322()
    vals = {lvl: moments.maximize_over_aqc(f, lvl).value for lvl in ("1", "aqc", "2")}
    qubit, _ = quantum.seesaw_maximize(f, (2, 2), restarts=5, seed=0)
    # the aqc words are a subset of the level-2 words, level 1 a subset of both
    assert qubit - 1e-8 <= vals["2"] <= vals["aqc"] + 1e-8 <= vals["1"] + 2e-8
    assert vals["1"] == pytest.approx(0.375, abs=1e-6)
    assert vals["aqc"] - vals["2"] > 1e-5


@pytest.mark.parametrize("f", [bell.chsh(), bell.i3322(), bell.mermin()], ids=["chsh", "i3322", "mermin"])
def test_equality_form_matches_lmi_route(f):
    p, const = moments.aqc_problem(f, "aqc")
    s = sdp.solve(p)
    r = moments.maximize_over_aqc(f, "aqc")
    assert s.optimal
    assert s.value + const == pytest.approx(r.value, abs=1e-7)
    assert sdp.constraint_residual(p, s.primal) <= 1e-8
    assert s.primal_min_eig >= -1e-8


def test_optimal_moment_matrix_is_admissible():
    r = moments.maximize_over_aqc(bell.i3322(), "aqc")
    g = r.moment_matrix
    assert g.constraint_residual() < 1e-9
    assert g.min_eig() > -1e-8
    assert bell.evaluate_functional(bell.i3322(), g.behavior()) == pytest.approx(r.value, abs=1e-8)
    assert bell.check_no_signaling(g.behavior()) < 1e-9


def test_membership():
    assert not moments.membership_test(bell.pr_box()).feasible
    assert moments.membership_test(bell.pr_box()).violation > 1e-3
    assert moments.membership_test(quantum.behavior_from_model(quantum.chsh_optimal_model())).feasible
    assert moments.membership_test(bell.uniform_behavior(S222)).feasible
    det = bell.deterministic_behavior(S222, [[0, 1], [1, 1]])
    assert moments.membership_test(det).feasible


def test_membership_rejects_signaling():
    t = np.zeros(S222.shape)
    for a, x in S222.cells():
        t[a + x] = 0.5 * (a[0] == x[1])
    res = moments.membership_test(bell.Behavior(S222, t))
    assert not res.feasible and res.signaling > 0.5


@settings(max_examples=10, deadline=None)
@given(st.sampled_from([S222, S232, S322]), st.integers(0, 2**32 - 1))
def test_gns_round_trip_on_quantum_models(s, seed):
    rng = np.random.default_rng(seed)
    m = quantum.random_model(s, [2] * s.n, rng)
    g = moments.moment_matrix_of_model(m)
    rec = moments.gns_reconstruct(g)
    assert rec.gram_residual(g.gamma) < 1e-8
    assert rec.fit_residual < 1e-8
    b = np.zeros(s.shape)
    for a, x in s.cells():
        v = rec.state
        for p in reversed(range(s.n)):
            v = rec.op(p, x[p], a[p]) @ v
        b[a + x] = np.real(np.vdot(rec.state, v))
    assert np.allclose(b, quantum.behavior_from_model(m).table, atol=1e-8)


def test_gns_of_aqc_optimum_is_a_projective_model():
    r = moments.maximize_over_aqc(bell.i3322(), "aqc")
    rec = moments.gns_reconstruct(r.moment_matrix)
    assert rec.gram_residual(r.moment_matrix.gamma) < 1e-6
    s = rec.scenario
    for p, x in ((p, x) for p in range(s.n) for x in range(s.inputs[p])):
        es = [rec.op(p, x, a) for a in range(s.outputs[p])]
        assert np.allclose(sum(es), np.eye(rec.dim), atol=1e-8)
        for e in es:
            assert np.allclose(e @ e, e, atol=1e-6)
            assert np.allclose(e, e.conj().T, atol=1e-6)


def test_gns_rejects_indefinite_matrix():
    g = moments.moment_matrix_of_model(quantum.chsh_optimal_model())
    bad = moments.MomentMatrix(g.scenario, g.words, g.gamma - 0.1 * np.eye(g.size), g.level)
    with pytest.raises(ValueError):
        moments.gns_reconstruct(bad)
