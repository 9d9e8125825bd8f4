"""Acceptance criteria, one summary line each (see the 'acceptance criteria' section of the pytest report)."""

import itertools
import os
import time

import numpy as np
import pytest

from aqclab import bell, cli, fileio, moments, quantum, sdp, symmetry, theorems
from conftest import FIXTURES, record, shared_space_model

TSIRELSON_LO, TSIRELSON_HI = 2.828426, 2.828429
GAPS: list[float] = []  # duality gaps of every optimal SDP solved here


def aqc(f, level="aqc"):
    r = moments.maximize_over_aqc(f, level)
    assert r.optimal, r.status
    GAPS.append(r.gap)
    return r


def test_1_chsh_ladder():
    t0 = time.perf_counter()
    f = bell.chsh()
    classical = bell.classical_bound(f)
    seesaw, _ = quantum.seesaw_maximize(f, (2, 2), restarts=20, seed=7)
    npa1 = aqc(f, "1").value
    almost = aqc(f).value
    pr = bell.evaluate_functional(f, bell.pr_box())
    member = moments.membership_test(bell.pr_box())
    dt = time.perf_counter() - t0
    ok = (
        classical == 2
        and seesaw >= TSIRELSON_LO
        and TSIRELSON_LO <= npa1 <= TSIRELSON_HI
        and TSIRELSON_LO <= almost <= TSIRELSON_HI
        and pr == 4
        and not member.feasible
        and dt < 10
    )
    record("1 CHSH ladder", ok, f"classical={classical!r} seesaw={seesaw:.9f} npa1={npa1:.9f} aqc={almost:.9f} "
           f"PR={pr!r} PR-in-AQC={member.feasible} (min eig {member.min_eig:.4f}) [{dt:.2f}s < 10s]")
    assert ok


def test_2_mermin_tripartite():
    t0 = time.perf_counter()
    f = bell.mermin()
    classical = bell.classical_bound(f)
    ghz = bell.evaluate_functional(f, quantum.behavior_from_model(quantum.mermin_ghz_model()))
    almost = aqc(f).value
    dt = time.perf_counter() - t0
    ok = classical == 2 and abs(ghz - 4) <= 1e-9 and abs(almost - 4) <= 1e-5 and dt < 30
    record("2 Mermin tripartite", ok, f"classical={classical!r} over {f.scenario.strategy_count()} strategies, "
           f"GHZ={ghz!r}, aqc={almost!r} [{dt:.2f}s < 30s]")
    assert ok


def test_3_aqc_gap_substitute():
    hi = aqc(bell.i3322()).value
    lo = aqc(bell.i3322(), "2").value
    ok = hi - lo > 1e-5
    record("3 AQC gap (substitute)", ok, f"I3322 aqc={hi:.9f} level2={lo:.9f} gap={hi - lo:.3e} > 1e-5")
    assert ok


TRIPARTITE = os.environ.get("AQCLAB_TRIPARTITE_FN")


@pytest.mark.skipif(not TRIPARTITE, reason="set AQCLAB_TRIPARTITE_FN to a .fn file with the tripartite inequality")
def test_3_tripartite_values_from_user_file():
    f = fileio.load_functional(TRIPARTITE)
    almost = aqc(f).value
    seesaw, _ = quantum.seesaw_maximize(f, (2,) * f.scenario.n, restarts=50, seed=0)
    ok = abs(almost - 10.14955) <= 1e-5 and seesaw <= 10.00217 + 1e-5
    record("3 tripartite values (user file)", ok, f"aqc={almost:.6f} (10.14955) seesaw={seesaw:.6f} (<= 10.00217)")
    assert ok


def test_3_tripartite_conditional_note():
    if not TRIPARTITE:
        record("3 tripartite values (user file)", None, "AQCLAB_TRIPARTITE_FN not set; coefficients are not shipped")


def test_4_invariance_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    specs = [
        (bell.Scenario.uniform(2, 2, 2), (2, 2)),
        (bell.Scenario.uniform(2, 3, 2), (3, 2)),
        (bell.Scenario.uniform(3, 2, 2), (2, 2, 2)),
        (bell.Scenario((2, 3), (3, 2)), (3, 2)),
    ]
    worst = 0.0
    for k in range(200):
        s, dims = specs[k % len(specs)]
        m = quantum.random_model(s, dims, rng)
        for _ in range(100):
            worst = max(worst, symmetry.invariance_check(m, symmetry.random_action(dims, rng)))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and dt < 60
    record("4 invariance suite", ok, f"200 models x 100 actions, max deviation {worst:.3e} <= 1e-9 [{dt:.2f}s < 60s]")
    assert ok


def test_5_tensor_model_pipeline():
    rng = np.random.default_rng(5)
    specs = [
        (bell.Scenario.uniform(2, 2, 2), (2, 2)),
        (bell.Scenario.uniform(2, 3, 2), (2, 3)),
        (bell.Scenario.uniform(3, 2, 2), (2, 2, 2)),
    ]
    models = [theorems.GeneralizedModel.from_quantum(quantum.chsh_optimal_model()),
              theorems.GeneralizedModel.from_quantum(quantum.mermin_ghz_model())]
    models += [theorems.GeneralizedModel.from_quantum(quantum.random_model(s, d, rng)) for s, d in specs * 3]
    perm = comm = mixed = ext = four = sig = 0.0
    slope = np.inf
    for m in models:
        s = m.scenario
        n = s.n
        perm = max(perm, theorems.max_permutation_residual(m, rng))
        comm = max(comm, theorems.commutator_audit(m).value)
        for _ in range(5):
            a = theorems.sample_action(m, rng)
            for lab in itertools.product((0, 1, 2), repeat=n):
                iset = tuple(p for p in range(n) if lab[p] == 1)
                jset = tuple(p for p in range(n) if lab[p] == 2)
                mixed = max(mixed, theorems.mixed_permutation_residual(m, a, iset, jset, rng))
        ext = max(ext, max(st.residual for st in theorems.extend_inputs(m, theorems.sample_action(m, rng), rng)))
        for p in range(n):
            gen = theorems.sample_action(m, rng, [p]).terms[p][1]
            for a_, x in itertools.islice(s.cells(), 0, None, 3):
                r = theorems.first_order_check(m, gen, x, a_, rng=rng)
                four = max(four, r.four_term)
                if min(r.residuals) > 1e-12:
                    slope = min(slope, r.slope)
        for i, j in itertools.permutations(range(n), 2):
            ui = theorems.sample_action(m, rng, [i]).terms[i]
            uj = theorems.sample_action(m, rng, [j]).terms[j]
            sig = max(sig, theorems.signaling_probe(m, (i, ui[1].unitary(ui[0])), (j, uj[1].unitary(uj[0]))))
    ok = perm == 0 and comm == 0 and mixed <= 1e-10 and ext <= 1e-9 and four <= 1e-8 and slope >= 1.9 and sig <= 1e-12
    record("5 tensor-model pipeline", ok, f"{len(models)} tensor models: permutation={perm!r} commutator={comm!r} "
           f"mixed={mixed:.2e} extend={ext:.2e} four-term={four:.2e} slope={slope:.4f} signaling={sig:.2e}")
    assert ok


def test_6_aqc_violates_symmetry():
    rng = np.random.default_rng(6)
    res = aqc(bell.i3322())
    rec = moments.gns_reconstruct(res.moment_matrix)
    m = theorems.GeneralizedModel.from_reconstruction(rec)
    perm = theorems.max_permutation_residual(m, rng)
    comm = theorems.commutator_audit(m).value
    mixed = 0.0
    for _ in range(100):
        a = theorems.sample_action(m, rng)
        for iset, jset in (((0,), (1,)), ((1,), (0,))):
            mixed = max(mixed, theorems.mixed_permutation_residual(m, a, iset, jset, rng))
    ok = perm <= 1e-6 and comm > 1e-3 and mixed > 0
    record("6 AQC violates symmetry", ok, f"GNS dim {rec.dim}: permutation residual {perm:.2e} <= 1e-6, "
           f"commutator {comm:.4f} > 1e-3, max mixed residual over 100 actions {mixed:.4f} > 0")
    assert ok


def test_7_unitary_reduction():
    rng = np.random.default_rng(7)
    s = bell.Scenario.uniform(2, 2, 2)
    disc = comm_inferred = 0.0
    nonzero = np.inf
    for k in range(50):
        if k % 2 == 0:
            m = theorems.GeneralizedModel.from_quantum(quantum.random_model(s, (2, 2), rng))
        else:
            m = shared_space_model(s, 4, rng)
        rep = theorems.unitary_commutation_reduction(m, theorems.sample_angle_pairs(8, rng))
        disc = max(disc, rep.max_discrepancy)
        if k % 2 == 0:
            comm_inferred = max(comm_inferred, rep.max_inferred)
        else:
            nonzero = min(nonzero, rep.max_inferred)
    ok = disc <= 1e-6 and comm_inferred <= 1e-8
    record("7 unitary reduction", ok, f"50 models: max |inferred - direct| {disc:.2e} <= 1e-6, commuting inferred "
           f"{comm_inferred:.2e} <= 1e-8 (non-commuting min {nonzero:.3f})")
    assert ok


def test_8_sdp_engine(tmp_path):
    n = 4
    diag = tuple((sdp.functional([n], {(0, i, i): 1.0}), 1.0) for i in range(n))
    tr = sdp.solve(sdp.SDPProblem((n,), (False,), sdp.functional([n], {(0, i, i): 1.0 for i in range(n)}), diag, "minimize"))
    two = sdp.solve(sdp.SDPProblem(
        (2,), (False,), sdp.functional([2], {(0, 0, 1): 1.0, (0, 1, 0): 1.0}),
        tuple((sdp.functional([2], {(0, i, i): 1.0}), 1.0) for i in range(2)),
    ))
    GAPS.extend([tr.gap, two.gap])
    exact = abs(tr.value - n) <= 1e-8 and abs(two.value - 2) <= 1e-8
    # determinism at both levels: iterate history and the CLI report
    p, _ = moments.aqc_problem(bell.i3322())
    same_iterates = sdp.solve(p).history == sdp.solve(p).history
    out = tmp_path / "r.txt"
    args = ["verify", str(FIXTURES / "gns_i3322.gm"), "--samples", "5", "--seed", "11", "--out", str(out)]
    cli.main(args)
    first = out.read_bytes()
    cli.main(args)
    same_report = out.read_bytes() == first
    for f, lvl in ((bell.chsh(), "2"), (bell.mermin(), "2"), (bell.i3322(), "1")):
        aqc(f, lvl)
    worst_gap = max(GAPS)
    ok = exact and same_iterates and same_report and worst_gap <= 1e-7
    record("8 SDP engine", ok, f"trace-min {tr.value!r} (n={n}), 2x2 {two.value!r}, bit-identical iterates={same_iterates} "
           f"reports={same_report}, worst duality gap over {len(GAPS)} solves {worst_gap:.2e} <= 1e-7")
    assert ok
