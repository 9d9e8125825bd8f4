"""``aqclab`` command line: bounds, model verification, demos and file utilities.

Exit codes: 0 pass, 1 check or reproduction failure, 2 input error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import bell, fileio, linalg, moments, quantum, symmetry, theorems

log = logging.getLogger("aqclab")

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3

CHECKS = ("assembly", "invariance", "permutation", "mixed", "extend", "commutators", "signaling", "first-order")
DEFAULT_TOLS = {
    "assembly": 1e-8,
    "invariance": 1e-9,
    "permutation": 1e-6,
    "mixed": 1e-10,
    "extend": 1e-9,
    "commutators": 1e-9,
    "signaling": 1e-12,
    "first-order": 1e-8,
}
FIRST_ORDER_MIN_SLOPE = 1.9
TSIRELSON = 2 * np.sqrt(2)


class SolverError(RuntimeError):
    pass


# --------------------------------------------------------------------------- report


@dataclass
class Check:
    name: str
    measured: float
    tol: float
    passed: bool
    relation: str = "<="
    detail: str = ""


@dataclass
class RunReport:
    command: str
    digests: dict[str, str] = field(default_factory=dict)
    results: list[tuple[str, object]] = field(default_factory=list)
    checks: list[Check] = field(default_factory=list)
    duration: float = 0.0

    def add(self, key: str, value) -> None:
        self.results.append((key, value))

    def check(self, name: str, measured: float, tol: float, relation: str = "<=", detail: str = "") -> bool:
        ops = {
            "<=": lambda m, t: m <= t,
            ">=": lambda m, t: m >= t,
            ">": lambda m, t: m > t,
            "==": lambda m, t: m == t,
        }
        ok = bool(np.isfinite(measured) and ops[relation](measured, tol))
        self.checks.append(Check(name, float(measured), float(tol), ok, relation, detail))
        return ok

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def render(self) -> str:
        out = [f"command: {self.command}"]
        for path, d in self.digests.items():
            out.append(f"input {path} sha256={d}")
        if self.results:
            out.append("results:")
            width = max(len(k) for k, _ in self.results)
            for k, v in self.results:
                out.append(f"  {k:<{width}}  {_value(v)}")
        if self.checks:
            out.append("checks:")
            width = max(len(c.name) for c in self.checks)
            for c in self.checks:
                flag = "PASS" if c.passed else "FAIL"
                extra = f"  ({c.detail})" if c.detail else ""
                out.append(f"  {flag} {c.name:<{width}}  measured={c.measured:.10g} {c.relation} {c.tol:.10g}{extra}")
        out.append(f"duration: {self.duration:.3f} s")
        return "\n".join(out)

    def key_values(self) -> str:
        """Machine-readable form; wall-clock time is left out so runs compare bit for bit."""
        out = [f"command={self.command}"]
        for path, d in self.digests.items():
            out.append(f"digest.{Path(path).name}={d}")
        for k, v in self.results:
            out.append(f"result.{k}={_value(v)}")
        for c in self.checks:
            out.append(f"check.{c.name}.measured={c.measured!r}")
            out.append(f"check.{c.name}.tol={c.tol!r}")
            out.append(f"check.{c.name}.relation={c.relation}")
            out.append(f"check.{c.name}.passed={str(c.passed).lower()}")
        out.append(f"passed={str(self.passed).lower()}")
        return "\n".join(out) + "\n"


def _value(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# --------------------------------------------------------------------------- bound


def _bound(level: str, f: bell.BellFunctional, args, report: RunReport):
    report.add("scenario", f"inputs={f.scenario.inputs} outputs={f.scenario.outputs}")
    if level == "classical":
        report.add("method", f"enumeration of {f.scenario.strategy_count()} deterministic strategies")
        value = bell.classical_bound(f)
    elif level == "quantum-seesaw":
        dims = tuple(args.dim) if args.dim else f.scenario.outputs
        report.add("method", f"see-saw, local dims {dims}, {args.restarts} restarts, seed {args.seed}")
        value, model = quantum.seesaw_maximize(f, dims, restarts=args.restarts, seed=args.seed)
        if args.save_model:
            Path(args.save_model).write_text(fileio.format_quantum_model(model, "see-saw optimum"))
    else:
        lvl = {"npa1": "1", "npa2": "2", "aqc": "aqc"}[level]
        res = moments.maximize_over_aqc(f, lvl, tol=args.sdp_tol)
        report.add("method", f"moment SDP level {lvl}, {res.moment_matrix.size} words, {res.variables} variables")
        report.add("status", res.status)
        report.add("iterations", res.iterations)
        report.add("duality_gap", res.gap)
        if not res.optimal:
            raise SolverError(f"SDP ended with status {res.status}")
        value = res.value
        if args.save_moments:
            Path(args.save_moments).write_text(fileio.format_moment_matrix(res.moment_matrix))
    report.add("value", float(value))
    if args.expect is not None:
        report.check("expected_value", abs(value - args.expect), args.tol if args.tol is not None else 1e-6)
    return value


def cmd_bound(args, report: RunReport) -> int:
    f = fileio.load_functional(args.functional)
    report.digests[args.functional] = fileio.digest(args.functional)
    _bound(args.level, f, args, report)
    return EXIT_OK if report.passed else EXIT_FAIL


# --------------------------------------------------------------------------- verify


def _tol(args, name: str) -> float:
    return args.tol if args.tol is not None else DEFAULT_TOLS[name]


def _verify_generalized(g: theorems.GeneralizedModel, checks, args, report: RunReport, qm=None) -> None:
    rng = np.random.default_rng(args.seed)
    s = g.scenario
    n = s.n
    samples = args.samples
    actions = [theorems.sample_action(g, rng) for _ in range(samples)]

    if "assembly" in checks:
        if qm is not None:
            bad = quantum.validate_assembly(qm.assembly, _tol(args, "assembly"))
            worst = max((v.residual for v in bad), default=0.0)
            # operator-level defects first, they name the offending projector
            bad.sort(key=lambda v: (v.kind == "completeness", -v.residual))
            detail = "; ".join(_describe(v) for v in bad[:4])
            report.check("assembly", worst, _tol(args, "assembly"), detail=detail)
        else:
            res = g.assembly_residuals()
            kind = max(res, key=res.get)
            report.check("assembly", res[kind], _tol(args, "assembly"), detail=f"worst: {kind}")
    if "invariance" in checks:
        if qm is not None:
            worst = max(symmetry.invariance_check(qm, a) for a in actions)
        else:
            worst = max(theorems.generalized_invariance(g, a) for a in actions)
        report.check("invariance", worst, _tol(args, "invariance"), detail=f"{samples} actions")
    if "permutation" in checks:
        report.check("permutation", theorems.max_permutation_residual(g, rng), _tol(args, "permutation"))
    if "mixed" in checks:
        worst = 0.0
        splits = [
            (tuple(p for p in range(n) if lab[p] == 1), tuple(p for p in range(n) if lab[p] == 2))
            for lab in itertools.product((0, 1, 2), repeat=n)
            if any(lab)
        ]
        for a in actions:
            for iset, jset in splits:
                worst = max(worst, theorems.mixed_permutation_residual(g, a, iset, jset, rng))
        report.check("mixed", worst, _tol(args, "mixed"), detail=f"{samples} actions x {len(splits)} splits")
    if "extend" in checks:
        worst, degenerate = 0.0, 0
        for a in actions[: max(1, min(samples, 10))]:
            for st in theorems.extend_inputs(g, a, rng):
                worst = max(worst, st.residual)
                degenerate += st.degenerate
        report.check("extend", worst, _tol(args, "extend"), detail=f"degenerate stages: {degenerate}")
    if "commutators" in checks:
        audit = theorems.commutator_audit(g)
        where = ""
        if audit.where is not None and audit.value > 0:
            i, xi, ai, j, xj, aj = audit.where
            where = f"worst pair: party {i + 1} ({xi + 1},{ai + 1}) vs party {j + 1} ({xj + 1},{aj + 1})"
        report.check("commutators", audit.value, _tol(args, "commutators"), detail=where)
    if "signaling" in checks:
        worst = 0.0
        for _ in range(samples):
            for i, j in itertools.permutations(range(n), 2):
                ui = theorems.sample_action(g, rng, [i]).terms[i]
                uj = theorems.sample_action(g, rng, [j]).terms[j]
                worst = max(
                    worst,
                    theorems.signaling_probe(g, (i, ui[1].unitary(ui[0])), (j, uj[1].unitary(uj[0]))),
                )
        report.check("signaling", worst, _tol(args, "signaling"), detail=f"{samples} samples per ordered pair")
    if "first-order" in checks:
        four, slope = 0.0, np.inf
        for p in range(n):
            gen = theorems.sample_action(g, rng, [p]).terms[p][1]
            for a_, x in s.cells():
                r = theorems.first_order_check(g, gen, x, a_, rng=rng)
                four = max(four, r.four_term)
                # residuals at round-off carry no slope information
                if min(r.residuals) > 1e-12:
                    slope = min(slope, r.slope)
        report.check("first-order.four-term", four, _tol(args, "first-order"))
        if np.isfinite(slope):
            report.check("first-order.slope", slope, FIRST_ORDER_MIN_SLOPE, ">=")
        else:
            report.add("first-order.slope", "n/a (all residuals at round-off)")


def _describe(v: quantum.AssemblyViolation) -> str:
    where = f"party {v.party + 1} input {v.input + 1}"
    if v.outcomes:
        where += " outcome" + ("s " if len(v.outcomes) > 1 else " ") + ",".join(str(o + 1) for o in v.outcomes)
    return f"{v.kind} {v.residual:.3g} at {where}"


def cmd_verify(args, report: RunReport) -> int:
    model = fileio.load_model(args.model)
    report.digests[args.model] = fileio.digest(args.model)
    checks = _parse_checks(args.checks)
    if isinstance(model, quantum.QuantumModel):
        report.add("model", f"tensor quantum model, dims {model.dims}")
        g = theorems.GeneralizedModel.from_quantum(model)
        _verify_generalized(g, checks, args, report, qm=model)
    else:
        report.add("model", f"generalized model, dim {model.dim}")
        _verify_generalized(model, checks, args, report)
    report.add("checks", ",".join(c for c in CHECKS if c in checks))
    return EXIT_OK if report.passed else EXIT_FAIL


def _parse_checks(text: str | None) -> list[str]:
    if not text or text == "all":
        return list(CHECKS)
    out = [c.strip() for c in text.split(",") if c.strip()]
    unknown = [c for c in out if c not in CHECKS]
    if unknown:
        raise fileio.ParseError(f"unknown check(s) {unknown}; known: {', '.join(CHECKS)}", 0, 0, "--checks")
    return out


# --------------------------------------------------------------------------- demos


def demo_tsirelson(args, report: RunReport) -> None:
    f = bell.chsh()
    report.check("classical", bell.classical_bound(f), 2.0, "==")
    val, _ = quantum.seesaw_maximize(f, (2, 2), restarts=args.restarts, seed=args.seed)
    report.add("seesaw", val)
    report.check("seesaw_lower", val, 2.828426, ">=")
    res = moments.maximize_over_aqc(f, "1", tol=args.sdp_tol)
    _require(res)
    report.add("npa1", res.value)
    report.check("npa1_upper", res.value, 2.828428, "<=")
    report.check("npa1_vs_tsirelson", abs(res.value - TSIRELSON), 1e-6)


def demo_prbox(args, report: RunReport) -> None:
    f = bell.chsh()
    b = bell.pr_box()
    val = bell.evaluate_functional(f, b)
    report.add("chsh_prbox", val)
    report.check("prbox_value", val, 4.0, "==")
    mem = moments.membership_test(b)
    report.add("aqc_min_eig", mem.min_eig)
    report.check("prbox_outside_aqc", mem.violation, 1e-7, ">", detail="violation must be positive")


def demo_mermin(args, report: RunReport) -> None:
    f = bell.mermin()
    report.check("classical", bell.classical_bound(f), 2.0, "==", detail=f"{f.scenario.strategy_count()} strategies")
    ghz = bell.evaluate_functional(f, quantum.behavior_from_model(quantum.mermin_ghz_model()))
    report.add("ghz", ghz)
    report.check("ghz_value", abs(ghz - 4), 1e-9)
    res = moments.maximize_over_aqc(f, "aqc", tol=args.sdp_tol)
    _require(res)
    report.add("aqc", res.value)
    report.check("aqc_value", abs(res.value - 4), 1e-5)


def demo_aqc_gap(args, report: RunReport) -> None:
    f = bell.i3322()
    hi = moments.maximize_over_aqc(f, "aqc", tol=args.sdp_tol)
    lo = moments.maximize_over_aqc(f, "2", tol=args.sdp_tol)
    _require(hi)
    _require(lo)
    report.add("aqc", hi.value)
    report.add("level2", lo.value)
    report.add("aqc_gap_duality", hi.gap)
    report.add("level2_gap_duality", lo.gap)
    report.check("aqc_minus_level2", hi.value - lo.value, 1e-5, ">")


def demo_roundtrip(args, report: RunReport) -> None:
    rng = np.random.default_rng(args.seed)
    s = bell.Scenario.uniform(2, 2, 2)
    m = quantum.random_model(s, (2, 2), rng)
    g = moments.moment_matrix_of_model(m)
    rec = moments.gns_reconstruct(g)
    gm = theorems.GeneralizedModel.from_reconstruction(rec)
    dev = float(np.max(np.abs(theorems.behavior(gm).table - quantum.behavior_from_model(m).table)))
    report.add("reconstructed_dim", rec.dim)
    report.check("behavior_roundtrip", dev, 1e-8)
    res = moments.maximize_over_aqc(bell.chsh(), "aqc", tol=args.sdp_tol)
    _require(res)
    rec2 = moments.gns_reconstruct(res.moment_matrix)
    report.check("aqc_gram_residual", rec2.gram_residual(res.moment_matrix.gamma), 1e-6)


DEMOS = {
    "tsirelson": demo_tsirelson,
    "prbox": demo_prbox,
    "mermin": demo_mermin,
    "aqc-gap": demo_aqc_gap,
    "reconstruct-roundtrip": demo_roundtrip,
}


def _require(res) -> None:
    if not res.optimal:
        raise SolverError(f"SDP at level {res.level} ended with status {res.status}")


def cmd_demo(args, report: RunReport) -> int:
    DEMOS[args.name](args, report)
    return EXIT_OK if report.passed else EXIT_FAIL


# --------------------------------------------------------------------------- file utilities


def _gns_fixture(args) -> theorems.GeneralizedModel:
    res = moments.maximize_over_aqc(bell.i3322(), "aqc", tol=args.sdp_tol)
    _require(res)
    return theorems.GeneralizedModel.from_reconstruction(moments.gns_reconstruct(res.moment_matrix))


EXPORTS = {
    "chsh": lambda args: fileio.format_functional(bell.chsh(), "CHSH in probability form"),
    "mermin": lambda args: fileio.format_functional(bell.mermin(), "Mermin inequality"),
    "i3322": lambda args: fileio.format_functional(bell.i3322(), "I3322, Collins-Gisin form"),
    "chsh-model": lambda args: fileio.format_quantum_model(quantum.chsh_optimal_model(), "CHSH-optimal singlet model"),
    "ghz-model": lambda args: fileio.format_quantum_model(quantum.mermin_ghz_model(), "GHZ model for Mermin"),
    "gns-i3322": lambda args: fileio.format_generalized_model(_gns_fixture(args), "reconstruction of the I3322 almost-quantum optimum"),
}


def cmd_export(args, report: RunReport) -> int:
    text = EXPORTS[args.name](args)
    Path(args.path).write_text(text)
    report.add("written", args.path)
    return EXIT_OK


def cmd_reconstruct(args, report: RunReport) -> int:
    g = fileio.load_moment_matrix(args.moments)
    report.digests[args.moments] = fileio.digest(args.moments)
    report.check("moment_constraints", g.constraint_residual(), 1e-6)
    rec = moments.gns_reconstruct(g)
    gm = theorems.GeneralizedModel.from_reconstruction(rec)
    report.add("dim", rec.dim)
    report.check("gram_residual", rec.gram_residual(g.gamma), 1e-6)
    Path(args.model).write_text(fileio.format_generalized_model(gm, f"reconstruction of {Path(args.moments).name}"))
    return EXIT_OK if report.passed else EXIT_FAIL


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=None, help="override check tolerances")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--samples", type=int, default=50)
    common.add_argument("--restarts", type=int, default=20)
    common.add_argument("--sdp-tol", type=float, default=1e-9)
    common.add_argument("--out", help="write a key=value report to this path")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="aqclab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bound", parents=[common], help="bound a Bell functional")
    b.add_argument("level", choices=["classical", "quantum-seesaw", "npa1", "npa2", "aqc"])
    b.add_argument("functional", help=".fn file")
    b.add_argument("--level", dest="level_flag", choices=["1", "2", "aqc"], help="alias: moment level for the SDP bounds")
    b.add_argument("--dim", type=int, nargs="+", help="local dimensions for the see-saw")
    b.add_argument("--expect", type=float, help="check the bound against this value within --tol")
    b.add_argument("--save-moments", help="write the optimal moment matrix (.mm)")
    b.add_argument("--save-model", help="write the see-saw optimum (.qm)")
    b.set_defaults(func=cmd_bound)

    v = sub.add_parser("verify", parents=[common], help="run symmetry/permutation checks on a model")
    v.add_argument("model", help=".qm or .gm file")
    v.add_argument("--checks", default="all", help=f"comma list from {','.join(CHECKS)} or 'all'")
    v.set_defaults(func=cmd_verify)

    d = sub.add_parser("demo", parents=[common], help="reproduce a headline number")
    d.add_argument("name", choices=sorted(DEMOS))
    d.set_defaults(func=cmd_demo)

    e = sub.add_parser("export", parents=[common], help="write a built-in functional or model file")
    e.add_argument("name", choices=sorted(EXPORTS))
    e.add_argument("path")
    e.set_defaults(func=cmd_export)

    r = sub.add_parser("reconstruct", parents=[common], help="GNS-reconstruct a .mm file into a .gm model")
    r.add_argument("moments")
    r.add_argument("model")
    r.set_defaults(func=cmd_reconstruct)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if getattr(args, "level_flag", None):
        args.level = {"1": "npa1", "2": "npa2", "aqc": "aqc"}[args.level_flag]
    report = RunReport("aqclab " + " ".join(argv))
    t0 = time.perf_counter()
    try:
        code = args.func(args, report)
    except fileio.ParseError as err:
        print(f"input error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, moments.SolverFailure) as err:
        report.duration = time.perf_counter() - t0
        print(report.render())
        print(f"solver failure: {err}", file=sys.stderr)
        _write(args, report)
        return EXIT_SOLVER
    except (ValueError, linalg.DimensionMismatch) as err:
        print(f"input error: {err}", file=sys.stderr)
        return EXIT_INPUT
    report.duration = time.perf_counter() - t0
    print(report.render())
    _write(args, report)
    return code


def _write(args, report: RunReport) -> None:
    if getattr(args, "out", None):
        Path(args.out).write_text(report.key_values())


if __name__ == "__main__":
    sys.exit(main())
