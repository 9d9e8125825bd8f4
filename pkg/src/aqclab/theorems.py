"""Numerical checks of permutation identities, commutation and symmetry consequences.

Everything here operates on a :class:`GeneralizedModel`: a state and one operator
per (party, input, outcome) on a common space.  Tensor-backed models keep
their operators local and multiply them factor by factor, so products of
operators on distinct parties are computed as Kronecker products of per-party
products; this makes cross-party reorderings exactly equal, as they are in
the tensor-product algebra.  Models without tensor structure (for example
moment-matrix reconstructions) multiply dense matrices in the order given.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import linalg
from .bell import Behavior, Scenario
from .quantum import QuantumModel
from .symmetry import SymmetryAction, SymmetryGenerator, random_action, spectral_decompose

MAX_ENUMERATED_PARTIES = 5
PERMUTATION_SAMPLES = 100
FIRST_ORDER_THETAS = (1e-2, 1e-3, 1e-4)

Factor = tuple[int, np.ndarray]  # (party, operator); local when the model is tensor-backed


@dataclass(frozen=True, eq=False)
class GeneralizedModel:
    scenario: Scenario
    state: np.ndarray
    operators: tuple[np.ndarray, ...]  # per party (m, d, k, k), k local or full dim
    dims: tuple[int, ...] | None = None

    def __post_init__(self):
        psi = np.asarray(self.state, dtype=complex).reshape(-1)
        if abs(np.linalg.norm(psi) - 1) > 1e-9:
            raise ValueError(f"state norm {np.linalg.norm(psi):.12g} is not 1 within 1e-9")
        ops = tuple(np.asarray(o, dtype=complex) for o in self.operators)
        s = self.scenario
        if len(ops) != s.n:
            raise linalg.DimensionMismatch(f"{len(ops)} operator stacks for {s.n} parties")
        if self.dims is not None:
            dims = linalg.check_dims(self.dims)
            if int(np.prod(dims)) != psi.size:
                raise linalg.DimensionMismatch(f"dims {dims} do not multiply to {psi.size}")
            sizes = dims
        else:
            dims = None
            sizes = (psi.size,) * s.n
        for p, o in enumerate(ops):
            want = (s.inputs[p], s.outputs[p], sizes[p], sizes[p])
            if o.shape != want:
                raise linalg.DimensionMismatch(f"party {p}: operator array {o.shape} != {want}")
        object.__setattr__(self, "state", psi)
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "dims", dims)

    @property
    def dim(self) -> int:
        return self.state.size

    @property
    def is_tensor(self) -> bool:
        return self.dims is not None

    def local(self, p: int, x: int, a: int) -> np.ndarray:
        return self.operators[p][x, a]

    def full(self, p: int, x: int, a: int) -> np.ndarray:
        if self.dims is None:
            return self.operators[p][x, a]
        return linalg.embed_local(self.operators[p][x, a], p, self.dims)

    def local_size(self, p: int) -> int:
        return self.operators[p].shape[-1]

    @classmethod
    def from_quantum(cls, m: QuantumModel) -> "GeneralizedModel":
        return cls(m.scenario, m.state.amplitudes, m.assembly.projectors, m.dims)

    @classmethod
    def from_reconstruction(cls, rec) -> "GeneralizedModel":
        psi = rec.state / np.linalg.norm(rec.state)
        return cls(rec.scenario, psi, rec.operators, None)

    def assembly_residuals(self) -> dict[str, float]:
        """Worst hermiticity, idempotence, orthogonality and completeness defects."""
        out = dict.fromkeys(("hermiticity", "idempotence", "orthogonality", "completeness"), 0.0)
        for p, stack in enumerate(self.operators):
            k = stack.shape[-1]
            for x in range(stack.shape[0]):
                es = stack[x]
                out["completeness"] = max(out["completeness"], float(np.max(np.abs(es.sum(axis=0) - np.eye(k)))))
                for a, e in enumerate(es):
                    out["hermiticity"] = max(out["hermiticity"], linalg.hermitian_defect(e))
                    out["idempotence"] = max(out["idempotence"], float(np.max(np.abs(e @ e - e))))
                    for b in range(a + 1, len(es)):
                        out["orthogonality"] = max(out["orthogonality"], float(np.max(np.abs(e @ es[b]))))
        return out


def product(m: GeneralizedModel, factors: Sequence[Factor]) -> np.ndarray:
    """Full matrix of the ordered product of ``factors``."""
    if m.dims is None:
        out = np.eye(m.dim, dtype=complex)
        for _, op in factors:
            out = out @ op
        return out
    locals_ = [np.eye(d, dtype=complex) for d in m.dims]
    for p, op in factors:
        locals_[p] = locals_[p] @ op
    return linalg.kron_all(locals_)


def behavior(m: GeneralizedModel) -> Behavior:
    s = m.scenario
    table = np.zeros(s.shape)
    for a, x in s.cells():
        op = product(m, [(p, m.local(p, x[p], a[p])) for p in range(s.n)])
        table[a + x] = float(np.real(np.vdot(m.state, op @ m.state)))
    return Behavior(s, table)


# --------------------------------------------------------------------------- permutations


def permutations(n: int, rng: np.random.Generator | None = None, samples: int = PERMUTATION_SAMPLES):
    """All permutations of ``range(n)`` for small ``n``; otherwise a seeded sample."""
    if n <= MAX_ENUMERATED_PARTIES:
        return list(itertools.permutations(range(n)))
    rng = np.random.default_rng(0) if rng is None else rng
    return [tuple(int(i) for i in rng.permutation(n)) for _ in range(samples)]


def _perm_residual(m: GeneralizedModel, blocks: Sequence[Sequence[Factor]], perms) -> float:
    """Max over ``perms`` of ``||(B_1...B_k - B_pi(1)...B_pi(k)) psi||`` for factor blocks ``B``."""
    ref = product(m, [f for b in blocks for f in b]) @ m.state
    worst = 0.0
    for pi in perms:
        v = product(m, [f for i in pi for f in blocks[i]]) @ m.state
        worst = max(worst, float(np.linalg.norm(ref - v)))
    return worst


def permutation_residual(m: GeneralizedModel, inputs: Sequence[int], outcomes: Sequence[int], rng=None) -> float:
    n = m.scenario.n
    if len(inputs) != n or len(outcomes) != n:
        raise ValueError("one input and one outcome per party are required")
    blocks = [[(p, m.local(p, inputs[p], outcomes[p]))] for p in range(n)]
    return _perm_residual(m, blocks, permutations(n, rng))


def max_permutation_residual(m: GeneralizedModel, rng=None) -> float:
    """:func:`permutation_residual` maximized over every input and outcome tuple."""
    s = m.scenario
    return max(permutation_residual(m, x, a, rng) for a, x in s.cells())


# --------------------------------------------------------------------------- actions


def party_unitary(m: GeneralizedModel, party: int, theta: float, generator: SymmetryGenerator) -> np.ndarray:
    """``exp(-i theta M)`` in the representation ``m`` uses for ``party``."""
    k = m.local_size(party)
    if generator.dim != k:
        raise linalg.DimensionMismatch(f"party {party}: generator dimension {generator.dim} != {k}")
    return generator.unitary(theta)


def action_unitaries(m: GeneralizedModel, a: SymmetryAction) -> dict[int, np.ndarray]:
    return {p: party_unitary(m, p, t, g) for p, (t, g) in a.terms.items()}


def algebra_generator(m: GeneralizedModel, party: int, rng: np.random.Generator) -> SymmetryGenerator:
    """Random Hermitian element of the span of one party's operators."""
    stack = m.operators[party]
    h = rng.standard_normal(stack.shape[:2])
    g = np.tensordot(h, stack, axes=([0, 1], [0, 1]))
    return SymmetryGenerator(party, (g + g.conj().T) / 2, "algebra")


def sample_action(m: GeneralizedModel, rng: np.random.Generator, parties: Sequence[int] | None = None) -> SymmetryAction:
    """Random local action: spin/Hermitian generators on tensor models, operator-algebra
    generators on models without tensor structure."""
    parties = list(range(m.scenario.n)) if parties is None else list(parties)
    if m.dims is not None:
        return random_action(m.dims, rng, parties)
    terms = {}
    for p in parties:
        terms[p] = (float(rng.uniform(-np.pi, np.pi)), algebra_generator(m, p, rng))
    return SymmetryAction(terms)


def mixed_permutation_residual(
    m: GeneralizedModel, a: SymmetryAction, parties_u: Sequence[int], parties_e: Sequence[int], rng=None
) -> float:
    """Reorderings of ``prod_{i in I} U_i prod_{j in J} E_j`` acting on the state.

    Maximized over the inputs and outcomes of the ``J`` parties and over
    permutations of the disjoint-party factors.
    """
    iset, jset = sorted(set(parties_u)), sorted(set(parties_e))
    if set(iset) & set(jset):
        raise ValueError(f"party subsets overlap: {sorted(set(iset) & set(jset))}")
    us = action_unitaries(m, a)
    eye = {p: np.eye(m.local_size(p), dtype=complex) for p in iset}
    ublocks = [[(p, us.get(p, eye[p]))] for p in iset]
    s = m.scenario
    k = len(iset) + len(jset)
    perms = permutations(k, rng)
    worst = 0.0
    for xs in itertools.product(*(range(s.inputs[j]) for j in jset)):
        for outs in itertools.product(*(range(s.outputs[j]) for j in jset)):
            eblocks = [[(j, m.local(j, x, o))] for j, x, o in zip(jset, xs, outs)]
            worst = max(worst, _perm_residual(m, ublocks + eblocks, perms))
    return worst


# --------------------------------------------------------------------------- input extension


@dataclass
class ExtensionStage:
    party: int
    outcomes: int
    local_dim: int
    residual: float

    @property
    def degenerate(self) -> bool:
        return self.outcomes < self.local_dim


def extend_inputs(m: GeneralizedModel, a: SymmetryAction, rng=None) -> list[ExtensionStage]:
    """Add each acted-on party's unitary eigenprojectors as a new input, one party at a time.

    After each stage the permutation residual is maximized over every
    full-length word drawn from the enlarged input sets.
    """
    us = action_unitaries(m, a)
    extra: dict[int, list[np.ndarray]] = {}
    stages = []
    n = m.scenario.n
    perms = permutations(n, rng)
    for p in sorted(us):
        terms = spectral_decompose(us[p])
        extra[p] = [e for _, e in terms]
        settings = []
        for q in range(n):
            opts = [list(m.operators[q][x]) for x in range(m.scenario.inputs[q])]
            if q in extra:
                opts.append(extra[q])
            settings.append(opts)
        worst = 0.0
        for choice in itertools.product(*settings):
            for outs in itertools.product(*(range(len(c)) for c in choice)):
                blocks = [[(q, choice[q][o])] for q, o in enumerate(outs)]
                worst = max(worst, _perm_residual(m, blocks, perms))
        stages.append(ExtensionStage(p, len(terms), m.local_size(p), worst))
    return stages


# --------------------------------------------------------------------------- commutators


@dataclass
class CommutatorAudit:
    value: float
    where: tuple | None = None


def commutator_audit(m: GeneralizedModel) -> CommutatorAudit:
    s = m.scenario
    best = CommutatorAudit(0.0, None)
    for i, j in itertools.combinations(range(s.n), 2):
        for xi, ai, xj, aj in itertools.product(
            range(s.inputs[i]), range(s.outputs[i]), range(s.inputs[j]), range(s.outputs[j])
        ):
            ei, ej = (i, m.local(i, xi, ai)), (j, m.local(j, xj, aj))
            c = product(m, [ei, ej]) - product(m, [ej, ei])
            v = linalg.op_norm(c)
            if best.where is None or v > best.value:
                best = CommutatorAudit(v, (i, xi, ai, j, xj, aj))
    return best


def commuting_repair(m: GeneralizedModel) -> GeneralizedModel:
    """Replace every party's operators by projectors diagonal in one common basis.

    The basis diagonalizes a generic Hermitian combination of all operators;
    each operator is rounded to the diagonal projector closest to it (largest
    diagonal weight per basis vector).  The result commutes exactly but in
    general reproduces a different behavior.
    """
    s = m.scenario
    rng = np.random.default_rng(0)
    d = m.dim
    h = np.zeros((d, d), dtype=complex)
    for p in range(s.n):
        for x in range(s.inputs[p]):
            for a in range(s.outputs[p]):
                h += rng.standard_normal() * m.full(p, x, a)
    _, basis = np.linalg.eigh((h + h.conj().T) / 2)
    stacks = []
    for p in range(s.n):
        stack = np.zeros((s.inputs[p], s.outputs[p], d, d), dtype=complex)
        for x in range(s.inputs[p]):
            weights = np.array([np.real(np.diag(basis.conj().T @ m.full(p, x, a) @ basis)) for a in range(s.outputs[p])])
            pick = np.argmax(weights, axis=0)
            for a in range(s.outputs[p]):
                cols = basis[:, pick == a]
                stack[x, a] = cols @ cols.conj().T
        stacks.append(stack)
    return GeneralizedModel(s, m.state, tuple(stacks), None)


# --------------------------------------------------------------------------- unitary-commutator reduction


@dataclass
class ReductionReport:
    pairs: list[dict] = field(default_factory=list)

    @property
    def max_inferred(self) -> float:
        return max((p["inferred"] for p in self.pairs), default=0.0)

    @property
    def max_discrepancy(self) -> float:
        return max((abs(p["inferred"] - p["direct"]) for p in self.pairs), default=0.0)

    @property
    def max_condition(self) -> float:
        return max((p["condition"] for p in self.pairs), default=1.0)


def _outcome_unitary(es: np.ndarray, theta: float) -> np.ndarray:
    """``exp(-i theta M)`` with ``M = sum_a a E^a``."""
    gen = np.tensordot(np.arange(len(es), dtype=float), es, axes=(0, 0))
    return linalg.one_param_unitary((gen + gen.conj().T) / 2, theta)


def unitary_commutation_reduction(m: GeneralizedModel, thetas: np.ndarray) -> ReductionReport:
    """Infer projector commutators from commutators of the unitaries they generate.

    For parties ``i != j`` and inputs ``x_i, x_j`` let ``U(theta) = sum_a
    exp(-i theta a) E^a``.  Then ``[U_i(t_i), U_j(t_j)] = sum_{a,b}
    exp(-i(a t_i + b t_j)) [E_i^a, E_j^b]``; sampling ``(t_i, t_j)`` at ``thetas``
    (shape ``(K, 2)``) gives a linear system for the ``d_i d_j`` commutators.
    """
    thetas = np.asarray(thetas, dtype=float).reshape(-1, 2)
    s = m.scenario
    report = ReductionReport()
    for i, j in itertools.combinations(range(s.n), 2):
        di, dj = s.outputs[i], s.outputs[j]
        if len(thetas) < di * dj:
            raise ValueError(f"{len(thetas)} angle pairs cannot determine {di * dj} commutators for parties {i},{j}")
        coef = np.exp(
            -1j * (np.outer(thetas[:, 0], np.arange(di))[:, :, None] + np.outer(thetas[:, 1], np.arange(dj))[:, None, :])
        ).reshape(len(thetas), -1)
        cond = float(np.linalg.cond(coef))
        for xi in range(s.inputs[i]):
            for xj in range(s.inputs[j]):
                ei = np.array([m.full(i, xi, a) for a in range(di)])
                ej = np.array([m.full(j, xj, b) for b in range(dj)])
                rhs = []
                for ti, tj in thetas:
                    ui, uj = _outcome_unitary(ei, ti), _outcome_unitary(ej, tj)
                    rhs.append((ui @ uj - uj @ ui).reshape(-1))
                sol = np.linalg.lstsq(coef, np.array(rhs), rcond=None)[0]
                for k, (a, b) in enumerate(itertools.product(range(di), range(dj))):
                    inferred = linalg.op_norm(sol[k].reshape(m.dim, m.dim))
                    direct = linalg.op_norm(ei[a] @ ej[b] - ej[b] @ ei[a])
                    report.pairs.append(
                        {"parties": (i, j), "inputs": (xi, xj), "outcomes": (a, b),
                         "inferred": inferred, "direct": direct, "condition": cond}
                    )
    return report


def sample_angle_pairs(k: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-np.pi, np.pi, size=(k, 2))


# --------------------------------------------------------------------------- first order


@dataclass
class FirstOrderReport:
    thetas: tuple[float, ...]
    residuals: tuple[float, ...]
    slope: float
    four_term: float
    exact_invariance: float

    def passed(self, four_tol: float = 1e-8, min_slope: float = 1.9) -> bool:
        if all(r <= 1e-15 for r in self.residuals):
            return self.four_term <= four_tol
        return self.four_term <= four_tol and self.slope >= min_slope


def first_order_check(
    m: GeneralizedModel,
    generator: SymmetryGenerator,
    inputs: Sequence[int],
    outcomes: Sequence[int],
    thetas: Sequence[float] = FIRST_ORDER_THETAS,
    rng=None,
) -> FirstOrderReport:
    """Linearized single-party action on a Born probability.

    With ``U = 1 - i t M`` on party ``p = generator.party``, the probability
    ``<psi| U^† U E_p U^† prod_{j!=p} E_j U |psi>`` differs from the
    untransformed one by ``r(t)``.  The first-order coefficient is the
    four-term combination
    ``<M pi(prod E)> - <pi(M prod E)> + <pi(E_p M prod_{j!=p} E)> - <pi(prod E) M>``
    (party ``p``'s factors kept together inside every reordering ``pi``); it
    vanishes when ``M`` commutes with the other parties' operators, leaving
    ``r(t) = O(t^2)``.
    """
    p = generator.party
    n = m.scenario.n
    k = m.local_size(p)
    if generator.dim != k:
        raise linalg.DimensionMismatch(f"generator dimension {generator.dim} != {k}")
    mloc = generator.generator
    eye = np.eye(k, dtype=complex)
    psi = m.state
    es = [m.local(q, inputs[q], outcomes[q]) for q in range(n)]

    def full(op):
        return product(m, [(p, op)])

    others = product(m, [(q, es[q]) for q in range(n) if q != p])
    p0 = np.vdot(psi, full(es[p]) @ others @ psi)
    residuals = []
    for t in thetas:
        u = eye - 1j * t * mloc
        ud = eye + 1j * t * mloc
        op = full(ud @ u @ es[p] @ ud) @ others @ full(u)
        residuals.append(float(abs(np.vdot(psi, op @ psi) - p0)))
    logs = np.log(np.maximum(residuals, 1e-300))
    slope = float(np.polyfit(np.log(thetas), logs, 1)[0]) if min(residuals) > 0 else math.nan

    four = 0.0
    mfull = full(mloc)
    for pi in permutations(n, rng):
        def ordered(pblock):
            blocks = {q: [(q, es[q])] for q in range(n) if q != p}
            blocks[p] = [(p, op) for op in pblock]
            return product(m, [f for q in pi for f in blocks[q]])

        t1 = np.vdot(psi, mfull @ ordered([es[p]]) @ psi)
        t2 = np.vdot(psi, ordered([mloc, es[p]]) @ psi)
        t3 = np.vdot(psi, ordered([es[p], mloc]) @ psi)
        t4 = np.vdot(psi, ordered([es[p]]) @ mfull @ psi)
        four = max(four, float(abs(t1 - t2 + t3 - t4)))

    # the exact unitary leaves the probability unchanged for commuting models
    u = generator.unitary(thetas[0])
    op = full(u.conj().T @ u @ es[p] @ u.conj().T) @ others @ full(u)
    exact = float(abs(np.vdot(psi, op @ psi) - p0))
    return FirstOrderReport(tuple(thetas), tuple(residuals), slope, four, exact)


# --------------------------------------------------------------------------- signaling


def signaling_probe(m: GeneralizedModel, u_i: tuple[int, np.ndarray], u_j: tuple[int, np.ndarray]) -> float:
    """Total-variation distance of party j's statistics on ``U_j psi`` vs ``U_i U_j U_i^† psi``.

    ``u_i`` and ``u_j`` are ``(party, unitary)`` pairs in the model's
    representation; the maximum over party j's inputs is returned.
    """
    (i, ui), (j, uj) = u_i, u_j
    if i == j:
        raise ValueError("signaling probe needs two distinct parties")
    for q, u in ((i, ui), (j, uj)):
        if u.shape != (m.local_size(q), m.local_size(q)):
            raise linalg.DimensionMismatch(f"party {q}: unitary shape {u.shape}")
    psi = m.state
    plain = product(m, [(j, uj)]) @ psi
    sandwich = product(m, [(i, ui), (j, uj), (i, ui.conj().T)]) @ psi
    s = m.scenario
    worst = 0.0
    for x in range(s.inputs[j]):
        p1 = np.array([np.real(np.vdot(plain, m.full(j, x, a) @ plain)) for a in range(s.outputs[j])])
        p2 = np.array([np.real(np.vdot(sandwich, m.full(j, x, a) @ sandwich)) for a in range(s.outputs[j])])
        worst = max(worst, 0.5 * float(np.sum(np.abs(p1 - p2))))
    return worst


def overlapping_qubit_model() -> GeneralizedModel:
    """Two "parties" measuring Z and X on one shared qubit, state |0>."""
    s = Scenario((1, 1), (2, 2))
    z = np.array([np.diag([1, 0]), np.diag([0, 1])], dtype=complex)[None]
    xp = np.array([[0.5, 0.5], [0.5, 0.5]], dtype=complex)
    x = np.array([xp, np.eye(2) - xp])[None]
    return GeneralizedModel(s, np.array([1, 0], dtype=complex), (z, x), None)


# --------------------------------------------------------------------------- invariance


def generalized_invariance(m: GeneralizedModel, a: SymmetryAction) -> float:
    """Max change of any Born probability when the state gets ``prod_p U_p`` and each
    party's operators get ``U_p E U_p^†``.

    For tensor-backed models this equals the usual joint-table deviation; without
    tensor structure the local unitaries need not commute with other parties'
    operators and the deviation measures that failure.
    """
    us = action_unitaries(m, a)
    s = m.scenario
    order = [(p, us[p]) for p in sorted(us)]
    psi2 = product(m, order) @ m.state
    worst = 0.0
    for a_, x in s.cells():
        f0 = [(p, m.local(p, x[p], a_[p])) for p in range(s.n)]
        f1 = []
        for p, e in f0:
            if p in us:
                f1 += [(p, us[p]), (p, e), (p, us[p].conj().T)]
            else:
                f1.append((p, e))
        p0 = np.real(np.vdot(m.state, product(m, f0) @ m.state))
        p1 = np.real(np.vdot(psi2, product(m, f1) @ psi2))
        worst = max(worst, float(abs(p1 - p0)))
    return worst
