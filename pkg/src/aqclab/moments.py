"""Moment-matrix relaxations: the almost-quantum set and NPA levels 1 and 2.

Operators are words in *letters* ``(party, input, outcome)``.  The last outcome
of every (party, input) is never a letter; it is recovered from completeness
``E^{d-1|x} = 1 - sum_{a<d-1} E^{a|x}``.  A moment matrix is indexed by words
and holds ``Gamma[S, T] = <psi| S^† T |psi>``.

Entries are identified through a canonical *label* of ``S^† T``: letters are
moved past letters of other parties (a stable sort by party keeps each party's
own order), equal neighbours are merged, and same-input letters with different
outcomes annihilate.  A label and its reversal are complex conjugates.  For the
almost-quantum family (at most one letter per party in each word) those are
exactly the reorderings of disjoint-party factors acting on the state.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .bell import Behavior, BellFunctional, Scenario, check_no_signaling, marginal
from . import sdp

log = logging.getLogger(__name__)

Letter = tuple[int, int, int]
Word = tuple[Letter, ...]

MAX_WORDS = 200
CLIP = 1e-9
LEVELS = ("1", "2", "aqc")


class SolverFailure(RuntimeError):
    pass


# --------------------------------------------------------------------------- words


def letters(s: Scenario) -> list[Letter]:
    return [(p, x, a) for p in range(s.n) for x in range(s.inputs[p]) for a in range(s.outputs[p] - 1)]


def _key(w: Word):
    return (len(w), w)


def reduce_word(word: Sequence[Letter]) -> Word | None:
    """Canonical form of an operator product; ``None`` for the zero operator."""
    w = sorted(word, key=lambda l: l[0])  # stable: keeps each party's order
    changed = True
    while changed:
        changed = False
        out: list[Letter] = []
        for l in w:
            if out and out[-1][0] == l[0] and out[-1][1] == l[1]:
                if out[-1][2] != l[2]:
                    return None
                changed = True
                continue
            out.append(l)
        w = out
    return tuple(w)


def adjoint(word: Word) -> Word:
    return reduce_word(tuple(reversed(word)))  # type: ignore[return-value]


def canonical_label(word: Sequence[Letter]) -> tuple[Word | None, bool]:
    """``(label, conj)`` with ``<word> = conj(<label>)`` if ``conj`` else ``<label>``."""
    w = reduce_word(word)
    if w is None:
        return None, False
    wa = adjoint(w)
    if _key(wa) < _key(w):
        return wa, True
    return w, False


def is_self_adjoint(label: Word) -> bool:
    return adjoint(label) == label


def build_word_list(s: Scenario, level: str | int = "aqc") -> list[Word]:
    level = str(level)
    ls = letters(s)
    if level == "1":
        words = [()] + [(l,) for l in ls]
    elif level == "aqc":
        by_party = [[l for l in ls if l[0] == p] for p in range(s.n)]
        words = []
        for size in range(s.n + 1):
            for parties in itertools.combinations(range(s.n), size):
                for combo in itertools.product(*(by_party[p] for p in parties)):
                    words.append(tuple(combo))
    elif level == "2":
        found = {(): None}
        for l in ls:
            found[(l,)] = None
        for l1, l2 in itertools.product(ls, repeat=2):
            w = reduce_word((l1, l2))
            if w is not None:
                found[w] = None
        words = list(found)
    else:
        raise ValueError(f"unknown level {level!r}; expected one of {LEVELS}")
    return sorted(words, key=_key)


def word_text(w: Word) -> str:
    if not w:
        return "1"
    return "*".join(f"E{p + 1}[{a + 1}|{x + 1}]" for p, x, a in w)


def parse_word(text: str) -> Word:
    text = text.strip()
    if text == "1":
        return ()
    out = []
    for part in text.split("*"):
        part = part.strip()
        if not (part.startswith("E") and part.endswith("]") and "[" in part and "|" in part):
            raise ValueError(f"malformed word letter {part!r}")
        p = int(part[1 : part.index("[")])
        a, x = part[part.index("[") + 1 : -1].split("|")
        out.append((p - 1, int(x) - 1, int(a) - 1))
    return tuple(out)


# --------------------------------------------------------------------------- structure


@dataclass(frozen=True, eq=False)
class MomentStructure:
    """Label pattern of a moment matrix: which entries coincide, vanish or are real."""

    scenario: Scenario
    level: str
    words: tuple[Word, ...]
    entry_label: np.ndarray  # (N, N) label index; -1 for a structural zero
    entry_conj: np.ndarray  # (N, N) bool
    labels: tuple[Word, ...]
    label_index: dict
    real: np.ndarray  # per label

    @property
    def size(self) -> int:
        return len(self.words)

    def variables(self) -> list[tuple[int, str]]:
        """Free real coordinates: ``(label, 're'|'im')``, identity label excluded."""
        out = []
        for k, lab in enumerate(self.labels):
            if lab == ():
                continue
            out.append((k, "re"))
            if not self.real[k]:
                out.append((k, "im"))
        return out


@lru_cache(maxsize=32)
def moment_structure(s: Scenario, level: str = "aqc") -> MomentStructure:
    level = str(level)
    words = tuple(build_word_list(s, level))
    n = len(words)
    if n > MAX_WORDS:
        raise ValueError(f"{n} words exceed the limit of {MAX_WORDS}")
    entry_label = np.full((n, n), -1, dtype=int)
    entry_conj = np.zeros((n, n), dtype=bool)
    labels: list[Word] = []
    index: dict = {}
    for i, si in enumerate(words):
        for j, tj in enumerate(words):
            lab, conj = canonical_label(tuple(reversed(si)) + tj)
            if lab is None:
                continue
            if lab not in index:
                index[lab] = len(labels)
                labels.append(lab)
            entry_label[i, j] = index[lab]
            entry_conj[i, j] = conj
    real = np.array([is_self_adjoint(l) for l in labels], dtype=bool)
    return MomentStructure(s, level, words, entry_label, entry_conj, tuple(labels), index, real)


class Constraint(NamedTuple):
    kind: str  # 'one', 'zero', 'equal', 'real'
    entry: tuple[int, int]
    other: tuple[int, int] | None = None
    conj: bool = False


def aqc_constraints(s: Scenario, level: str = "aqc") -> list[Constraint]:
    """Equality constraints on the upper triangle of ``Gamma`` (row-major order).

    Hermiticity is implicit in working with the upper triangle.  Each entry is
    either the normalization ``Gamma[0,0] = 1``, a structural zero
    (orthogonality), equal to the first earlier entry with the same label
    (idempotence merges and cross-party reorderings, ``conj`` marking complex
    conjugation), or a new label; new self-adjoint labels are additionally real.
    """
    st = moment_structure(s, str(level))
    out: list[Constraint] = []
    first: dict[int, tuple[tuple[int, int], bool]] = {}
    n = st.size
    for i in range(n):
        for j in range(i, n):
            k = int(st.entry_label[i, j])
            c = bool(st.entry_conj[i, j])
            if k < 0:
                out.append(Constraint("zero", (i, j)))
            elif st.labels[k] == () and (i, j) == (0, 0):
                out.append(Constraint("one", (0, 0)))
            elif k in first:
                (e, c0) = first[k]
                out.append(Constraint("equal", (i, j), e, c != c0))
            else:
                first[k] = ((i, j), c)
                if st.real[k] and i != j:
                    out.append(Constraint("real", (i, j)))
    return out


def aqc_problem(f: BellFunctional, level: str = "aqc") -> tuple[sdp.SDPProblem, float]:
    """Equality-form SDP over ``Gamma`` built from :func:`aqc_constraints`.

    Returns the problem and the constant term of the objective.
    """
    st = moment_structure(f.scenario, str(level))
    n = st.size
    dims, herm = [n], [True]
    cons = []
    for c in aqc_constraints(f.scenario, level):
        i, j = c.entry
        if c.kind == "one":
            cons.append((sdp.functional(dims, {(0, 0, 0): 1}, herm), 1.0))
        elif c.kind == "zero":
            cons.append((sdp.functional(dims, {(0, i, j): 1}, herm), 0.0))
            if i != j:
                cons.append((sdp.functional(dims, {(0, i, j): 1j}, herm), 0.0))
        elif c.kind == "real":
            cons.append((sdp.functional(dims, {(0, i, j): 1j}, herm), 0.0))
        else:
            k, l = c.other
            s_im = -1.0 if c.conj else 1.0
            # Re G_ij = Re G_kl ;  Im G_ij = +/- Im G_kl  (Re(c z) with c = -i gives Im z)
            cons.append((sdp.functional(dims, {(0, i, j): 1, (0, k, l): -1}, herm), 0.0))
            if i != j or k != l:
                cons.append((sdp.functional(dims, {(0, i, j): -1j, (0, k, l): 1j * s_im}, herm), 0.0))
    coeffs, const = _objective_on_labels(f, st)
    entries = {}
    for k, v in coeffs.items():
        i, j = np.argwhere(st.entry_label == k)[0]
        entries[(0, int(i), int(j))] = entries.get((0, int(i), int(j)), 0) + v
    obj = sdp.functional(dims, entries, herm)
    return sdp.SDPProblem((n,), (True,), obj, tuple(cons), "maximize"), const


# --------------------------------------------------------------------------- behavior <-> moments


def _cg_terms(s: Scenario, outcomes: Sequence[int], inputs: Sequence[int]) -> list[tuple[float, Word]]:
    """Expand ``P(a|x)`` into signed moments of words with one letter per party."""
    per_party = []
    for p, (a, x) in enumerate(zip(outcomes, inputs)):
        d = s.outputs[p]
        if a < d - 1:
            per_party.append([(1.0, (p, x, a))])
        else:
            per_party.append([(1.0, None)] + [(-1.0, (p, x, b)) for b in range(d - 1)])
    terms: dict[Word, float] = {}
    for combo in itertools.product(*per_party):
        coef = float(np.prod([c for c, _ in combo]))
        w = tuple(l for _, l in combo if l is not None)
        terms[w] = terms.get(w, 0.0) + coef
    return [(c, w) for w, c in terms.items() if c != 0]


def _objective_on_labels(f: BellFunctional, st: MomentStructure) -> tuple[dict[int, float], float]:
    coeffs: dict[int, float] = {}
    const = 0.0
    for a, x, v in f.nonzero_cells():
        for c, w in _cg_terms(f.scenario, a, x):
            if w == ():
                const += v * c
                continue
            lab, _ = canonical_label(w)
            if lab not in st.label_index:
                raise ValueError(f"level {st.level} lacks the moment {word_text(w)}; use a higher level")
            k = st.label_index[lab]
            coeffs[k] = coeffs.get(k, 0.0) + v * c
    return coeffs, const


def cg_moments(b: Behavior) -> dict[Word, float]:
    """Moments ``<w>`` of every one-letter-per-party word, read from ``b``.

    Marginals use input 0 for parties outside the word; they are unambiguous
    only for non-signaling ``b``.
    """
    s = b.scenario
    out: dict[Word, float] = {(): 1.0}
    for w in build_word_list(s, "aqc")[1:]:
        parties = [l[0] for l in w]
        m = marginal(b, parties)
        idx = tuple(l[2] for l in w) + tuple(l[1] for l in w)
        out[w] = float(m[idx])
    return out


@dataclass(frozen=True, eq=False)
class MomentMatrix:
    scenario: Scenario
    words: tuple[Word, ...]
    gamma: np.ndarray
    level: str = "aqc"

    @property
    def size(self) -> int:
        return len(self.words)

    def moment(self, w: Sequence[Letter]) -> complex:
        lab, conj = canonical_label(w)
        if lab is None:
            return 0.0
        st = moment_structure(self.scenario, self.level)
        if lab not in st.label_index:
            raise KeyError(f"moment {word_text(lab)} not in this matrix")
        i, j = np.argwhere(st.entry_label == st.label_index[lab])[0]
        v = self.gamma[i, j]
        conj = conj != bool(st.entry_conj[i, j])
        return np.conj(v) if conj else v

    def behavior(self) -> Behavior:
        s = self.scenario
        table = np.zeros(s.shape)
        try:
            for a, x in s.cells():
                table[a + x] = sum(c * np.real(self.moment(w)) for c, w in _cg_terms(s, a, x))
        except KeyError as err:
            raise ValueError(f"level {self.level} cannot fix the full behavior: {err.args[0]}") from None
        return Behavior(s, table)

    def constraint_residual(self) -> float:
        """Worst violation of the label pattern, normalization and zeros."""
        st = moment_structure(self.scenario, self.level)
        g = self.gamma
        worst = abs(g[0, 0] - 1)
        worst = max(worst, float(np.max(np.abs(g - g.conj().T))))
        zero = st.entry_label < 0
        if zero.any():
            worst = max(worst, float(np.max(np.abs(g[zero]))))
        for k in range(len(st.labels)):
            mask = st.entry_label == k
            vals = np.where(st.entry_conj[mask], np.conj(g[mask]), g[mask])
            worst = max(worst, float(np.max(np.abs(vals - vals[0]))))
            if st.real[k]:
                worst = max(worst, float(np.max(np.abs(np.imag(vals)))))
        return float(worst)

    def min_eig(self) -> float:
        return float(np.linalg.eigvalsh((self.gamma + self.gamma.conj().T) / 2)[0])


def moment_matrix_from_operators(
    s: Scenario, state: np.ndarray, op: Callable[[int, int, int], np.ndarray], level: str = "aqc"
) -> MomentMatrix:
    """``Gamma[S,T] = <S psi, T psi>`` for explicit operators (``op(p, x, a)`` on the full space)."""
    words = tuple(build_word_list(s, level))
    psi = np.asarray(state, dtype=complex).reshape(-1)
    vecs = []
    for w in words:
        v = psi
        for l in reversed(w):
            v = op(*l) @ v
        vecs.append(v)
    vmat = np.array(vecs).T
    return MomentMatrix(s, words, vmat.conj().T @ vmat, str(level))


def moment_matrix_of_model(m, level: str = "aqc") -> MomentMatrix:
    """Moment matrix of a :class:`~aqclab.quantum.QuantumModel`."""
    return moment_matrix_from_operators(m.scenario, m.state.amplitudes, m.assembly.embedded, level)


# --------------------------------------------------------------------------- SDPs


def _lmi_data(st: MomentStructure, fixed: dict[int, complex] | None = None):
    """``Gamma(y) = F0 + sum_j y_j F_j`` over the free label coordinates."""
    fixed = dict(fixed or {})
    fixed.setdefault(st.label_index[()], 1.0)
    n = st.size
    lab = st.entry_label
    conj = st.entry_conj
    f0 = np.zeros((n, n), dtype=complex)
    for k, val in fixed.items():
        mask = lab == k
        f0[mask] = np.where(conj[mask], np.conj(val), val)
    var = [(k, part) for k, part in st.variables() if k not in fixed]
    fs = []
    for k, part in var:
        mask = lab == k
        f = np.zeros((n, n), dtype=complex)
        if part == "re":
            f[mask] = 1.0
        else:
            f[mask] = np.where(conj[mask], -1j, 1j)
        fs.append(f)
    return f0, fs, var


@dataclass
class AQCResult:
    value: float
    moment_matrix: MomentMatrix
    status: str
    level: str
    gap: float
    iterations: int
    variables: int

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def maximize_over_aqc(f: BellFunctional, level: str = "aqc", tol: float = 1e-9) -> AQCResult:
    """Maximize ``f`` over the moment relaxation at ``level`` (default: almost-quantum)."""
    level = str(level)
    st = moment_structure(f.scenario, level)
    coeffs, const = _objective_on_labels(f, st)
    f0, fs, var = _lmi_data(st)
    c = np.array([coeffs.get(k, 0.0) if part == "re" else 0.0 for k, part in var])
    sol = sdp.solve_lmi([f0], [[fj] for fj in fs], c, [True], tol=tol)
    gamma = sol.matrices[0]
    mm = MomentMatrix(f.scenario, st.words, gamma, level)
    log.info("level %s: %d words, %d variables, status %s", level, st.size, len(var), sol.status)
    return AQCResult(sol.value + const, mm, sol.status, level, sol.gap, sol.iterations, len(var))


@dataclass
class MembershipResult:
    feasible: bool
    violation: float
    min_eig: float
    signaling: float
    status: str
    moment_matrix: MomentMatrix | None = None


def membership_test(b: Behavior, level: str = "aqc", tol: float = 1e-7, sdp_tol: float = 1e-9) -> MembershipResult:
    """Decide whether ``b`` admits a PSD moment matrix at ``level``.

    Maximizes the smallest eigenvalue ``t`` of ``Gamma`` over the free moments;
    ``violation = max(0, -t)``.  A signaling ``b`` is rejected outright since its
    moments are not well defined.
    """
    level = str(level)
    s = b.scenario
    ns = check_no_signaling(b)
    st = moment_structure(s, level)
    mom = cg_moments(b)
    fixed = {}
    for w, v in mom.items():
        lab, _ = canonical_label(w)
        if lab in st.label_index:
            fixed[st.label_index[lab]] = v
    f0, fs, var = _lmi_data(st, fixed)
    n = st.size
    fs = fs + [-np.eye(n, dtype=complex)]
    c = np.zeros(len(fs))
    c[-1] = 1.0
    sol = sdp.solve_lmi([f0], [[fj] for fj in fs], c, [True], tol=sdp_tol)
    if sol.status not in ("optimal", "max-iterations"):
        raise SolverFailure(f"membership SDP ended with status {sol.status}")
    t = sol.value
    gamma = sol.matrices[0] + t * np.eye(n)
    violation = max(0.0, -t)
    feasible = violation <= tol and ns <= 1e-9
    return MembershipResult(feasible, max(violation, ns), t, ns, sol.status, MomentMatrix(s, st.words, gamma, level))


# --------------------------------------------------------------------------- GNS


@dataclass(frozen=True, eq=False)
class ReconstructedModel:
    scenario: Scenario
    dim: int
    state: np.ndarray
    operators: tuple[np.ndarray, ...]  # per party (m, d, dim, dim)
    vectors: np.ndarray  # (dim, N) word vectors
    words: tuple[Word, ...]
    fit_residual: float  # worst least-squares residual of E v_w = v_{Ew}

    def op(self, p: int, x: int, a: int) -> np.ndarray:
        return self.operators[p][x, a]

    def gram_residual(self, gamma: np.ndarray) -> float:
        return float(np.max(np.abs(self.vectors.conj().T @ self.vectors - gamma)))


def gns_reconstruct(g: MomentMatrix, psd_tol: float = 1e-8, clip: float = CLIP) -> ReconstructedModel:
    """Factor ``Gamma = V^† V`` and realize each letter on the span of the columns of ``V``."""
    gamma = (g.gamma + g.gamma.conj().T) / 2
    w, u = np.linalg.eigh(gamma)
    if w[0] < -psd_tol:
        raise ValueError(f"moment matrix has eigenvalue {w[0]:.3g} below -{psd_tol:g}")
    keep = w > clip
    vmat = (u[:, keep] * np.sqrt(w[keep])).conj().T  # (r, N), V^† V = Gamma clipped
    r = vmat.shape[0]
    index = {word: k for k, word in enumerate(g.words)}
    s = g.scenario
    ops = []
    worst = 0.0
    eye = np.eye(r, dtype=complex)
    for p in range(s.n):
        stack = np.zeros((s.inputs[p], s.outputs[p], r, r), dtype=complex)
        for x in range(s.inputs[p]):
            for a in range(s.outputs[p] - 1):
                cols, targets = [], []
                for k, word in enumerate(g.words):
                    t = reduce_word(((p, x, a),) + word)
                    if t is None:
                        cols.append(k)
                        targets.append(np.zeros(r, dtype=complex))
                    elif t in index:
                        cols.append(k)
                        targets.append(vmat[:, index[t]])
                src = vmat[:, cols]
                tgt = np.array(targets).T
                # E src = tgt, minimum-norm least squares
                sol = np.linalg.lstsq(src.T, tgt.T, rcond=None)[0]
                e = sol.T
                worst = max(worst, float(np.max(np.abs(e @ src - tgt), initial=0.0)))
                stack[x, a] = e
            stack[x, s.outputs[p] - 1] = eye - stack[x, : s.outputs[p] - 1].sum(axis=0)
        ops.append(stack)
    return ReconstructedModel(s, r, vmat[:, index[()]], tuple(ops), vmat, tuple(g.words), worst)
