"""Tensor-product quantum models: states, projective assemblies, Born rule, see-saw."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import linalg
from .bell import Behavior, BellFunctional, Scenario, evaluate_functional

log = logging.getLogger(__name__)

NORM_TOL = 1e-10
ASSEMBLY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class QuantumState:
    dims: tuple[int, ...]
    amplitudes: np.ndarray

    def __post_init__(self):
        dims = linalg.check_dims(self.dims)
        psi = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if psi.size != int(np.prod(dims)):
            raise linalg.DimensionMismatch(
                f"state has {psi.size} amplitudes, dims {dims} need {int(np.prod(dims))}"
            )
        norm = np.linalg.norm(psi)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state norm {norm:.12g} is not 1 within {NORM_TOL}")
        psi.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "amplitudes", psi)

    @classmethod
    def normalized(cls, dims, amplitudes) -> "QuantumState":
        psi = np.asarray(amplitudes, dtype=complex).reshape(-1)
        return cls(dims, psi / np.linalg.norm(psi))

    @property
    def dim(self) -> int:
        return self.amplitudes.size


@dataclass(frozen=True, eq=False)
class ProjectorAssembly:
    """``projectors[i]`` has shape ``(m_i, d_i, D_i, D_i)``: input, outcome, local matrix."""

    scenario: Scenario
    dims: tuple[int, ...]
    projectors: tuple[np.ndarray, ...]

    def __post_init__(self):
        dims = linalg.check_dims(self.dims)
        s = self.scenario
        if len(dims) != s.n or len(self.projectors) != s.n:
            raise linalg.DimensionMismatch("dims, projectors and scenario disagree on party count")
        stacks = []
        for i, p in enumerate(self.projectors):
            p = np.array(p, dtype=complex)
            if p.shape != (s.inputs[i], s.outputs[i], dims[i], dims[i]):
                raise linalg.DimensionMismatch(
                    f"party {i}: projector array shape {p.shape} != "
                    f"{(s.inputs[i], s.outputs[i], dims[i], dims[i])}"
                )
            p.setflags(write=False)
            stacks.append(p)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "projectors", tuple(stacks))

    def get(self, party: int, x: int, a: int) -> np.ndarray:
        return self.projectors[party][x, a]

    def embedded(self, party: int, x: int, a: int) -> np.ndarray:
        return linalg.embed_local(self.get(party, x, a), party, self.dims)


@dataclass(frozen=True, eq=False)
class QuantumModel:
    state: QuantumState
    assembly: ProjectorAssembly

    def __post_init__(self):
        if self.state.dims != self.assembly.dims:
            raise linalg.DimensionMismatch(
                f"state dims {self.state.dims} != assembly dims {self.assembly.dims}"
            )

    @property
    def scenario(self) -> Scenario:
        return self.assembly.scenario

    @property
    def dims(self) -> tuple[int, ...]:
        return self.state.dims


class AssemblyViolation(NamedTuple):
    kind: str
    party: int
    input: int
    outcomes: tuple[int, ...]
    residual: float


def validate_assembly(asm: ProjectorAssembly, tol: float = ASSEMBLY_TOL) -> list[AssemblyViolation]:
    report = []
    s = asm.scenario
    for i in range(s.n):
        eye = np.eye(asm.dims[i])
        for x in range(s.inputs[i]):
            stack = asm.projectors[i][x]
            for a in range(s.outputs[i]):
                e = stack[a]
                r = float(np.max(np.abs(e - e.conj().T)))
                if r > tol:
                    report.append(AssemblyViolation("hermiticity", i, x, (a,), r))
                r = float(np.max(np.abs(e @ e - e)))
                if r > tol:
                    report.append(AssemblyViolation("idempotence", i, x, (a,), r))
                for b in range(a + 1, s.outputs[i]):
                    r = float(np.max(np.abs(e @ stack[b])))
                    if r > tol:
                        report.append(AssemblyViolation("orthogonality", i, x, (a, b), r))
            r = float(np.max(np.abs(stack.sum(axis=0) - eye)))
            if r > tol:
                report.append(AssemblyViolation("completeness", i, x, (), r))
    return report


def _check_cell(s: Scenario, inputs, outcomes) -> tuple[tuple[int, ...], tuple[int, ...]]:
    inputs = tuple(int(x) for x in inputs)
    outcomes = tuple(int(a) for a in outcomes)
    if len(inputs) != s.n or len(outcomes) != s.n:
        raise IndexError(f"expected {s.n} inputs and outcomes")
    for i in range(s.n):
        if not 0 <= inputs[i] < s.inputs[i]:
            raise IndexError(f"party {i}: input {inputs[i]} out of range")
        if not 0 <= outcomes[i] < s.outputs[i]:
            raise IndexError(f"party {i}: outcome {outcomes[i]} out of range")
    return inputs, outcomes


def joint_projector(m: QuantumModel, inputs, outcomes) -> np.ndarray:
    inputs, outcomes = _check_cell(m.scenario, inputs, outcomes)
    op = np.eye(int(np.prod(m.dims)), dtype=complex)
    for i, (x, a) in enumerate(zip(inputs, outcomes)):
        op = op @ m.assembly.embedded(i, x, a)
    return op


def born_probability(m: QuantumModel, inputs, outcomes) -> float:
    """``<psi| prod_i E_i^{a_i, x_i} |psi>`` with every projector embedded in the joint space."""
    psi = m.state.amplitudes
    value = np.vdot(psi, joint_projector(m, inputs, outcomes) @ psi)
    if abs(value.imag) > 1e-10:
        raise ValueError(f"Born probability has imaginary part {value.imag:.3g}")
    return float(value.real)


def apply_local(stack: np.ndarray, tensor: np.ndarray, axis: int) -> np.ndarray:
    """Contract ``stack[..., D, D]`` into ``tensor`` along ``axis``; new leading axes go last."""
    lead = stack.ndim - 2
    out = np.tensordot(stack, tensor, axes=([stack.ndim - 1], [axis]))
    # out axes: stack leading axes, new local axis, tensor axes without `axis`
    out = np.moveaxis(out, lead, axis + lead)
    return np.moveaxis(out, list(range(lead)), list(range(out.ndim - lead, out.ndim)))


def behavior_from_model(m: QuantumModel) -> Behavior:
    s = m.scenario
    n = s.n
    psi = m.state.amplitudes.reshape(m.dims)
    t = psi
    for i in range(n):
        t = apply_local(m.assembly.projectors[i], t, i)
    # t axes: D_1..D_n, (m_1, d_1), ..., (m_n, d_n)
    p = np.tensordot(psi.conj(), t, axes=(list(range(n)), list(range(n)))).real
    order = [2 * i + 1 for i in range(n)] + [2 * i for i in range(n)]
    return Behavior(s, p.transpose(order))


def bell_operator(f: BellFunctional, asm: ProjectorAssembly) -> np.ndarray:
    dim = int(np.prod(asm.dims))
    op = np.zeros((dim, dim), dtype=complex)
    for a, x, c in f.nonzero_cells():
        op += c * linalg.kron_all([asm.get(i, x[i], a[i]) for i in range(len(a))])
    return op


# --------------------------------------------------------------------------- see-saw


def _top_eigvec(h: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((h + h.conj().T) / 2)
    top = np.flatnonzero(w >= w[-1] - 1e-12)[0]
    return v[:, top]


def _local_effective(f: BellFunctional, stacks: list[np.ndarray], psi: np.ndarray, dims, p: int) -> np.ndarray:
    """``K[x_p, a_p]`` with ``<B> = sum tr(E_p^{a_p,x_p} K[x_p, a_p])`` for fixed state and others."""
    n = len(dims)
    t = psi.reshape(dims)
    for i in range(n):
        if i != p:
            t = apply_local(stacks[i], t, i)
    # t axes: D_1..D_n then (m_i, d_i) for i != p
    c = f.coefficients
    others = [i for i in range(n) if i != p]
    # coefficient axes ordered (m_i, d_i) for i != p, then (d_p, m_p)
    c_axes = []
    for i in others:
        c_axes += [n + i, i]
    c = c.transpose(c_axes + [p, n + p])
    k_other = 2 * len(others)
    w = np.tensordot(t, c, axes=(list(range(n, n + k_other)), list(range(k_other))))
    # w axes: D_1..D_n, d_p, m_p
    w = np.moveaxis(w, p, 0).reshape(dims[p], -1, c.shape[-2], c.shape[-1])
    ps = np.moveaxis(psi.reshape(dims), p, 0).reshape(dims[p], -1)
    k = np.einsum("lrax,kr->xalk", w, ps.conj())
    return (k + np.conj(np.swapaxes(k, -1, -2))) / 2


def _best_measurement(ks: np.ndarray, current: np.ndarray) -> np.ndarray:
    """Projective measurement maximizing ``sum_a tr(E_a K_a)`` (exact for two outcomes)."""
    d = ks.shape[0]
    dim = ks.shape[1]
    if d == 1:
        return np.eye(dim, dtype=complex)[np.newaxis]
    if d == 2:
        w, v = np.linalg.eigh(ks[0] - ks[1])
        pos = v[:, w >= 0]
        e0 = pos @ pos.conj().T
        return np.stack([e0, np.eye(dim) - e0])

    def value(stack):
        return float(np.real(np.einsum("aij,aji->", stack, ks)))

    best, best_val = current, value(current)
    candidates = [np.linalg.eigh(k)[1] for k in ks]
    candidates += [np.linalg.eigh(ks[a] - ks[b])[1] for a in range(d) for b in range(a + 1, d)]
    for basis in candidates:
        scores = np.real(np.einsum("ia,bij,ja->ab", basis.conj(), ks, basis))
        choice = np.argmax(scores, axis=1)
        stack = np.zeros_like(current)
        for col, a in enumerate(choice):
            stack[a] += np.outer(basis[:, col], basis[:, col].conj())
        val = value(stack)
        if val > best_val + 1e-14:
            best, best_val = stack, val
    return best


def _seesaw_run(f: BellFunctional, dims: tuple[int, ...], rng: np.random.Generator, max_sweeps: int, tol: float):
    s = f.scenario
    stacks = [
        np.array([linalg.random_projective_measurement(dims[i], s.outputs[i], rng) for _ in range(s.inputs[i])])
        for i in range(s.n)
    ]
    value = -np.inf
    psi = None
    for sweep in range(max_sweeps):
        asm = ProjectorAssembly(s, dims, tuple(stacks))
        b = bell_operator(f, asm)
        psi = _top_eigvec(b)
        for p in range(s.n):
            ks = _local_effective(f, stacks, psi, dims, p)
            for x in range(s.inputs[p]):
                stacks[p][x] = _best_measurement(ks[x], stacks[p][x])
        asm = ProjectorAssembly(s, dims, tuple(stacks))
        new_value = float(np.real(np.vdot(psi, bell_operator(f, asm) @ psi)))
        if new_value - value < tol:
            value = max(value, new_value)
            break
        value = new_value
    asm = ProjectorAssembly(s, dims, tuple(stacks))
    psi = _top_eigvec(bell_operator(f, asm))
    return QuantumModel(QuantumState.normalized(dims, psi), asm)


def seesaw_maximize(
    f: BellFunctional,
    dims: Sequence[int],
    restarts: int = 20,
    seed: int = 0,
    max_sweeps: int = 500,
    tol: float = 1e-10,
) -> tuple[float, QuantumModel]:
    """Alternating maximization of ``f`` over states and projective measurements.

    The returned value is evaluated on the returned model, so it is a certified
    lower bound on the quantum maximum.
    """
    dims = linalg.check_dims(dims)
    s = f.scenario
    if len(dims) != s.n or any(s.outputs[i] > dims[i] for i in range(s.n)):
        raise ValueError(f"local dims {dims} cannot host outputs {s.outputs}")
    best_val, best_model = -np.inf, None
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        model = _seesaw_run(f, dims, rng, max_sweeps, tol)
        val = evaluate_functional(f, behavior_from_model(model))
        log.debug("see-saw restart %d: %.12f", r, val)
        if val > best_val:
            best_val, best_model = val, model
    return best_val, best_model


# --------------------------------------------------------------------------- constructors


def qubit_observable_projectors(angle: float) -> np.ndarray:
    """Eigenprojectors (+1 first) of ``cos(angle) Z + sin(angle) X``."""
    obs = np.array([[np.cos(angle), np.sin(angle)], [np.sin(angle), -np.cos(angle)]], dtype=complex)
    eye = np.eye(2)
    return np.stack([(eye + obs) / 2, (eye - obs) / 2])


def pauli_projectors(name: str) -> np.ndarray:
    paulis = {
        "x": np.array([[0, 1], [1, 0]], dtype=complex),
        "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
        "z": np.array([[1, 0], [0, -1]], dtype=complex),
    }
    obs = paulis[name]
    return np.stack([(np.eye(2) + obs) / 2, (np.eye(2) - obs) / 2])


def singlet() -> QuantumState:
    return QuantumState.normalized((2, 2), [0, 1, -1, 0])


def ghz(n: int = 3, phase: float = 0.0) -> QuantumState:
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = 1
    psi[-1] = np.exp(1j * phase)
    return QuantumState.normalized((2,) * n, psi)


def chsh_optimal_model() -> QuantumModel:
    """Singlet with Alice at angles 0, pi/2 and Bob at pi/4, -pi/4 (x-z plane).

    Bob's outcome labels are swapped relative to his observable, which turns the
    singlet's anticorrelation into a CHSH value of +2*sqrt(2).
    """
    s = Scenario.uniform(2, 2, 2)
    alice = np.stack([qubit_observable_projectors(0.0), qubit_observable_projectors(np.pi / 2)])
    bob = np.stack([qubit_observable_projectors(np.pi / 4)[::-1], qubit_observable_projectors(-np.pi / 4)[::-1]])
    return QuantumModel(singlet(), ProjectorAssembly(s, (2, 2), (alice, bob)))


def mermin_ghz_model() -> QuantumModel:
    """GHZ state ``(|000> - |111>)/sqrt(2)``; input 0 measures Y, input 1 measures X."""
    s = Scenario.uniform(3, 2, 2)
    stack = np.stack([pauli_projectors("y"), pauli_projectors("x")])
    return QuantumModel(ghz(3, np.pi), ProjectorAssembly(s, (2, 2, 2), (stack, stack, stack)))


def random_model(scenario: Scenario, dims: Sequence[int], rng: np.random.Generator) -> QuantumModel:
    dims = linalg.check_dims(dims)
    stacks = tuple(
        np.array(
            [linalg.random_projective_measurement(dims[i], scenario.outputs[i], rng) for _ in range(scenario.inputs[i])]
        )
        for i in range(scenario.n)
    )
    psi = linalg.random_state(int(np.prod(dims)), rng)
    return QuantumModel(QuantumState(dims, psi), ProjectorAssembly(scenario, dims, stacks))


def product_model(states: Sequence[np.ndarray], assembly: ProjectorAssembly) -> QuantumModel:
    psi = linalg.kron_all([np.asarray(v, dtype=complex).reshape(-1, 1) for v in states]).reshape(-1)
    return QuantumModel(QuantumState.normalized(assembly.dims, psi), assembly)
