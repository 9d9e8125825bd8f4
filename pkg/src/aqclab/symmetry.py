"""Local one-parameter unitary groups (rotations, generic "translations") acting on models."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import schur

from . import linalg
from .quantum import ProjectorAssembly, QuantumModel, QuantumState, behavior_from_model

PHASE_CLUSTER_TOL = 1e-8
UNITARY_TOL = 1e-10
AXIOM_TOL = 1e-10


# --------------------------------------------------------------------------- generators


def spin_matrices(dim: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Spin-j matrices ``(J_x, J_y, J_z)`` with ``j = (dim-1)/2`` and ``J_z = diag(j, ..., -j)``."""
    if dim < 1:
        raise linalg.DimensionMismatch("spin representation needs dim >= 1")
    j = (dim - 1) / 2
    m = j - np.arange(dim)
    jz = np.diag(m).astype(complex)
    # <m+1|J+|m> = sqrt(j(j+1) - m(m+1)); row k holds m = j - k
    jp = np.zeros((dim, dim), dtype=complex)
    for k in range(1, dim):
        jp[k - 1, k] = np.sqrt(j * (j + 1) - m[k] * (m[k] + 1))
    jm = jp.conj().T
    return (jp + jm) / 2, (jp - jm) / 2j, jz


@dataclass(frozen=True, eq=False)
class SymmetryGenerator:
    party: int
    generator: np.ndarray
    direction: tuple | str | None = None

    def __post_init__(self):
        g = linalg.as_matrix(self.generator)
        if g.shape[0] != g.shape[1]:
            raise linalg.DimensionMismatch(f"generator must be square, got {g.shape}")
        g = linalg.hermitize(g, 1e-12)
        g.setflags(write=False)
        object.__setattr__(self, "generator", g)

    @property
    def dim(self) -> int:
        return self.generator.shape[0]

    @classmethod
    def rotation(cls, party: int, dim: int, direction: Sequence[float]) -> "SymmetryGenerator":
        k = np.asarray(direction, dtype=float)
        if k.shape != (3,) or not np.isclose(np.linalg.norm(k), 1.0, atol=1e-12):
            raise ValueError(f"rotation axis must be a unit 3-vector, got {direction}")
        jx, jy, jz = spin_matrices(dim)
        return cls(party, k[0] * jx + k[1] * jy + k[2] * jz, tuple(k))

    @classmethod
    def translation(cls, party: int, generator, label: str = "translation") -> "SymmetryGenerator":
        return cls(party, generator, label)

    def unitary(self, theta: float) -> np.ndarray:
        return linalg.one_param_unitary(self.generator, theta)


@dataclass(frozen=True, eq=False)
class SymmetryAction:
    """``{party: (theta, generator)}``; parties without an entry are left alone."""

    terms: Mapping[int, tuple[float, SymmetryGenerator]] = field(default_factory=dict)

    def __post_init__(self):
        terms = dict(self.terms)
        for party, (theta, gen) in terms.items():
            if gen.party != party:
                raise ValueError(f"generator for party {gen.party} placed in slot {party}")
        object.__setattr__(self, "terms", terms)

    def inverse(self) -> "SymmetryAction":
        return SymmetryAction({p: (-t, g) for p, (t, g) in self.terms.items()})

    def scaled(self, factor: float) -> "SymmetryAction":
        return SymmetryAction({p: (factor * t, g) for p, (t, g) in self.terms.items()})


def unitary_of_action(a: SymmetryAction, party: int, dims: Sequence[int]) -> np.ndarray:
    dims = linalg.check_dims(dims)
    if not 0 <= party < len(dims):
        raise linalg.DimensionMismatch(f"party {party} out of range for dims {dims}")
    if party not in a.terms:
        return np.eye(dims[party], dtype=complex)
    theta, gen = a.terms[party]
    if gen.dim != dims[party]:
        raise linalg.DimensionMismatch(
            f"party {party}: generator dimension {gen.dim} != local dimension {dims[party]}"
        )
    return gen.unitary(theta)


def random_action(
    dims: Sequence[int], rng: np.random.Generator, parties: Sequence[int] | None = None, kind: str = "mixed"
) -> SymmetryAction:
    """Random angles on every (or the given) party.

    ``kind='rotation'`` uses spin generators along random axes, ``'translation'``
    random Hermitian generators, ``'mixed'`` picks one of the two per party.
    """
    parties = range(len(dims)) if parties is None else parties
    terms = {}
    for p in parties:
        k = kind if kind != "mixed" else ("rotation", "translation")[int(rng.integers(2))]
        theta = float(rng.uniform(-np.pi, np.pi))
        if k == "rotation":
            axis = rng.standard_normal(3)
            gen = SymmetryGenerator.rotation(p, dims[p], axis / np.linalg.norm(axis))
        else:
            gen = SymmetryGenerator.translation(p, linalg.random_hermitian(dims[p], rng))
        terms[p] = (theta, gen)
    return SymmetryAction(terms)


# --------------------------------------------------------------------------- model transforms


def transform_model(m: QuantumModel, a: SymmetryAction) -> QuantumModel:
    dims = m.dims
    us = [unitary_of_action(a, p, dims) for p in range(len(dims))]
    psi = m.state.amplitudes.reshape(dims)
    for p, u in enumerate(us):
        psi = np.moveaxis(np.tensordot(u, psi, axes=([1], [p])), 0, p)
    stacks = tuple(
        u @ stack @ u.conj().T
        for u, stack in zip(us, m.assembly.projectors)
    )
    return QuantumModel(
        QuantumState.normalized(dims, psi.reshape(-1)),
        ProjectorAssembly(m.scenario, dims, stacks),
    )


def invariance_check(m: QuantumModel, a: SymmetryAction, transformed: QuantumModel | None = None) -> float:
    """Max deviation of the joint table and every marginal table under the action."""
    if transformed is None:
        transformed = transform_model(m, a)
    before = behavior_from_model(m)
    after = behavior_from_model(transformed)
    diff = before.table - after.table
    worst = float(np.max(np.abs(diff)))
    n = m.scenario.n
    # summing the dropped parties' outcome axes gives every marginal at every
    # choice of the dropped parties' inputs at once
    for size in range(1, n):
        for dropped in combinations(range(n), size):
            worst = max(worst, float(np.max(np.abs(diff.sum(axis=dropped)))))
    return worst


# --------------------------------------------------------------------------- group structure


@dataclass
class AxiomReport:
    closure: float
    identity: float
    inverse: float
    associativity: float
    tol: float = AXIOM_TOL

    @property
    def passed(self) -> bool:
        return max(self.closure, self.identity, self.inverse, self.associativity) <= self.tol

    def as_dict(self) -> dict:
        return {
            "closure": self.closure,
            "identity": self.identity,
            "inverse": self.inverse,
            "associativity": self.associativity,
        }


def group_axiom_check(family: SymmetryGenerator, thetas: Sequence[float], tol: float = AXIOM_TOL) -> AxiomReport:
    thetas = [float(t) for t in thetas]
    eye = np.eye(family.dim)
    u = {t: family.unitary(t) for t in thetas}
    closure = identity = inverse = assoc = 0.0
    identity = float(np.max(np.abs(family.unitary(0.0) - eye)))
    for t in thetas:
        identity = max(identity, float(np.max(np.abs(family.unitary(0.0) @ u[t] - u[t]))))
        inverse = max(inverse, float(np.max(np.abs(u[t] @ family.unitary(-t) - eye))))
        for s in thetas:
            closure = max(closure, float(np.max(np.abs(u[t] @ u[s] - family.unitary(t + s)))))
            for r in thetas:
                lhs = (u[t] @ u[s]) @ u[r]
                rhs = u[t] @ (u[s] @ u[r])
                assoc = max(assoc, float(np.max(np.abs(lhs - rhs))))
    return AxiomReport(closure, identity, inverse, assoc, tol)


def spectral_decompose(u, tol: float = UNITARY_TOL, cluster_tol: float = PHASE_CLUSTER_TOL) -> list[tuple[float, np.ndarray]]:
    """``u = sum_k exp(i c_k) E_k`` with distinct phases ``c_k`` in (-pi, pi].

    Unitaries are normal, so a Schur form is diagonal; eigenvalues closer than
    ``cluster_tol`` on the unit circle are merged and their eigenvectors
    re-orthonormalized so each projector is exact.
    """
    u = linalg.as_matrix(u)
    defect = linalg.unitarity_defect(u)
    if defect > tol:
        raise linalg.NotUnitary(f"matrix deviates from unitary by {defect:.3g} > {tol:.1g}")
    # complex Schur form of a normal matrix is diagonal with unitary z
    t, z = schur(u, output="complex")
    lam = np.diag(t)
    phases = np.angle(lam)
    phases = np.where(phases <= -np.pi + 1e-15, np.pi, phases)
    order = np.argsort(phases, kind="stable")
    groups: list[list[int]] = []
    for k in order:
        if groups and abs(np.exp(1j * phases[k]) - np.exp(1j * phases[groups[-1][0]])) < cluster_tol:
            groups[-1].append(k)
        else:
            groups.append([k])
    # phases near +pi and -pi wrap around
    if len(groups) > 1 and abs(np.exp(1j * phases[groups[0][0]]) - np.exp(1j * phases[groups[-1][0]])) < cluster_tol:
        groups[-1].extend(groups.pop(0))
    out = []
    for g in groups:
        vecs, _ = np.linalg.qr(z[:, g])
        c = float(np.angle(np.mean(lam[g])))
        if c <= -np.pi + 1e-15:
            c = np.pi
        out.append((c, vecs @ vecs.conj().T))
    out.sort(key=lambda pe: pe[0])
    return out


def reconstruct(terms: Sequence[tuple[float, np.ndarray]]) -> np.ndarray:
    return sum(np.exp(1j * c) * e for c, e in terms)
