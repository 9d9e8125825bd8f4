"""Dense complex linear algebra used throughout the package.

Matrices are plain ``numpy`` arrays (complex128).  Local party dimensions are
tuples of positive ints whose product is the dimension of the joint space.
"""

from __future__ import annotations

from functools import reduce
from typing import Sequence

import numpy as np

HERMITIAN_TOL = 1e-12


class DimensionMismatch(ValueError):
    pass


class NotHermitian(ValueError):
    pass


class NotUnitary(ValueError):
    pass


def as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d array, got shape {a.shape}")
    return a


def check_dims(dims: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if not dims or any(d < 1 for d in dims):
        raise DimensionMismatch(f"party dimensions must be >= 1, got {dims}")
    return dims


def kron(a, b) -> np.ndarray:
    """Kronecker product, ``(a⊗b)[i*rb + k, j*cb + l] = a[i, j] * b[k, l]``."""
    return np.kron(as_matrix(a), as_matrix(b))


def kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    return reduce(kron, mats)


def embed_local(op, party: int, dims: Sequence[int]) -> np.ndarray:
    """Return ``1 ⊗ ... ⊗ op ⊗ ... ⊗ 1`` with ``op`` in slot ``party``."""
    dims = check_dims(dims)
    op = as_matrix(op)
    if not 0 <= party < len(dims):
        raise DimensionMismatch(f"party {party} out of range for {len(dims)} parties")
    if op.shape != (dims[party], dims[party]):
        raise DimensionMismatch(
            f"party {party}: operator shape {op.shape} does not match local dimension {dims[party]}"
        )
    left = int(np.prod(dims[:party], dtype=int))
    right = int(np.prod(dims[party + 1 :], dtype=int))
    out = op
    if left > 1:
        out = np.kron(np.eye(left), out)
    if right > 1:
        out = np.kron(out, np.eye(right))
    return out


def hermitian_defect(a) -> float:
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        return np.inf
    return float(np.max(np.abs(a - a.conj().T), initial=0.0))


def is_hermitian(a, tol: float = HERMITIAN_TOL) -> bool:
    return hermitian_defect(a) <= tol


def hermitize(a, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Symmetrize ``(a + a†)/2``; refuses inputs further than ``tol`` from Hermitian."""
    a = as_matrix(a)
    defect = hermitian_defect(a)
    if defect > tol:
        raise NotHermitian(f"matrix deviates from Hermitian by {defect:.3g} > {tol:.1g}")
    return (a + a.conj().T) / 2


def hermitian_eig(h, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvector columns of a Hermitian matrix."""
    h = hermitize(h, tol)
    w, v = np.linalg.eigh(h)
    return w, v


def one_param_unitary(generator, theta: float, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """``exp(-i theta M)`` for Hermitian ``M`` (hbar = 1), via its eigendecomposition."""
    w, v = hermitian_eig(generator, tol)
    return (v * np.exp(-1j * theta * w)) @ v.conj().T


def unitarity_defect(u) -> float:
    u = as_matrix(u)
    eye = np.eye(u.shape[0])
    return float(
        max(np.max(np.abs(u @ u.conj().T - eye)), np.max(np.abs(u.conj().T @ u - eye)))
    )


def op_norm(a) -> float:
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


def commutator(a, b) -> np.ndarray:
    return a @ b - b @ a


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary from the QR decomposition of a complex Gaussian matrix."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases


def random_hermitian(d: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return scale * (z + z.conj().T) / 2


def random_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    psi = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return psi / np.linalg.norm(psi)


def random_projective_measurement(
    dim: int, outcomes: int, rng: np.random.Generator
) -> list[np.ndarray]:
    """Complete set of orthogonal projectors in a random basis.

    Basis vectors are distributed over outcomes as evenly as possible, so every
    outcome receives at least one vector whenever ``outcomes <= dim``.
    """
    u = random_unitary(dim, rng)
    groups = np.array_split(np.arange(dim), outcomes)
    return [u[:, g] @ u[:, g].conj().T for g in groups]
