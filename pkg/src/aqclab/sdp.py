"""Dense primal-dual interior-point solver for small semidefinite programs.

Two entry points:

* :func:`solve` takes an :class:`SDPProblem` in equality form
  ``max <C, X>  s.t.  <A_k, X> = b_k,  X ⪰ 0`` over a block-diagonal variable
  whose blocks are real symmetric or complex Hermitian.
* :func:`solve_lmi` takes a linear matrix inequality
  ``max c·y  s.t.  F0 + sum_j y_j F_j ⪰ 0`` with free real ``y``.

:func:`solve` removes dependent constraints, parametrizes the affine solution
set by an orthonormal null-space basis and hands the resulting LMI to
:func:`solve_lmi`.  Hermitian blocks are embedded as real symmetric blocks of
twice the size, ``H -> [[Re H, -Im H], [Im H, Re H]]``, and the real problem is
solved by an infeasible-start path-following method with the HKM search
direction and Mehrotra's predictor-corrector.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

MAX_BLOCK_DIM = 200
STEP_FRACTION = 0.98
MAX_ITER = 200
DIVERGENCE = 1e8
PRESOLVE_RANK_TOL = 1e-10


class SDPError(ValueError):
    pass


# --------------------------------------------------------------------------- problem data


@dataclass(frozen=True, eq=False)
class LinearFunctional:
    """``value(X) = sum_b Re tr(F_b^† X_b)``, stored with Hermitian-symmetrized ``F_b``."""

    blocks: tuple[np.ndarray, ...]

    def __call__(self, xs: Sequence[np.ndarray]) -> float:
        return float(sum(np.real(np.vdot(f, x)) for f, x in zip(self.blocks, xs)))


@dataclass(frozen=True, eq=False)
class SDPProblem:
    block_dims: tuple[int, ...]
    hermitian: tuple[bool, ...]
    objective: LinearFunctional
    constraints: tuple[tuple[LinearFunctional, float], ...]
    sense: str = "maximize"

    def __post_init__(self):
        if self.sense not in ("maximize", "minimize", "feasibility"):
            raise SDPError(f"unknown sense {self.sense!r}")
        if len(self.block_dims) != len(self.hermitian):
            raise SDPError("block_dims and hermitian flags differ in length")


def functional(
    block_dims: Sequence[int],
    entries: Mapping[tuple[int, int, int], complex],
    hermitian: Sequence[bool] | None = None,
) -> LinearFunctional:
    """Build ``sum coeff * X_b[i, j]`` (real part) from ``{(block, i, j): coeff}``.

    The functional is symmetrized, so ``{(0, 0, 1): 1}`` evaluates to ``Re X[0, 1]``
    on Hermitian arguments and ``(0, 0, 1): 1, (0, 1, 0): 1`` to ``2 Re X[0, 1]``.
    """
    if hermitian is None:
        hermitian = (False,) * len(block_dims)
    mats = [np.zeros((d, d), dtype=complex if h else float) for d, h in zip(block_dims, hermitian)]
    for (blk, i, j), coeff in entries.items():
        if not 0 <= blk < len(block_dims):
            raise SDPError(f"block index {blk} out of range")
        d = block_dims[blk]
        if not (0 <= i < d and 0 <= j < d):
            raise SDPError(f"entry ({i}, {j}) out of range for block {blk} of size {d}")
        if not hermitian[blk] and np.iscomplexobj(coeff) and np.imag(coeff) != 0:
            raise SDPError("complex coefficient on a real symmetric block")
        # Re(conj(F_ij) X_ij) = Re(coeff X_ij)  =>  F_ij = conj(coeff)
        mats[blk][i, j] += np.conj(coeff)
    return LinearFunctional(tuple(_sym(m) for m in mats))


def _sym(m: np.ndarray) -> np.ndarray:
    return (m + m.conj().T) / 2


# --------------------------------------------------------------------------- results


@dataclass
class SDPSolution:
    status: str
    value: float
    primal: list[np.ndarray]
    dual: np.ndarray
    dual_value: float
    gap: float
    primal_min_eig: float
    constraint_residual: float
    iterations: int
    dropped_constraints: int = 0
    history: list[tuple[float, float, float]] = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


@dataclass
class LMISolution:
    status: str
    value: float
    y: np.ndarray
    matrices: list[np.ndarray]
    dual_matrices: list[np.ndarray]
    dual_value: float
    gap: float
    min_eig: float
    iterations: int
    history: list[tuple[float, float, float]] = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


# --------------------------------------------------------------------------- real embedding


def _embed(h: np.ndarray, hermitian: bool) -> np.ndarray:
    if not hermitian:
        return np.real(h).astype(float)
    re, im = np.real(h), np.imag(h)
    return np.block([[re, -im], [im, re]])


def _embed_adjoint(w: np.ndarray, n: int, hermitian: bool) -> np.ndarray:
    """Adjoint of :func:`_embed` with respect to the trace inner products."""
    if not hermitian:
        return w
    return (w[:n, :n] + w[n:, n:]) + 1j * (w[n:, :n] - w[:n, n:])


class _Layout:
    def __init__(self, block_dims: Sequence[int], hermitian: Sequence[bool]):
        self.block_dims = tuple(int(d) for d in block_dims)
        self.hermitian = tuple(bool(h) for h in hermitian)
        for d in self.block_dims:
            if d < 1 or d > MAX_BLOCK_DIM:
                raise SDPError(f"block dimension {d} outside 1..{MAX_BLOCK_DIM}")
        self.real_dims = [2 * d if h else d for d, h in zip(self.block_dims, self.hermitian)]
        self.offsets = np.concatenate([[0], np.cumsum(self.real_dims)]).astype(int)
        self.size = int(self.offsets[-1])

    def embed(self, blocks: Sequence[np.ndarray]) -> np.ndarray:
        out = np.zeros((self.size, self.size))
        for k, (b, h) in enumerate(zip(blocks, self.hermitian)):
            lo, hi = self.offsets[k], self.offsets[k + 1]
            out[lo:hi, lo:hi] = _embed(np.asarray(b), h)
        return out

    def unembed(self, w: np.ndarray) -> list[np.ndarray]:
        out = []
        for k, (d, h) in enumerate(zip(self.block_dims, self.hermitian)):
            lo, hi = self.offsets[k], self.offsets[k + 1]
            blk = _embed_adjoint(w[lo:hi, lo:hi], d, h)
            out.append(blk / 2 if h else blk)
        return out

    def adjoint(self, w: np.ndarray) -> list[np.ndarray]:
        out = []
        for k, (d, h) in enumerate(zip(self.block_dims, self.hermitian)):
            lo, hi = self.offsets[k], self.offsets[k + 1]
            out.append(_embed_adjoint(w[lo:hi, lo:hi], d, h))
        return out


# --------------------------------------------------------------------------- vectorization


def _svec_block(x: np.ndarray, hermitian: bool) -> np.ndarray:
    d = x.shape[0]
    iu = np.triu_indices(d, 1)
    parts = [np.real(np.diag(x)), np.sqrt(2) * np.real(x[iu])]
    if hermitian:
        parts.append(np.sqrt(2) * np.imag(x[iu]))
    return np.concatenate(parts)


def _smat_block(v: np.ndarray, d: int, hermitian: bool) -> np.ndarray:
    iu = np.triu_indices(d, 1)
    k = len(iu[0])
    x = np.zeros((d, d), dtype=complex if hermitian else float)
    x[np.diag_indices(d)] = v[:d]
    off = v[d : d + k] / np.sqrt(2)
    if hermitian:
        off = off + 1j * v[d + k : d + 2 * k] / np.sqrt(2)
    x[iu] = off
    x[(iu[1], iu[0])] = np.conj(off)
    return x


def _svec_len(d: int, hermitian: bool) -> int:
    return d * d if hermitian else d * (d + 1) // 2


def _svec(blocks, layout: _Layout) -> np.ndarray:
    return np.concatenate([_svec_block(np.asarray(b), h) for b, h in zip(blocks, layout.hermitian)])


def _smat(v: np.ndarray, layout: _Layout) -> list[np.ndarray]:
    out, pos = [], 0
    for d, h in zip(layout.block_dims, layout.hermitian):
        k = _svec_len(d, h)
        out.append(_smat_block(v[pos : pos + k], d, h))
        pos += k
    return out


# --------------------------------------------------------------------------- core IPM


def _min_eig(x: np.ndarray) -> float:
    if x.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh((x + x.T) / 2)[0])


def _max_step(x: np.ndarray, dx: np.ndarray) -> float:
    """Largest ``alpha`` with ``x + alpha dx ⪰ 0`` (``x`` positive definite)."""
    try:
        lower = np.linalg.cholesky(x)
        li = np.linalg.solve(lower, np.eye(x.shape[0]))
        m = li @ dx @ li.T
        lam = np.linalg.eigvalsh((m + m.T) / 2)[0]
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(x)
        w = np.maximum(w, 1e-300)
        s = v / np.sqrt(w)
        m = s.T @ dx @ s
        lam = np.linalg.eigvalsh((m + m.T) / 2)[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _inv_pd(z: np.ndarray) -> np.ndarray:
    try:
        lower = np.linalg.cholesky(z)
        li = np.linalg.solve(lower, np.eye(z.shape[0]))
        return li.T @ li
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(z)
        return (v / np.maximum(w, 1e-300)) @ v.T


def _solve_psd(m: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        lower = np.linalg.cholesky(m)
        return np.linalg.solve(lower.T, np.linalg.solve(lower, rhs))
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(m, rhs, rcond=None)[0]


def _ipm(c: np.ndarray, a: np.ndarray, b: np.ndarray, tol: float, max_iter: int):
    """Solve ``min <C,X> s.t. <A_j,X> = b_j, X ⪰ 0`` and ``max b·y s.t. C - sum y_j A_j = Z ⪰ 0``.

    ``a`` has shape ``(m, n, n)``.  Returns ``(status, X, y, Z, iterations, history)``.
    """
    n = c.shape[0]
    m = len(b)
    a_flat = a.reshape(m, -1)
    data_norm = max(
        np.linalg.norm(c), np.max(np.linalg.norm(a_flat, axis=1), initial=0.0), np.max(np.abs(b), initial=0.0)
    )
    scale = 1.0 + data_norm
    eye = np.eye(n)
    x = scale * eye
    z = scale * eye
    y = np.zeros(m)
    norm_b = 1.0 + np.linalg.norm(b)
    norm_c = 1.0 + np.linalg.norm(c)
    history = []
    status = "max-iterations"
    it = 0

    def a_op(w):
        return a_flat @ w.reshape(-1)

    def a_adj(v):
        return np.tensordot(v, a, axes=(0, 0)) if m else np.zeros_like(c)

    best = None
    for it in range(max_iter + 1):
        rp = b - a_op(x)
        rd = c - z - a_adj(y)
        pobj = float(np.vdot(c, x))
        dobj = float(b @ y)
        mu = float(np.vdot(x, z)) / n
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        pinf = np.linalg.norm(rp) / norm_b
        dinf = np.linalg.norm(rd) / norm_c
        history.append((relgap, pinf, dinf))
        err = max(relgap, pinf, dinf)
        if best is None or err < best[0]:
            best = (err, x.copy(), y.copy(), z.copy())
        if err < tol:
            status = "optimal"
            break
        if np.linalg.norm(x) > DIVERGENCE * scale and dinf < 1e-6 * np.linalg.norm(x) / scale and pobj < -DIVERGENCE:
            status = "infeasible"
            break
        if np.linalg.norm(x) > DIVERGENCE * scale and pinf > 1e-3:
            status = "infeasible"
            break
        if np.linalg.norm(y) > DIVERGENCE * scale and dobj > DIVERGENCE:
            status = "unbounded"
            break
        if it == max_iter:
            break
        zinv = _inv_pd(z)
        xa = np.matmul(x, a)
        xaz = np.matmul(xa, zinv)
        schur = a_flat @ xaz.reshape(m, -1).T
        schur = (schur + schur.T) / 2
        xrdz = x @ rd @ zinv
        # predictor (sigma = 0)
        g = -x
        dx_a, dy_a, dz_a = _direction(g, xrdz, rp, rd, schur, a_op, a_adj, x, zinv, m)
        ap = min(1.0, STEP_FRACTION * _max_step(x, dx_a))
        ad = min(1.0, STEP_FRACTION * _max_step(z, dz_a))
        mu_aff = float(np.vdot(x + ap * dx_a, z + ad * dz_a)) / n
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0
        # corrector
        g = sigma * mu * zinv - x - dx_a @ dz_a @ zinv
        dx, dy, dz = _direction(g, xrdz, rp, rd, schur, a_op, a_adj, x, zinv, m)
        ap = min(1.0, STEP_FRACTION * _max_step(x, dx))
        ad = min(1.0, STEP_FRACTION * _max_step(z, dz))
        if not (np.isfinite(ap) and np.isfinite(ad)) or (ap < 1e-12 and ad < 1e-12):
            log.debug("interior point stalled at iteration %d", it)
            break
        x = x + ap * dx
        y = y + ad * dy
        z = z + ad * dz
        x = (x + x.T) / 2
        z = (z + z.T) / 2
    if status == "max-iterations" and best is not None:
        _, x, y, z = best
    return status, x, y, z, it, history


def _direction(g, xrdz, rp, rd, schur, a_op, a_adj, x, zinv, m):
    if m:
        rhs = rp - a_op(g) + a_op(xrdz)
        dy = _solve_psd(schur, rhs)
    else:
        dy = np.zeros(0)
    dz = rd - a_adj(dy)
    dx = g - x @ dz @ zinv
    dx = (dx + dx.T) / 2
    return dx, dy, dz


# --------------------------------------------------------------------------- public API


def solve_lmi(
    f0: Sequence[np.ndarray],
    fs: Sequence[Sequence[np.ndarray]],
    c: Sequence[float],
    hermitian: Sequence[bool],
    tol: float = 1e-9,
    max_iter: int = MAX_ITER,
) -> LMISolution:
    """Maximize ``c·y`` subject to ``F0 + sum_j y_j F_j ⪰ 0`` (block-diagonal)."""
    block_dims = [np.asarray(f).shape[0] for f in f0]
    layout = _Layout(block_dims, hermitian)
    c = np.asarray(c, dtype=float)
    if len(fs) != len(c):
        raise SDPError(f"{len(fs)} LMI coefficient matrices but {len(c)} objective entries")
    for j, blocks in enumerate(fs):
        if len(blocks) != len(block_dims):
            raise SDPError(f"coefficient {j} has {len(blocks)} blocks, expected {len(block_dims)}")
        for blk, d in zip(blocks, block_dims):
            if np.asarray(blk).shape != (d, d):
                raise SDPError(f"coefficient {j}: block shape {np.asarray(blk).shape} != {(d, d)}")
    cc = layout.embed([_sym(np.asarray(f)) for f in f0])
    if len(c):
        aa = np.stack([-layout.embed([_sym(np.asarray(f)) for f in blocks]) for blocks in fs])
    else:
        aa = np.zeros((0, layout.size, layout.size))
    status, w, y, z, iters, history = _ipm(cc, aa, c, tol, max_iter)
    mats = [f.astype(complex) if h else np.real(f) for f, h in zip((np.asarray(f) for f in f0), hermitian)]
    mats = [np.array(mm, copy=True) for mm in mats]
    for j in range(len(c)):
        for k in range(len(mats)):
            mats[k] = mats[k] + y[j] * np.asarray(fs[j][k])
    mats = [_sym(mm) for mm in mats]
    min_eig = min(_block_min_eig(mm) for mm in mats)
    value = float(c @ y)
    dual_value = float(np.vdot(cc, w))
    gap = dual_value - value
    return LMISolution(
        status=status,
        value=value,
        y=y,
        matrices=mats,
        dual_matrices=layout.adjoint(w),
        dual_value=dual_value,
        gap=gap,
        min_eig=min_eig,
        iterations=iters,
        history=history,
    )


def _block_min_eig(h: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(_sym(h))[0])


def solve(p: SDPProblem, tolerance: float = 1e-9, max_iter: int = MAX_ITER) -> SDPSolution:
    layout = _Layout(p.block_dims, p.hermitian)
    _check_functional(p.objective, layout, "objective")
    for k, (fn, _) in enumerate(p.constraints):
        _check_functional(fn, layout, f"constraint {k}")
    sign = -1.0 if p.sense == "minimize" else 1.0
    if p.sense == "feasibility":
        cvec = np.zeros(sum(_svec_len(d, h) for d, h in zip(layout.block_dims, layout.hermitian)))
    else:
        cvec = sign * _svec(p.objective.blocks, layout)
    nvar = cvec.size
    if p.constraints:
        amat = np.stack([_svec(fn.blocks, layout) for fn, _ in p.constraints])
        bvec = np.array([float(v) for _, v in p.constraints])
    else:
        amat = np.zeros((0, nvar))
        bvec = np.zeros(0)

    # presolve: rank detection, consistency, null-space parametrization
    if amat.shape[0]:
        u, sv, vt = np.linalg.svd(amat, full_matrices=True)
        rank = int(np.sum(sv > PRESOLVE_RANK_TOL * sv[0])) if sv.size and sv[0] > 0 else 0
    else:
        u, sv, vt, rank = np.eye(0), np.zeros(0), np.eye(nvar), 0
    dropped = amat.shape[0] - rank
    if rank:
        x0 = vt[:rank].T @ ((u[:, :rank].T @ bvec) / sv[:rank])
    else:
        x0 = np.zeros(nvar)
    residual = np.linalg.norm(amat @ x0 - bvec) if amat.shape[0] else 0.0
    basis = vt[rank:].T  # (nvar, p)
    empty_dual = np.zeros(amat.shape[0])
    x0_blocks = _smat(x0, layout)
    if residual > 1e-9 * (1.0 + np.linalg.norm(bvec)):
        return SDPSolution(
            "infeasible", np.nan, x0_blocks, empty_dual, np.nan, np.nan, np.nan, float(residual), 0, dropped
        )

    if basis.shape[1] == 0:
        min_eig = min(_block_min_eig(b) for b in x0_blocks)
        value = sign * float(cvec @ x0)
        status = "optimal" if min_eig >= -1e-8 else "infeasible"
        return SDPSolution(status, value, x0_blocks, empty_dual, value, 0.0, min_eig, float(residual), 0, dropped)

    fs = [_smat(basis[:, j], layout) for j in range(basis.shape[1])]
    lmi = solve_lmi(x0_blocks, fs, basis.T @ cvec, layout.hermitian, tol=tolerance, max_iter=max_iter)
    xv = x0 + basis @ lmi.y
    primal = _smat(xv, layout)
    obj_const = float(cvec @ x0)
    value = sign * (lmi.value + obj_const)

    # user dual: sum_k lam_k A_k - C = S ⪰ 0, recovered by least squares
    slack = _svec(lmi.dual_matrices, layout)
    if amat.shape[0]:
        lam = np.linalg.lstsq(amat.T, slack + cvec, rcond=None)[0]
        dual_value = sign * float(bvec @ lam)
    else:
        lam = empty_dual
        dual_value = sign * (lmi.dual_value + obj_const)
    gap = abs(lmi.gap)
    cres = float(np.linalg.norm(amat @ xv - bvec)) if amat.shape[0] else 0.0
    min_eig = min(_block_min_eig(b) for b in primal)
    return SDPSolution(
        status=lmi.status,
        value=value,
        primal=primal,
        dual=sign * lam,
        dual_value=dual_value,
        gap=gap,
        primal_min_eig=min_eig,
        constraint_residual=cres,
        iterations=lmi.iterations,
        dropped_constraints=dropped,
        history=lmi.history,
    )


def _check_functional(fn: LinearFunctional, layout: _Layout, what: str) -> None:
    if len(fn.blocks) != len(layout.block_dims):
        raise SDPError(f"{what}: {len(fn.blocks)} blocks, expected {len(layout.block_dims)}")
    for blk, d, h in zip(fn.blocks, layout.block_dims, layout.hermitian):
        if blk.shape != (d, d):
            raise SDPError(f"{what}: block shape {blk.shape} != {(d, d)}")
        if not h and np.iscomplexobj(blk) and np.any(np.imag(blk) != 0):
            raise SDPError(f"{what}: complex data on a real symmetric block")


def constraint_residual(p: SDPProblem, xs: Sequence[np.ndarray]) -> float:
    """Max absolute constraint violation, evaluated entry-by-entry (independent of presolve)."""
    worst = 0.0
    for fn, rhs in p.constraints:
        total = 0.0
        for f, x in zip(fn.blocks, xs):
            rows, cols = np.nonzero(f)
            total += sum(float(np.real(np.conj(f[i, j]) * x[i, j])) for i, j in zip(rows, cols))
        worst = max(worst, abs(total - rhs))
    return worst
