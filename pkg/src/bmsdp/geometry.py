"""Riemannian geometry of the factored feasible set {Y : A(Y Y^T) = b}.

Tangent vectors are plain ``n x p`` arrays; tangency at Y means
``<A_i Y, V> = 0`` for every constraint.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import DimensionError, NotTangentError, RetractionError
from .linalg import EPS
from .sdp_model import SdpProblem, SymMatrix, _adjoint_dense

# A_i Y products are kept dense below this many entries.
_DENSE_AY_LIMIT = 200_000


def default_feasibility_tol(problem: SdpProblem) -> float:
    return 1e-9 * (1.0 + float(np.abs(problem.b).max()))


class Factor:
    """A point Y of size n x p together with cached quantities at Y."""

    def __init__(self, problem: SdpProblem, Y):
        Y = np.array(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if Y.ndim != 2 or Y.shape[0] != problem.n:
            raise DimensionError(f"Y has shape {Y.shape}, expected ({problem.n}, p)")
        Y.setflags(write=False)
        self.problem = problem
        self.Y = Y

    @property
    def n(self):
        return self.Y.shape[0]

    @property
    def p(self):
        return self.Y.shape[1]

    def __repr__(self):
        return f"Factor(n={self.n}, p={self.p}, cost={self.cost:.6g})"

    @cached_property
    def AY(self):
        """Row i holds vec(A_i Y) (row-major); dense or sparse m x np."""
        pb = self.problem
        m, n, p = pb.m, self.n, self.p
        if m * n * p <= _DENSE_AY_LIMIT:
            return np.asarray(pb.Astack @ self.Y).reshape(m, n * p)
        prod = (pb.Astack @ sp.csr_matrix(self.Y)).tocoo()
        flat_row = prod.row.astype(np.int64)
        return sp.csr_matrix(
            (prod.data, (flat_row // n, (flat_row % n) * p + prod.col)), shape=(m, n * p)
        )

    @cached_property
    def constraint_values(self):
        return np.asarray(self.AY @ self.Y.ravel()).ravel()

    @cached_property
    def residual(self):
        """Feasibility residual ||A(Y Y^T) - b||_inf."""
        return float(np.abs(self.constraint_values - self.problem.b).max())

    def is_feasible(self, tol=None):
        tol = default_feasibility_tol(self.problem) if tol is None else tol
        return self.residual <= tol

    @cached_property
    def CY(self):
        return self.problem.C.matmul(self.Y)

    @cached_property
    def cost(self):
        """g(Y) = <C Y, Y>."""
        return float(np.vdot(self.CY, self.Y))

    @cached_property
    def gram(self):
        return gram(self)

    @cached_property
    def S(self):
        return s_matrix(self)

    @cached_property
    def grad(self):
        return riemannian_gradient(self)

    @cached_property
    def grad_norm(self):
        return float(np.linalg.norm(self.grad))

    @cached_property
    def constraint_norms(self):
        AY = self.AY
        sq = AY.multiply(AY).sum(axis=1) if sp.issparse(AY) else (AY * AY).sum(axis=1)
        return np.sqrt(np.asarray(sq).ravel())


@dataclass(frozen=True, eq=False)
class GramSystem:
    """G(Y) with G_ij = <A_i Y, A_j Y>, kept as eigendecomposed blocks."""

    m: int
    single_idx: np.ndarray
    single_vals: np.ndarray
    single_inv: np.ndarray
    blocks: tuple
    m_prime: int
    cutoff: float

    def apply_pinv(self, r):
        r = np.asarray(r, dtype=float).ravel()
        out = np.zeros(self.m)
        out[self.single_idx] = self.single_inv * r[self.single_idx]
        for idx, _, _, vecs, inv in self.blocks:
            out[idx] = vecs @ (inv * (vecs.T @ r[idx]))
        return out

    @cached_property
    def G(self):
        G = np.zeros((self.m, self.m))
        G[self.single_idx, self.single_idx] = self.single_vals
        for idx, Gb, _, _, _ in self.blocks:
            G[np.ix_(idx, idx)] = Gb
        return G

    @cached_property
    def pinv(self):
        P = np.zeros((self.m, self.m))
        P[self.single_idx, self.single_idx] = self.single_inv
        for idx, _, _, vecs, inv in self.blocks:
            P[np.ix_(idx, idx)] = (vecs * inv) @ vecs.T
        return P

    @cached_property
    def eigenvalues(self):
        parts = [self.single_vals] + [ev for _, _, ev, _, _ in self.blocks]
        return np.sort(np.concatenate(parts))


def gram(factor: Factor, rcond=None) -> GramSystem:
    """Gram system at Y; eigenvalues at or below the rank cutoff are dropped from G^+."""
    pb = factor.problem
    AY = factor.AY
    m = pb.m
    blocks = pb.constraint_blocks
    single_idx = np.array([b[0] for b in blocks if len(b) == 1], dtype=np.int64)
    single_vals = factor.constraint_norms[single_idx] ** 2
    multi = []
    for idx in blocks:
        if len(idx) == 1:
            continue
        sub = AY[idx]
        Gb = sub @ sub.T
        Gb = Gb.toarray() if sp.issparse(Gb) else np.asarray(Gb)
        Gb = 0.5 * (Gb + Gb.T)
        evals, evecs = sla.eigh(Gb)
        multi.append((idx, Gb, evals, evecs))
    lam_max = max([single_vals.max(initial=0.0)] + [ev.max(initial=0.0) for _, _, ev, _ in multi])
    if rcond is None:
        rcond = max(factor.n * factor.p, m) * EPS
    cutoff = rcond * lam_max
    keep = single_vals > cutoff
    single_inv = np.where(keep, 1.0 / np.where(keep, single_vals, 1.0), 0.0)
    m_prime = int(np.count_nonzero(keep))
    out_blocks = []
    for idx, Gb, evals, evecs in multi:
        k = evals > cutoff
        m_prime += int(np.count_nonzero(k))
        out_blocks.append((idx, Gb, evals, evecs[:, k], 1.0 / evals[k]))
    return GramSystem(m=m, single_idx=single_idx, single_vals=single_vals, single_inv=single_inv,
                      blocks=tuple(out_blocks), m_prime=m_prime, cutoff=cutoff)


def _normal_part(factor: Factor, Z, gram_system=None):
    gs = factor.gram if gram_system is None else gram_system
    mu = gs.apply_pinv(np.asarray(factor.AY @ np.ravel(Z)).ravel())
    return np.asarray(factor.AY.T @ mu).reshape(factor.n, factor.p)


def project_tangent(factor: Factor, Z, gram_system=None) -> np.ndarray:
    """Orthogonal projection of Z onto the tangent space at Y."""
    Z = np.asarray(Z, dtype=float)
    if Z.shape != factor.Y.shape:
        raise DimensionError(f"Z has shape {Z.shape}, expected {factor.Y.shape}")
    return Z - _normal_part(factor, Z, gram_system)


def tangency_residual(factor: Factor, V) -> float:
    return float(np.abs(np.asarray(factor.AY @ np.ravel(V))).max(initial=0.0))


def tangency_tol(factor: Factor, V) -> float:
    return 1e-10 * float(np.linalg.norm(V)) * float(factor.constraint_norms.max(initial=0.0))


def is_tangent(factor: Factor, V) -> bool:
    return tangency_residual(factor, V) <= tangency_tol(factor, V)


@dataclass(frozen=True, eq=False)
class SMatrix:
    """S = C - A*(mu) with mu = G^+ A(C Y Y^T)."""

    S: SymMatrix
    mu: np.ndarray

    @property
    def array(self):
        return self.S.toarray()


def s_matrix(factor: Factor, gram_system=None) -> SMatrix:
    pb = factor.problem
    gs = factor.gram if gram_system is None else gram_system
    rhs = np.asarray(factor.AY @ factor.CY.ravel()).ravel()
    mu = gs.apply_pinv(rhs)
    S = pb.C_dense - _adjoint_dense(pb, mu)
    S.setflags(write=False)
    mu.setflags(write=False)
    return SMatrix(S=SymMatrix(pb.n, dense=S), mu=mu)


def riemannian_gradient(factor: Factor, S: SMatrix | None = None) -> np.ndarray:
    """grad g(Y) = 2 S Y; tangent by construction."""
    S = factor.S if S is None else S
    return 2.0 * (S.array @ factor.Y)


def hessian_vec(factor: Factor, V, S: SMatrix | None = None, gram_system=None,
                check: bool = True) -> np.ndarray:
    """Riemannian Hessian applied to a tangent V: 2 Proj_Y(S V).

    A V that misses the tangency tolerance by less than a factor 10 is
    re-projected first; a larger miss raises NotTangentError.
    """
    V = np.asarray(V, dtype=float)
    if V.shape != factor.Y.shape:
        raise DimensionError(f"V has shape {V.shape}, expected {factor.Y.shape}")
    if check:
        res, tol = tangency_residual(factor, V), tangency_tol(factor, V)
        if res > tol:
            if res > 10.0 * tol:
                raise NotTangentError(f"tangency residual {res:.3e} exceeds tolerance {tol:.3e}")
            V = project_tangent(factor, V, gram_system)
    S = factor.S if S is None else S
    return 2.0 * project_tangent(factor, S.array @ V, gram_system)


# ---------------------------------------------------------------------------
# Retraction


def _retract_row_sphere(problem, W):
    labels, targets = problem.row_sphere_groups
    rows = labels >= 0
    normsq = np.bincount(labels[rows], weights=(W[rows] ** 2).sum(axis=1), minlength=len(targets))
    if np.any(normsq <= 0):
        raise RetractionError("a constrained row block vanished; shrink the step")
    scale = np.ones(W.shape[0])
    scale[rows] = np.sqrt(targets[labels[rows]] / normsq[labels[rows]])
    return W * scale[:, None]


def _retract_orthocut(problem, W):
    d = problem.family.d
    n, p = W.shape
    slices = W.reshape(n // d, d, p)
    U, s, Vt = np.linalg.svd(slices, full_matrices=False)
    if np.any(s[:, -1] <= EPS * s[:, 0]):
        raise RetractionError("a slice lost rank; shrink the step")
    return (U @ Vt).reshape(n, p)


def _retract_newton(problem, W, tol, max_iter=20):
    n, p = W.shape
    m = problem.m
    b = problem.b
    AW = np.asarray(problem.Astack @ W).reshape(m, n * p)
    lam = np.zeros(m)
    stop = 16 * EPS * max(1.0, float(np.abs(b).max()))
    prev = np.inf
    Wl, nF = W, np.inf
    for it in range(max_iter + 1):
        Wl = W + (AW.T @ lam).reshape(n, p)
        AWl = np.asarray(problem.Astack @ Wl).reshape(m, n * p)
        F = AWl @ Wl.ravel() - b
        nF = float(np.abs(F).max())
        if not np.isfinite(nF):
            break
        if nF <= stop or (nF <= tol and nF >= 0.5 * prev) or it == max_iter:
            break
        prev = nF
        J = 2.0 * (AWl @ AW.T)
        lam = lam + sla.lstsq(J, -F, cond=max(J.shape) * EPS)[0]
    if not np.isfinite(nF) or nF > tol:
        raise RetractionError(f"Newton retraction did not converge (residual {nF:.3e}); shrink the step")
    return Wl


def retract(factor: Factor, V, method: str = "auto", tol: float | None = None) -> Factor:
    """Map the tangent step V at Y back onto the feasible set.

    ``method="auto"`` uses the structural fast path of the problem (row-block
    normalization, per-slice polar factor, or scaling for one constraint) and
    falls back to Newton's method on the normal correction
    ``W + A*(lam) W``; ``method="newton"`` forces the latter.
    """
    pb = factor.problem
    V = np.asarray(V, dtype=float)
    if V.shape != factor.Y.shape:
        raise DimensionError(f"V has shape {V.shape}, expected {factor.Y.shape}")
    tol = default_feasibility_tol(pb) if tol is None else tol
    W = factor.Y + V
    kind = pb.retraction_kind if method == "auto" else method
    if kind == "row_sphere":
        Y = _retract_row_sphere(pb, W)
    elif kind == "orthocut":
        Y = _retract_orthocut(pb, W)
    elif kind == "scale":
        val = float(np.vdot(pb.A[0].matmul(W), W))
        if val * pb.b[0] > 0:
            Y = W * math.sqrt(pb.b[0] / val)
        else:
            Y = _retract_newton(pb, W, tol)
    elif kind == "newton":
        Y = _retract_newton(pb, W, tol)
    else:
        raise ValueError(f"unknown retraction method {method!r}")
    return Factor(pb, Y)
