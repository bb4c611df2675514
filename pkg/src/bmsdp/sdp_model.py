"""SDP problem data, the constraint operator and its adjoint, built-in families.

Problems have the form

    min <C, X>  s.t.  <A_i, X> = b_i (i = 1..m),  X psd,

and are solved through the factorization X = Y Y^T with Y of size n x p.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import DimensionError, InfeasibleError
from .linalg import EPS, numerical_rank


class SymMatrix:
    """Real symmetric n x n matrix, stored dense or as lower-triangle triplets.

    Symmetry is structural: the stored matrix is exactly equal to its
    transpose, bit for bit.
    """

    def __init__(self, n, dense=None, csr=None):
        self.n = int(n)
        self._dense = dense
        self._csr = csr

    @classmethod
    def from_dense(cls, M, atol=None):
        M = np.array(M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise DimensionError(f"expected a square matrix, got shape {M.shape}")
        scale = float(np.abs(M).max()) if M.size else 0.0
        if atol is None:
            atol = 1e-12 * max(scale, 1.0)
        if not np.allclose(M, M.T, rtol=0.0, atol=atol):
            raise ValueError("matrix is not symmetric")
        low = np.tril(M)
        S = low + np.tril(M, -1).T
        S.setflags(write=False)
        return cls(M.shape[0], dense=S)

    @classmethod
    def from_triplets(cls, n, triplets):
        """Build from ``(row, col, value)`` triples with row >= col, 0-based."""
        t = np.asarray(list(triplets), dtype=float).reshape(-1, 3)
        rows = t[:, 0].astype(np.int64)
        cols = t[:, 1].astype(np.int64)
        vals = t[:, 2]
        if np.any(rows != t[:, 0]) or np.any(cols != t[:, 1]):
            raise ValueError("triplet indices must be integers")
        if np.any(rows < 0) or np.any(rows >= n) or np.any(cols < 0):
            raise ValueError(f"triplet index out of range for n={n}")
        if np.any(rows < cols):
            raise ValueError("triplets must satisfy row >= col")
        keys = rows * n + cols
        if np.unique(keys).size != keys.size:
            raise ValueError("duplicate coordinates in triplets")
        off = rows != cols
        r = np.concatenate([rows, cols[off]])
        c = np.concatenate([cols, rows[off]])
        v = np.concatenate([vals, vals[off]])
        csr = sp.csr_matrix((v, (r, c)), shape=(n, n))
        csr.sort_indices()
        return cls(n, csr=csr)

    @classmethod
    def zeros(cls, n):
        return cls(n, csr=sp.csr_matrix((n, n)))

    @property
    def is_sparse(self):
        return self._csr is not None

    @property
    def shape(self):
        return (self.n, self.n)

    def toarray(self):
        if self._dense is not None:
            return self._dense
        out = self._csr.toarray()
        out.setflags(write=False)
        return out

    def tocsr(self):
        if self._csr is not None:
            return self._csr
        return sp.csr_matrix(self._dense)

    def matmul(self, Y):
        if self._dense is not None:
            return self._dense @ Y
        return np.asarray(self._csr @ Y)

    def inner(self, X):
        """Frobenius inner product with a dense array or another SymMatrix."""
        if isinstance(X, SymMatrix):
            X = X.toarray()
        X = np.asarray(X)
        if X.shape != self.shape:
            raise DimensionError(f"shape {X.shape} does not match {self.shape}")
        if self._dense is not None:
            return float(np.vdot(self._dense, X))
        coo = self._csr.tocoo()
        return float(np.dot(coo.data, X[coo.row, coo.col]))

    def frobenius_norm(self):
        if self._dense is not None:
            return float(np.linalg.norm(self._dense))
        return float(sp.linalg.norm(self._csr))

    def triplets(self):
        """Lower-triangle nonzeros as (row, col, value), sorted by (row, col)."""
        coo = sp.coo_matrix(self.tocsr())
        keep = (coo.row >= coo.col) & (coo.data != 0)
        r, c, v = coo.row[keep], coo.col[keep], coo.data[keep]
        order = np.lexsort((c, r))
        return [(int(r[k]), int(c[k]), float(v[k])) for k in order]

    def support_rows(self):
        coo = sp.coo_matrix(self.tocsr())
        return np.unique(coo.row[coo.data != 0])

    def __repr__(self):
        kind = "sparse" if self.is_sparse else "dense"
        return f"SymMatrix(n={self.n}, {kind})"


def as_sym(M):
    if isinstance(M, SymMatrix):
        return M
    if sp.issparse(M):
        M = sp.tril(M).tocoo()
        return SymMatrix.from_triplets(M.shape[0], zip(M.row, M.col, M.data))
    return SymMatrix.from_dense(M)


# ---------------------------------------------------------------------------
# Problem families


@dataclass(frozen=True, eq=False)
class GenEig:
    """min x^T C x s.t. x^T B x = 1, lifted."""

    C: np.ndarray
    B: np.ndarray


@dataclass(frozen=True, eq=False)
class Trs:
    """min x^T A x + 2 b^T x + c on the unit sphere, lifted with a trailing 1."""

    A: np.ndarray
    b: np.ndarray
    c: float = 0.0


@dataclass(frozen=True, eq=False)
class Spheres:
    """Quadratic over a product of unit spheres of sizes ``sizes``.

    If ``homogeneous`` is false, C has one extra trailing row/column acting on
    a coordinate fixed to 1.
    """

    C: np.ndarray
    sizes: tuple
    homogeneous: bool = False


@dataclass(frozen=True, eq=False)
class OrthoCut:
    """Diagonal d x d blocks of X fixed to identity; d = 1 is Max-Cut."""

    C: np.ndarray
    d: int = 1


ProblemFamily = Union[GenEig, Trs, Spheres, OrthoCut]


@dataclass(frozen=True)
class FamilyInfo:
    """Structural tag of a built-in family, kept on the problem."""

    tag: str
    d: int | None = None
    sizes: tuple | None = None
    homogeneous: bool | None = None

    def to_dict(self):
        out = {"tag": self.tag}
        if self.d is not None:
            out["d"] = self.d
        if self.sizes is not None:
            out["sizes"] = list(self.sizes)
        if self.homogeneous is not None:
            out["homogeneous"] = self.homogeneous
        return out


# ---------------------------------------------------------------------------
# The problem


@dataclass(frozen=True, eq=False)
class SdpProblem:
    C: SymMatrix
    A: tuple
    b: np.ndarray
    R: float | None = None
    constant_trace: bool | None = None
    identity_in_range: bool | None = None
    family: FamilyInfo | None = None

    def __post_init__(self):
        C = as_sym(self.C)
        A = tuple(as_sym(a) for a in self.A)
        b = np.array(self.b, dtype=float).ravel()
        b.setflags(write=False)
        if len(A) < 1:
            raise DimensionError("at least one constraint is required")
        if C.n < 1:
            raise DimensionError("n must be positive")
        for i, a in enumerate(A):
            if a.n != C.n:
                raise DimensionError(f"A[{i}] has dimension {a.n}, expected {C.n}")
        if b.size != len(A):
            raise DimensionError(f"b has length {b.size}, expected m={len(A)}")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

        detected = self._identity_residual <= 1e-10 * math.sqrt(C.n)
        if self.identity_in_range is None:
            object.__setattr__(self, "identity_in_range", bool(detected))
        if self.constant_trace is None:
            object.__setattr__(self, "constant_trace", bool(detected))
        elif self.constant_trace and not detected:
            raise ValueError("constant_trace claimed but trace is not fixed by the constraints")
        if self.R is None and detected:
            object.__setattr__(self, "R", float(self._identity_coeffs @ b))
        if self.R is not None and self.R < 0:
            raise ValueError("R must be nonnegative")

    @property
    def n(self):
        return self.C.n

    @property
    def m(self):
        return len(self.A)

    @cached_property
    def Avec(self):
        """Sparse m x n^2 matrix whose rows are the vectorized A_i."""
        n = self.n
        rows, cols, vals = [], [], []
        for i, a in enumerate(self.A):
            coo = a.tocsr().tocoo()
            rows.append(np.full(coo.nnz, i))
            cols.append(coo.row.astype(np.int64) * n + coo.col)
            vals.append(coo.data)
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.m, n * n),
        )

    @cached_property
    def AvecT(self):
        return self.Avec.T.tocsr()

    @cached_property
    def Astack(self):
        """The A_i stacked vertically: sparse (m n) x n."""
        return sp.vstack([a.tocsr() for a in self.A], format="csr")

    @cached_property
    def C_dense(self):
        return self.C.toarray()

    @cached_property
    def c_norm(self):
        return self.C.frobenius_norm()

    @cached_property
    def _identity_fit(self):
        # least squares for A*(nu) ~ I through the normal equations
        Ga = (self.Avec @ self.AvecT).toarray()
        diag = np.arange(self.n) * (self.n + 1)
        traces = np.asarray(self.Avec[:, diag].sum(axis=1)).ravel()
        nu = sla.lstsq(Ga, traces, cond=max(Ga.shape) * EPS)[0]
        resid = self.AvecT @ nu
        resid[:: self.n + 1] -= 1.0
        return nu, float(np.linalg.norm(resid))

    @property
    def _identity_coeffs(self):
        return self._identity_fit[0]

    @property
    def _identity_residual(self):
        return self._identity_fit[1]

    @cached_property
    def rank_A(self):
        """Numerical rank of the constraint operator."""
        Ga = (self.Avec @ self.AvecT).toarray()
        w = np.linalg.eigvalsh(Ga)
        return int(np.count_nonzero(w > max(Ga.shape) * EPS * max(w.max(), 0.0)))

    @cached_property
    def constraint_blocks(self):
        """Groups of constraints whose row supports overlap.

        G(Y) is block diagonal along these groups for every Y, since A_i Y is
        supported on the rows touched by A_i.
        """
        inc = sp.csr_matrix(abs(self.Avec) > 0, dtype=np.int8)
        n = self.n
        coo = inc.tocoo()
        touch = sp.csr_matrix(
            (np.ones(coo.nnz, dtype=np.int8), (coo.row, coo.col // n)), shape=(self.m, n)
        )
        adj = (touch @ touch.T) > 0
        ncomp, labels = connected_components(adj, directed=False)
        return tuple(np.flatnonzero(labels == k) for k in range(ncomp))

    @cached_property
    def row_sphere_groups(self):
        """Per-row group labels and squared target norms, or None.

        Applies when every constraint reads ``w * ||Y_rows||^2 = b_i`` for a
        diagonal indicator ``A_i = w * diag(1_rows)`` and distinct supports are
        disjoint (exact duplicates are allowed).
        """
        labels = -np.ones(self.n, dtype=np.int64)
        targets = []
        seen = {}
        for i, a in enumerate(self.A):
            coo = sp.coo_matrix(a.tocsr())
            keep = coo.data != 0
            r, c, v = coo.row[keep], coo.col[keep], coo.data[keep]
            if r.size == 0 or np.any(r != c) or np.any(v != v[0]) or v[0] <= 0:
                return None
            target = self.b[i] / v[0]
            if target <= 0:
                return None
            key = tuple(np.sort(r))
            if key in seen:
                if seen[key][1] != target:
                    return None
                continue
            if np.any(labels[r] >= 0):
                return None
            labels[r] = len(targets)
            seen[key] = (len(targets), target)
            targets.append(target)
        return labels, np.array(targets)

    @cached_property
    def retraction_kind(self):
        if self.family is not None and self.family.tag == "orthocut" and self.family.d > 1:
            return "orthocut"
        if self.row_sphere_groups is not None:
            return "row_sphere"
        if self.m == 1 and self.b[0] != 0:
            return "scale"
        return "newton"


# ---------------------------------------------------------------------------
# Operators


def apply_A(problem: SdpProblem, X) -> np.ndarray:
    """Constraint operator: the vector of <A_i, X>."""
    if isinstance(X, SymMatrix):
        X = X.toarray()
    X = np.asarray(X, dtype=float)
    if X.shape != (problem.n, problem.n):
        raise DimensionError(f"X has shape {X.shape}, expected {(problem.n, problem.n)}")
    return problem.Avec @ X.ravel()


def _adjoint_dense(problem: SdpProblem, nu) -> np.ndarray:
    M = (problem.AvecT @ nu).reshape(problem.n, problem.n)
    return np.tril(M) + np.tril(M, -1).T


def apply_A_adjoint(problem: SdpProblem, nu) -> SymMatrix:
    """Adjoint operator: sum_i nu_i A_i."""
    nu = np.asarray(nu, dtype=float).ravel()
    if nu.size != problem.m:
        raise DimensionError(f"nu has length {nu.size}, expected m={problem.m}")
    M = _adjoint_dense(problem, nu)
    M.setflags(write=False)
    return SymMatrix(problem.n, dense=M)


def pataki_bound(m_prime: int) -> int:
    """Largest p with p (p + 1) / 2 <= m_prime."""
    if m_prime < 1:
        raise ValueError("m_prime must be positive")
    return (math.isqrt(8 * m_prime + 1) - 1) // 2


# ---------------------------------------------------------------------------
# Built-in families


def _diag_indicator(n, rows, weight=1.0):
    rows = np.asarray(rows)
    return SymMatrix.from_triplets(n, [(int(r), int(r), weight) for r in rows])


def build_family(family: ProblemFamily) -> SdpProblem:
    """Exact SDP relaxation of a built-in problem family."""
    if isinstance(family, GenEig):
        C = np.asarray(family.C, dtype=float)
        B = SymMatrix.from_dense(family.B)
        n = B.n
        try:
            sla.cholesky(B.toarray())
        except np.linalg.LinAlgError:
            raise ValueError("B must be positive definite") from None
        lam_min = float(np.linalg.eigvalsh(B.toarray())[0])
        return SdpProblem(C=SymMatrix.from_dense(C), A=(B,), b=np.ones(1), R=1.0 / lam_min,
                          family=FamilyInfo("geneig"))
    if isinstance(family, Trs):
        A = np.asarray(family.A, dtype=float)
        bb = np.asarray(family.b, dtype=float).ravel()
        n = A.shape[0]
        if bb.size != n:
            raise DimensionError("b must have the dimension of A")
        C = np.zeros((n + 1, n + 1))
        C[:n, :n] = A
        C[:n, n] = bb
        C[n, :n] = bb
        C[n, n] = float(family.c)
        cons = (_diag_indicator(n + 1, range(n)), _diag_indicator(n + 1, [n]))
        return SdpProblem(C=SymMatrix.from_dense(C), A=cons, b=np.ones(2), R=2.0,
                          constant_trace=True, identity_in_range=True, family=FamilyInfo("trs"))
    if isinstance(family, Spheres):
        sizes = tuple(int(s) for s in family.sizes)
        if not sizes or min(sizes) < 1:
            raise ValueError("sphere sizes must be positive")
        n = sum(sizes) + (0 if family.homogeneous else 1)
        C = SymMatrix.from_dense(family.C)
        if C.n != n:
            raise DimensionError(f"C must be {n} x {n}")
        cons, start = [], 0
        for s in sizes:
            cons.append(_diag_indicator(n, range(start, start + s)))
            start += s
        if not family.homogeneous:
            cons.append(_diag_indicator(n, [n - 1]))
        info = FamilyInfo("spheres", sizes=sizes, homogeneous=bool(family.homogeneous))
        return SdpProblem(C=C, A=tuple(cons), b=np.ones(len(cons)), R=float(len(cons)),
                          constant_trace=True, identity_in_range=True, family=info)
    if isinstance(family, OrthoCut):
        C = SymMatrix.from_dense(family.C)
        n, d = C.n, int(family.d)
        if d < 1 or n % d:
            raise ValueError(f"n={n} is not divisible by d={d}")
        cons, b = [], []
        for k in range(n // d):
            for a in range(d):
                for c in range(a + 1):
                    i, j = k * d + a, k * d + c
                    if i == j:
                        cons.append(SymMatrix.from_triplets(n, [(i, i, 1.0)]))
                        b.append(1.0)
                    else:
                        cons.append(SymMatrix.from_triplets(n, [(i, j, 0.5)]))
                        b.append(0.0)
        return SdpProblem(C=C, A=tuple(cons), b=np.array(b), R=float(n),
                          constant_trace=True, identity_in_range=True,
                          family=FamilyInfo("orthocut", d=d))
    raise TypeError(f"unknown family {family!r}")


def maxcut(C) -> SdpProblem:
    return build_family(OrthoCut(C=C, d=1))


# ---------------------------------------------------------------------------
# Feasible points


def _random_orthonormal_rows(rng, d, p):
    Q, R = np.linalg.qr(rng.standard_normal((p, d)))
    Q = Q * np.sign(np.diag(R))
    return Q.T


def feasible_point(problem: SdpProblem, p: int, rng=None) -> np.ndarray:
    """A point Y (n x p) with A(Y Y^T) = b for the structured problem classes.

    With ``rng=None`` a fixed closed-form point is returned; otherwise the
    point is randomized from ``rng``. Generic problems raise InfeasibleError:
    the caller has to supply feasible points for those.
    """
    n = problem.n
    if p < 1:
        raise ValueError("p must be positive")
    kind = problem.retraction_kind
    if kind == "orthocut":
        d = problem.family.d
        if p < d:
            raise InfeasibleError(f"OrthoCut with d={d} needs p >= d, got p={p}")
        Y = np.zeros((n, p))
        for k in range(n // d):
            Y[k * d:(k + 1) * d] = np.eye(d, p) if rng is None else _random_orthonormal_rows(rng, d, p)
        return Y
    if kind == "row_sphere":
        labels, targets = problem.row_sphere_groups
        Y = np.zeros((n, p)) if rng is None else rng.standard_normal((n, p))
        if rng is None:
            for g, t in enumerate(targets):
                Y[np.flatnonzero(labels == g)[0], 0] = 1.0
        normsq = np.bincount(labels[labels >= 0], weights=(Y[labels >= 0] ** 2).sum(axis=1),
                             minlength=len(targets))
        scale = np.ones(n)
        scale[labels >= 0] = np.sqrt(targets[labels[labels >= 0]] / normsq[labels[labels >= 0]])
        return Y * scale[:, None]
    if kind == "scale":
        A1 = problem.A[0].toarray()
        b1 = problem.b[0]
        if rng is None:
            w, V = np.linalg.eigh(A1)
            x = V[:, -1] if b1 > 0 else V[:, 0]
            Y = np.zeros((n, p))
            Y[:, 0] = x
        else:
            Y = rng.standard_normal((n, p))
        val = float(np.vdot(A1 @ Y, Y))
        if val * b1 <= 0:
            raise InfeasibleError("could not construct a feasible point for the single constraint")
        return Y * math.sqrt(b1 / val)
    raise InfeasibleError("no closed-form feasible point for this problem; supply one")


# ---------------------------------------------------------------------------
# Smoothness diagnostic


@dataclass
class SmoothnessReport:
    m_prime: int
    constant_rank: bool
    ranks: list
    neighborhood_ranks: list
    witnesses: list = field(default_factory=list)


def constraint_span_rank(problem: SdpProblem, Y, rcond=None) -> int:
    """Numerical rank of {A_1 Y, ..., A_m Y}."""
    Y = np.asarray(Y, dtype=float)
    n, p = Y.shape
    M = np.asarray((problem.Astack @ Y)).reshape(problem.m, n * p)
    return numerical_rank(M, rcond=max(n * p, problem.m) * EPS if rcond is None else rcond)


def check_smoothness(problem: SdpProblem, p: int, samples: int = 5, seed=0, points=None,
                     radius: float = 1e-6, rcond=None) -> SmoothnessReport:
    """Sample the dimension of span{A_i Y} on the manifold and near it.

    Feasible points come from ``points`` if given, else from
    :func:`feasible_point`. Each sample is also perturbed by a random step of
    norm ``radius``; those ranks are reported as ``neighborhood_ranks``. This
    is a sampling diagnostic, not a proof.
    """
    rng = np.random.default_rng(seed)
    if points is None:
        points = [feasible_point(problem, p, rng) for _ in range(samples)]
    points = [np.asarray(Y, dtype=float) for Y in points]
    if not points:
        raise InfeasibleError("no feasible point available")
    ranks, near, witnesses = [], [], []
    for k, Y in enumerate(points):
        if Y.shape != (problem.n, p):
            raise DimensionError(f"point {k} has shape {Y.shape}, expected {(problem.n, p)}")
        r = constraint_span_rank(problem, Y, rcond)
        E = rng.standard_normal(Y.shape)
        r_near = constraint_span_rank(problem, Y + radius * E / np.linalg.norm(E), rcond)
        ranks.append(r)
        near.append(r_near)
    common = ranks[0]
    for k, (r, rn) in enumerate(zip(ranks, near)):
        if r != common or rn != common:
            witnesses.append({"sample": k, "rank": r, "neighborhood_rank": rn})
    return SmoothnessReport(m_prime=common, constant_rank=not witnesses, ranks=ranks,
                            neighborhood_ranks=near, witnesses=witnesses)
