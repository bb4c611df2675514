"""Dual certificates, optimality-gap bounds, face dimensions and rounding."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DependentConstraintsError, ExtractionError, InfeasibleError
from .geometry import Factor, default_feasibility_tol
from .linalg import EPS, numerical_rank, smallest_eigenpair
from .sdp_model import SdpProblem, SymMatrix, constraint_span_rank


class Verdict(str, enum.Enum):
    CERTIFIED_OPTIMAL = "CertifiedOptimal"
    GAP_BOUNDED = "GapBounded"
    INCONCLUSIVE = "Inconclusive"


def default_tolerances(problem: SdpProblem):
    """Default (tol_g, tol_H) for certificates: tol_H is half the Hessian tolerance."""
    scale = 1.0 + problem.c_norm
    return 1e-8 * scale, 0.5e-6 * scale


@dataclass(frozen=True, eq=False)
class DualCertificate:
    """Certificate data at Y.

    ``gap_bound`` bounds ``2 (g(Y) - f*)`` from above, with
    ``eps_g = 2 ||S Y||`` (the gradient norm) and
    ``eps_H = 2 max(0, -lambda_min(S))`` using the pessimistic eigenvalue.
    """

    mu: np.ndarray
    S: SymMatrix
    cost: float
    sy_norm: float
    lambda_min_S: float
    lambda_residual: float
    eps_g: float
    eps_H: float
    gap_bound: float | None
    verdict: Verdict
    tol_g: float
    tol_H: float

    @property
    def lambda_min_lower(self):
        return self.lambda_min_S - self.lambda_residual

    @property
    def is_psd(self):
        return self.lambda_min_lower >= -self.tol_H

    def to_dict(self, include_matrix=False):
        out = {
            "verdict": self.verdict.value,
            "cost": self.cost,
            "sy_norm": self.sy_norm,
            "lambda_min_S": self.lambda_min_S,
            "lambda_residual": self.lambda_residual,
            "eps_g": self.eps_g,
            "eps_H": self.eps_H,
            "gap_bound": self.gap_bound,
            "tol_g": self.tol_g,
            "tol_H": self.tol_H,
            "mu": self.mu.tolist(),
        }
        if include_matrix:
            out["S"] = {"n": self.S.n, "triplets": [list(t) for t in self.S.triplets()]}
        return out


def _as_factor(problem, Y):
    return Y if isinstance(Y, Factor) else Factor(problem, Y)


def certify(problem: SdpProblem, Y, tol_g=None, tol_H=None, gap_tol=None,
            dense_max: int = 2000, feas_tol=None) -> DualCertificate:
    """Build the dual certificate S = C - A*(mu) at Y and classify it.

    CertifiedOptimal needs ``||S Y|| <= tol_g`` and ``lambda_min(S) >= -tol_H``
    (pessimistic eigenvalue). Otherwise GapBounded is reported when the gap
    bound is known and at most ``gap_tol``, else Inconclusive. A non-psd S is
    never read as proof of suboptimality.
    """
    f = _as_factor(problem, Y)
    feas_tol = default_feasibility_tol(problem) if feas_tol is None else feas_tol
    if not f.is_feasible(feas_tol):
        raise InfeasibleError(f"factor is infeasible: residual {f.residual:.3e} > {feas_tol:.3e}")
    d_g, d_H = default_tolerances(problem)
    tol_g = d_g if tol_g is None else tol_g
    tol_H = d_H if tol_H is None else tol_H
    S = f.S
    Sa = S.array
    sy = float(np.linalg.norm(Sa @ f.Y))
    lam, _, res = smallest_eigenpair(Sa, dense_max=dense_max)
    lower = lam - res
    eps_g = 2.0 * sy
    eps_H = 2.0 * max(0.0, -lower)
    R = problem.R
    if R is None:
        gap = None
    else:
        gap = eps_H * R + (0.0 if problem.identity_in_range else eps_g * math.sqrt(R))
    if sy <= tol_g and lower >= -tol_H:
        verdict = Verdict.CERTIFIED_OPTIMAL
    elif gap is not None and gap_tol is not None and gap <= gap_tol:
        verdict = Verdict.GAP_BOUNDED
    else:
        verdict = Verdict.INCONCLUSIVE
    return DualCertificate(mu=S.mu, S=S.S, cost=f.cost, sy_norm=sy, lambda_min_S=lam,
                           lambda_residual=res, eps_g=eps_g, eps_H=eps_H, gap_bound=gap,
                           verdict=verdict, tol_g=tol_g, tol_H=tol_H)


# ---------------------------------------------------------------------------
# Faces


@dataclass(frozen=True)
class FaceReport:
    p: int
    dim_face: int
    delta: int
    neg_eig_cap: int | None
    deterministic_optimal: bool
    m_prime: int
    rank_L: int

    def to_dict(self):
        return {
            "p": self.p,
            "dim_face": self.dim_face,
            "delta": self.delta,
            "neg_eig_cap": self.neg_eig_cap,
            "deterministic_optimal": self.deterministic_optimal,
            "m_prime": self.m_prime,
            "rank_L": self.rank_L,
        }


def trim_factor(Y, rank_tol=1e-8):
    """Return (Y_r, r): an n x r factor with Y_r Y_r^T ~ Y Y^T, r the numerical rank."""
    Y = np.asarray(Y, dtype=float)
    U, s, _ = np.linalg.svd(Y, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return Y[:, :0], 0
    r = int(np.count_nonzero(s > rank_tol * s[0]))
    return U[:, :r] * s[:r], r


def face_matrix(problem: SdpProblem, Y) -> np.ndarray:
    """Matrix of the map A -> (<Y^T A_i Y, A>)_i on symmetric p x p A.

    Symmetric matrices are vectorized with off-diagonal entries weighted by
    sqrt(2), so the Euclidean geometry matches the Frobenius one.
    """
    Y = np.asarray(Y, dtype=float)
    n, r = Y.shape
    AY = np.asarray(problem.Astack @ Y).reshape(problem.m, n, r)
    M = np.einsum("na,mnb->mab", Y, AY)
    iu, ju = np.triu_indices(r)
    w = np.where(iu == ju, 1.0, math.sqrt(2.0))
    return M[:, iu, ju] * w


def face_dimension(problem: SdpProblem, Y, rank_tol: float = 1e-8, trim: bool = True) -> FaceReport:
    """Dimension of the face of the feasible set whose relative interior holds Y Y^T.

    Columns of Y below ``rank_tol`` relative singular value are trimmed first
    (unless ``trim`` is false, which makes a rank-deficient Y an error).
    """
    Y = Y.Y if isinstance(Y, Factor) else np.asarray(Y, dtype=float)
    p_in = Y.shape[1]
    Yr, r = trim_factor(Y, rank_tol)
    if r < p_in and not trim:
        raise ValueError(f"Y has numerical rank {r} < p={p_in} and trimming is disabled")
    if r == 0:
        raise ValueError("Y is zero")
    L = face_matrix(problem, Yr)
    rank_L = numerical_rank(L)
    sym_dim = r * (r + 1) // 2
    dim_face = sym_dim - rank_L
    m_prime = Factor(problem, Yr).gram.m_prime
    delta = sym_dim - m_prime
    if dim_face < max(0, delta):
        raise RuntimeError(f"face dimension {dim_face} below the lower bound {max(0, delta)}")
    cap = (dim_face - delta) // r if r == p_in else None
    return FaceReport(p=r, dim_face=dim_face, delta=delta, neg_eig_cap=cap,
                      deterministic_optimal=dim_face < delta + r, m_prime=m_prime, rank_L=rank_L)


def check_nondegeneracy(problem: SdpProblem, Y) -> bool:
    """True iff {A_i Y} are linearly independent (primal non-degeneracy of Y Y^T).

    Raises DependentConstraintsError when the A_i themselves are dependent.
    """
    Ga = (problem.Avec @ problem.AvecT).toarray()
    w, V = np.linalg.eigh(Ga)
    cut = max(Ga.shape) * EPS * max(w[-1], 0.0)
    if w[0] <= cut:
        c = V[:, 0] / np.abs(V[:, 0]).max()
        terms = " + ".join(f"{c[i]:.3g}*A[{i}]" for i in np.flatnonzero(np.abs(c) > 1e-8))
        raise DependentConstraintsError(f"constraint matrices are dependent: {terms} = 0",
                                        combination=c)
    Y = Y.Y if isinstance(Y, Factor) else np.asarray(Y, dtype=float)
    return constraint_span_rank(problem, Y) == problem.m


# ---------------------------------------------------------------------------
# Rounding


def _trs_parts(problem: SdpProblem):
    C = problem.C_dense
    n = problem.n - 1
    return C[:n, :n], C[:n, n], float(C[n, n])


def trs_cost(problem: SdpProblem, x) -> float:
    A, b, c = _trs_parts(problem)
    x = np.asarray(x, dtype=float)
    return float(x @ A @ x + 2.0 * b @ x + c)


def extract_trs(problem: SdpProblem, Y, rank_tol: float = 1e-6) -> np.ndarray:
    """Recover a unit-norm TRS solution x from an optimal factor of the lifted SDP.

    Rank one: x = Y_1 z with y_2^T z = 1. Rank two: intersect the ellipse
    ||Y_1 z||^2 = 1 with the line y_2^T z = 1 and keep the root of lowest TRS
    cost (ties go to the larger line parameter).
    """
    Y = Y.Y if isinstance(Y, Factor) else np.asarray(Y, dtype=float)
    if problem.family is None or problem.family.tag != "trs":
        raise ValueError("extract_trs needs a problem built from the Trs family")
    # rotate so the factor has as few columns as its numerical rank
    Yr, r = trim_factor(Y, rank_tol)
    Y1, y2 = Yr[:-1], Yr[-1]
    ny2 = float(y2 @ y2)
    if r == 0 or ny2 == 0.0:
        raise ExtractionError("last row of Y vanishes; Y is not feasible")
    z0 = y2 / ny2
    if r == 1:
        x = Y1 @ z0
        return x / np.linalg.norm(x)
    if r > 2:
        raise ExtractionError(f"Y has numerical rank {r}; expected at most 2 at an optimum")
    w = np.array([-y2[1], y2[0]]) / math.sqrt(ny2)
    u, v = Y1 @ z0, Y1 @ w
    a, bq, cq = float(v @ v), 2.0 * float(u @ v), float(u @ u) - 1.0
    disc = bq * bq - 4.0 * a * cq
    scale = max(bq * bq, abs(4.0 * a * cq), EPS)
    if disc < 0:
        if disc < -1e-6 * scale:
            raise ExtractionError("ellipse and line do not intersect; Y is not feasible/optimal")
        disc = 0.0
    sq = math.sqrt(disc)
    roots = sorted({(-bq + sq) / (2.0 * a), (-bq - sq) / (2.0 * a)}, reverse=True)
    best, best_cost = None, math.inf
    for t in roots:
        x = u + t * v
        x = x / np.linalg.norm(x)
        cst = trs_cost(problem, x)
        if cst < best_cost - 1e-14 * max(1.0, abs(cst)):
            best, best_cost = x, cst
    return best


def extract_rank_one(Y):
    """Dominant rank-one part x of Y Y^T and the relative residual ||YY^T - xx^T|| / ||YY^T||."""
    Y = Y.Y if isinstance(Y, Factor) else np.asarray(Y, dtype=float)
    U, s, _ = np.linalg.svd(Y, full_matrices=False)
    x = U[:, 0] * s[0]
    total = math.sqrt(float(np.sum(s ** 4)))
    resid = math.sqrt(float(np.sum(s[1:] ** 4))) / total if total > 0 else 0.0
    return x, resid
