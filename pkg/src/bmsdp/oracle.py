"""Slow reference solvers and dense reference geometry used to validate the package.

Everything here is built from dense matrices and textbook routines so it
does not share code paths with the solver beyond elementary products.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize

from .sdp_model import SdpProblem, check_smoothness, feasible_point

_EPS = np.finfo(float).eps


@dataclass
class OracleResult:
    f_star: float
    method: str
    X_star: np.ndarray | None = None
    x: np.ndarray | None = None
    error_bar: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        out = {"f_star": self.f_star, "method": self.method, "error_bar": self.error_bar}
        if self.x is not None:
            out["x"] = self.x.tolist()
        out.update(self.extra)
        return out


def _check_witness(problem: SdpProblem | None, X, f_star, C=None):
    if X is None:
        return
    if problem is not None:
        vals = np.array([np.vdot(A.toarray(), X) for A in problem.A])
        res = np.abs(vals - problem.b).max(initial=0.0)
        assert res <= 1e-9 * (1 + np.abs(problem.b).max(initial=0.0)), f"witness infeasible ({res:.2e})"
        C = problem.C.toarray()
    val = float(np.vdot(C, X))
    assert abs(val - f_star) <= 1e-9 * max(1.0, abs(f_star)), "witness does not attain f*"


# ---------------------------------------------------------------------------
# Closed-form families


def oracle_geneig(C, B) -> OracleResult:
    """Smallest generalized eigenvalue of the pencil (C, B); witness x x^T / x^T B x."""
    C = np.asarray(C, dtype=float)
    B = np.asarray(B, dtype=float)
    try:
        sla.cholesky(B)
    except np.linalg.LinAlgError as exc:
        raise ValueError("B must be positive definite") from exc
    w, V = sla.eigh(C, B)
    x = V[:, 0]
    x = x / math.sqrt(float(x @ B @ x))
    X = np.outer(x, x)
    f = float(w[0])
    _check_witness(None, X, f, C=C)
    return OracleResult(f_star=f, method="geneig-dense-pencil", X_star=X, x=x)


def trs_value(A, b, c, x):
    return float(x @ A @ x + 2.0 * b @ x + c)


def oracle_trs(A, b, c=0.0, max_iter=200) -> OracleResult:
    """Global minimum of x^T A x + 2 b^T x + c over the unit sphere.

    Secular equation ||(A + nu I)^{-1} b|| = 1 solved for nu > -lambda_min(A)
    by Newton on 1/||x(nu)|| - 1, safeguarded by bisection; the hard case
    adds a bottom-eigenvector component.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if n < 2:
        raise ValueError("need n >= 2")
    w, Q = np.linalg.eigh(A)
    beta = Q.T @ b
    lam1 = w[0]
    scale = max(1.0, float(np.abs(w).max()))
    bottom = np.abs(w - lam1) <= 1e-10 * scale
    nb = float(np.linalg.norm(b))
    if np.linalg.norm(beta[bottom]) <= 1e-12 * max(1.0, nb):
        coef = np.zeros(n)
        rest = ~bottom
        coef[rest] = -beta[rest] / (w[rest] - lam1)
        nc = float(np.linalg.norm(coef))
        if nc <= 1.0:
            coef[np.flatnonzero(bottom)[0]] = math.sqrt(max(0.0, 1.0 - nc * nc))
            x = Q @ coef
            f = trs_value(A, b, c, x)
            return OracleResult(f_star=f, method="trs-hard-case", x=x,
                                X_star=np.outer(np.append(x, 1), np.append(x, 1)))
    lo, hi = -lam1, -lam1 + nb
    nu = hi
    for _ in range(max_iter):
        d = w + nu
        y = beta / d
        ny = float(np.linalg.norm(y))
        psi = 1.0 / ny - 1.0
        if psi > 0:
            hi = nu
        else:
            lo = nu
        if abs(psi) <= 4 * _EPS:
            break
        dny = -float(np.sum(beta * beta / d ** 3)) / ny
        step = -psi / (-dny / ny ** 2)
        cand = nu + step
        if not (lo < cand < hi):
            cand = 0.5 * (lo + hi)
        if cand == nu or hi - lo <= 4 * _EPS * max(1.0, abs(nu)):
            break
        nu = cand
    x = -(Q @ (beta / (w + nu)))
    x = x / np.linalg.norm(x)
    f = trs_value(A, b, c, x)
    return OracleResult(f_star=f, method="trs-secular", x=x,
                        X_star=np.outer(np.append(x, 1), np.append(x, 1)), extra={"nu": nu})


def oracle_trs_sampling(A, b, c=0.0, samples=10 ** 6, seed=0, batch=100_000, polish=5) -> OracleResult:
    """Brute force: best of many random unit vectors, then local polish of the best few."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    rng = np.random.default_rng(seed)
    best_vals = np.full(polish, np.inf)
    best_x = np.zeros((polish, n))
    done = 0
    while done < samples:
        k = min(batch, samples - done)
        X = rng.standard_normal((k, n))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        vals = np.einsum("ki,ij,kj->k", X, A, X) + 2.0 * X @ b + c
        allv = np.concatenate([best_vals, vals])
        allx = np.vstack([best_x, X])
        keep = np.argsort(allv)[:polish]
        best_vals, best_x = allv[keep], allx[keep]
        done += k

    def obj(z):
        u = z / np.linalg.norm(z)
        return trs_value(A, b, c, u)

    f_best, x_best = math.inf, None
    for x0 in best_x:
        r = minimize(obj, x0, method="BFGS", options={"gtol": 1e-12, "maxiter": 2000})
        u = r.x / np.linalg.norm(r.x)
        v = trs_value(A, b, c, u)
        if v < f_best:
            f_best, x_best = v, u
    return OracleResult(f_star=f_best, method="trs-sampling", x=x_best)


def oracle_maxcut3_grid(C, steps=2000) -> OracleResult:
    """Max-Cut SDP with n = 3 over X_ij = cos(t_i - t_j), t_1 = 0, by grid plus polish.

    Every feasible 3 x 3 correlation matrix of rank <= 2 has this form and
    an optimum of rank <= 2 always exists (Pataki).
    """
    C = np.asarray(C, dtype=float)
    t = np.linspace(-math.pi, math.pi, steps, endpoint=False)
    t2, t3 = np.meshgrid(t, t, indexing="ij")
    val = (np.trace(C) + 2 * C[0, 1] * np.cos(t2) + 2 * C[0, 2] * np.cos(t3)
           + 2 * C[1, 2] * np.cos(t2 - t3))
    i = np.unravel_index(np.argmin(val), val.shape)

    def obj(z):
        return float(np.trace(C) + 2 * C[0, 1] * math.cos(z[0]) + 2 * C[0, 2] * math.cos(z[1])
                     + 2 * C[1, 2] * math.cos(z[0] - z[1]))

    r = minimize(obj, np.array([t2[i], t3[i]]), method="BFGS", options={"gtol": 1e-12})
    th = np.array([0.0, r.x[0], r.x[1]])
    X = np.cos(th[:, None] - th[None, :])
    return OracleResult(f_star=float(np.vdot(C, X)), method="maxcut3-grid", X_star=X)


# ---------------------------------------------------------------------------
# Dense reference geometry


def dense_constraints(problem: SdpProblem):
    return [A.toarray() for A in problem.A]


def constraint_rows(problem: SdpProblem, Y):
    """Rows vec(A_i Y), row-major, built from dense A_i."""
    Y = np.asarray(Y, dtype=float)
    return np.array([(Ai @ Y).ravel() for Ai in dense_constraints(problem)]).reshape(-1, Y.size)


def oracle_tangent_basis(problem: SdpProblem, Y):
    """Orthonormal tangent basis as columns, from scipy's SVD-based null space."""
    M = constraint_rows(problem, Y)
    return sla.null_space(M, rcond=max(M.shape) * _EPS)


def oracle_projector(problem: SdpProblem, Y):
    B = oracle_tangent_basis(problem, Y)
    return B @ B.T


def oracle_s_matrix(problem: SdpProblem, Y):
    """(S, mu) with mu the least-squares multipliers, via a dense pseudo-inverse of G."""
    Y = np.asarray(Y, dtype=float)
    As = dense_constraints(problem)
    C = problem.C.toarray()
    M = constraint_rows(problem, Y)
    G = M @ M.T
    rhs = M @ (C @ Y).ravel()
    mu = np.linalg.pinv(G, rcond=max(G.shape[0], Y.size) * _EPS, hermitian=True) @ rhs
    S = C - sum(mi * Ai for mi, Ai in zip(mu, As))
    return S, mu


def oracle_hessian_matrix(problem: SdpProblem, Y):
    """(H, B): Hessian of g on the tangent basis B, H = 2 B^T (S kron I_p) B."""
    Y = np.asarray(Y, dtype=float)
    S, _ = oracle_s_matrix(problem, Y)
    B = oracle_tangent_basis(problem, Y)
    K = np.kron(S, np.eye(Y.shape[1]))
    H = 2.0 * B.T @ K @ B
    return 0.5 * (H + H.T), B


def cost(problem: SdpProblem, Y):
    Y = np.asarray(Y, dtype=float)
    return float(np.vdot(problem.C.toarray() @ Y, Y))


# ---------------------------------------------------------------------------
# Escalation oracle


def oracle_sdp_via_escalation(problem: SdpProblem, seed=0, Y0=None, check_assumption=True,
                              max_outer=20000) -> OracleResult:
    """Solve at p = n + 1 with tight tolerances; f* = g(Y) with a one-sided error bar.

    At p = n + 1 every Y is column-rank deficient, so with
    ``eps_g = ||grad||`` and ``eps_H = 2 max(0, -lambda_min(S))`` (both
    measured with dense reference code) the optimum satisfies
    ``0 <= g(Y) - f* <= (eps_H R + eps_g sqrt(R)) / 2``, dropping the
    sqrt(R) term when the identity is in the range of the adjoint.
    """
    from .rtr import SolverOptions, rtr

    if problem.R is None:
        raise ValueError("oracle_sdp_via_escalation needs a known trace bound R")
    if check_assumption:
        rep = check_smoothness(problem, problem.n + 1, samples=3, seed=seed)
        if not rep.constant_rank:
            raise ValueError("constraint span rank is not constant over sampled points")
    p = problem.n + 1
    if Y0 is None:
        Y0 = feasible_point(problem, p, np.random.default_rng([seed, 7]))
    scale = 1.0 + problem.c_norm
    opts = SolverOptions(eps_g=1e-10 * scale, eps_H=1e-8 * scale, max_outer=max_outer, seed=seed)
    f, rep = rtr(problem, Y0, opts)
    if not rep.success:
        raise RuntimeError(f"escalation oracle did not converge: {rep.status}")
    Y = f.Y
    S, _ = oracle_s_matrix(problem, Y)
    eps_g = 2.0 * float(np.linalg.norm(S @ Y))
    lam = float(np.linalg.eigvalsh(S)[0])
    eps_H = 2.0 * max(0.0, -lam)
    R = problem.R
    bar = 0.5 * (eps_H * R + (0.0 if problem.identity_in_range else eps_g * math.sqrt(R)))
    X = Y @ Y.T
    return OracleResult(f_star=cost(problem, Y), method="escalation-p=n+1", X_star=X, error_bar=bar,
                        extra={"solver_status": rep.status, "lambda_min_S": lam, "grad_norm": eps_g})
