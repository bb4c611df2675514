"""Riemannian trust-region solver, saddle escape and the rank staircase."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .certification import DualCertificate, Verdict, certify, trim_factor
from .errors import RetractionError
from .geometry import Factor, hessian_vec, project_tangent, retract
from .linalg import EPS, lanczos_smallest, null_vectors, smallest_eigenpair
from .sdp_model import SdpProblem, feasible_point, pataki_bound

log = logging.getLogger(__name__)

KAPPA = 0.1
THETA = 1.0
RADIUS_UNDERFLOW = 1e-14
DENSE_HESSIAN_MAX = 400
RHO_REGULARIZATION = 1e3


@dataclass
class SolverOptions:
    """Solver settings; ``None`` tolerances and radii are filled from the problem."""

    eps_g: float | None = None
    eps_H: float | None = None
    max_outer: int = 10000
    tr_radius_init: float | None = None
    tr_radius_max: float | None = None
    tcg_max: int | None = None
    seed: int = 0
    p_schedule: str | list = "auto"
    gap_tol: float | None = None

    def __post_init__(self):
        for name in ("eps_g", "eps_H", "tr_radius_init", "tr_radius_max"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive, got {v}")
        if self.max_outer < 0:
            raise ValueError("max_outer must be nonnegative")
        if self.tcg_max is not None and self.tcg_max < 1:
            raise ValueError("tcg_max must be at least 1")
        if self.p_schedule != "auto":
            ps = [int(p) for p in self.p_schedule]
            if not ps or any(p < 1 for p in ps) or ps != sorted(set(ps)):
                raise ValueError("p_schedule must be 'auto' or a strictly increasing list of ranks >= 1")
            self.p_schedule = ps

    def tolerances(self, problem: SdpProblem):
        scale = 1.0 + problem.c_norm
        eps_g = 1e-8 * scale if self.eps_g is None else self.eps_g
        eps_H = 1e-6 * scale if self.eps_H is None else self.eps_H
        return eps_g, eps_H

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class EscalationEvent:
    p: int
    reason: str

    def to_dict(self):
        return {"p": self.p, "reason": self.reason}


@dataclass
class SolveReport:
    final_cost: float
    grad_norm: float
    hess_min_eig_estimate: float
    p_used: int
    rank_Y: int
    outer_iters: int
    tcg_iters_total: int
    success: bool
    status: str
    eps_g: float
    eps_H: float
    escalations: list = field(default_factory=list)
    certificate: DualCertificate | None = None
    wall_time: float = 0.0
    costs: list = field(default_factory=list)
    decreases: list = field(default_factory=list)

    def to_dict(self):
        return {
            "final_cost": self.final_cost,
            "grad_norm": self.grad_norm,
            "hess_min_eig_estimate": self.hess_min_eig_estimate,
            "p_used": self.p_used,
            "rank_Y": self.rank_Y,
            "outer_iters": self.outer_iters,
            "tcg_iters_total": self.tcg_iters_total,
            "success": self.success,
            "status": self.status,
            "eps_g": self.eps_g,
            "eps_H": self.eps_H,
            "escalations": [e.to_dict() for e in self.escalations],
            "certificate": None if self.certificate is None else self.certificate.to_dict(),
            "wall_time": self.wall_time,
        }


# ---------------------------------------------------------------------------
# Hessian spectrum


def tangent_basis(factor: Factor) -> np.ndarray:
    """Orthonormal basis of the tangent space as columns of an (np x k) array."""
    AY = factor.AY
    AY = AY.toarray() if hasattr(AY, "toarray") else np.asarray(AY)
    if AY.shape[0] == 0:
        return np.eye(factor.n * factor.p)
    basis, _ = null_vectors(AY)
    return basis


def hessian_min_eig(factor: Factor, rng=None, dense_max: int = DENSE_HESSIAN_MAX):
    """Smallest eigenvalue of the Riemannian Hessian and a unit tangent eigenvector.

    Dense assembly on a tangent basis when ``n p <= dense_max``; otherwise
    restarted Lanczos (50 iterations, 3 restarts) on the tangent space.
    Returns ``(inf, None)`` when the tangent space is trivial.
    """
    n, p = factor.n, factor.p
    S = factor.S
    Sa = S.array
    if n * p <= dense_max:
        U = tangent_basis(factor)
        k = U.shape[1]
        if k == 0:
            return math.inf, None
        Ut = U.T.reshape(k, n, p)
        SU = np.einsum("ij,kjp->kip", Sa, Ut)
        H = 2.0 * np.einsum("kip,lip->kl", Ut, SU)
        H = 0.5 * (H + H.T)
        w, v = np.linalg.eigh(H)
        V = (U @ v[:, 0]).reshape(n, p)
        return float(w[0]), V / np.linalg.norm(V)
    rng = np.random.default_rng(0) if rng is None else rng
    gs = factor.gram
    lam, V, _ = lanczos_smallest(
        lambda X: hessian_vec(factor, X, S, gs, check=False),
        rng.standard_normal((n, p)),
        iters=50,
        restarts=3,
        project=lambda X: project_tangent(factor, X, gs),
    )
    return float(lam), V / np.linalg.norm(V)


# ---------------------------------------------------------------------------
# Truncated CG


def _inner(a, b):
    return float(np.vdot(a, b))


def tcg(factor: Factor, grad, radius: float, max_iter: int, kappa=KAPPA, theta=THETA):
    """Steihaug-Toint truncated CG on the trust-region model at Y.

    Returns ``(eta, Heta, iterations, stop_reason)``; stop reasons are
    "negative_curvature", "exceeded_radius", "model_increased",
    "converged" and "max_iter".
    """
    S = factor.S
    gs = factor.gram
    eta = np.zeros_like(grad)
    Heta = np.zeros_like(grad)
    r = grad.copy()
    r_r = _inner(r, r)
    norm_r0 = math.sqrt(r_r)
    z_r = r_r
    delta = -r
    e_Pe, e_Pd, d_Pd = 0.0, 0.0, z_r
    model_value = 0.0
    stop = "max_iter"
    j = 0
    for j in range(1, max_iter + 1):
        Hdelta = hessian_vec(factor, delta, S, gs, check=False)
        d_Hd = _inner(delta, Hdelta)
        alpha = z_r / d_Hd if d_Hd != 0 else math.inf
        e_Pe_new = e_Pe + 2.0 * alpha * e_Pd + alpha * alpha * d_Pd
        if d_Hd <= 0 or e_Pe_new >= radius * radius:
            tau = (-e_Pd + math.sqrt(max(e_Pd * e_Pd + d_Pd * (radius * radius - e_Pe), 0.0))) / d_Pd
            eta = eta + tau * delta
            Heta = Heta + tau * Hdelta
            stop = "negative_curvature" if d_Hd <= 0 else "exceeded_radius"
            break
        new_eta = eta + alpha * delta
        new_Heta = Heta + alpha * Hdelta
        new_model = _inner(new_eta, grad) + 0.5 * _inner(new_eta, new_Heta)
        if new_model >= model_value:
            stop = "model_increased"
            break
        eta, Heta, e_Pe, model_value = new_eta, new_Heta, e_Pe_new, new_model
        r = project_tangent(factor, r + alpha * Hdelta, gs)
        r_r = _inner(r, r)
        if math.sqrt(r_r) <= norm_r0 * min(norm_r0 ** theta, kappa):
            stop = "converged"
            break
        z_r_old, z_r = z_r, r_r
        beta = z_r / z_r_old
        delta = project_tangent(factor, -r + beta * delta, gs)
        e_Pd = beta * (e_Pd + alpha * d_Pd)
        d_Pd = z_r + beta * beta * d_Pd
    return eta, Heta, j, stop


def _cauchy_step(factor: Factor, grad, radius):
    Hg = hessian_vec(factor, grad, check=False)
    g_g = _inner(grad, grad)
    g_Hg = _inner(grad, Hg)
    gn = math.sqrt(g_g)
    if g_Hg <= 0:
        tau = radius / gn
    else:
        tau = min(g_g / g_Hg, radius / gn)
    return -tau * grad, -tau * Hg


def _model(grad, eta, Heta):
    return _inner(grad, eta) + 0.5 * _inner(eta, Heta)


# ---------------------------------------------------------------------------
# RTR


def cost_decrease(f: Factor, g: Factor) -> float:
    """g(Y_f) - g(Y_g) evaluated as <C (Y_f - Y_g), Y_f + Y_g>.

    Accurate relative to the step size rather than to |g|, so progress stays
    measurable when the decrease is below the rounding error of the cost.
    """
    D = f.Y - g.Y
    return float(np.vdot(f.problem.C.matmul(D), f.Y + g.Y))


def _try_retract(factor, eta):
    try:
        return retract(factor, eta)
    except RetractionError:
        return None


def rtr(problem: SdpProblem, Y0, opts: SolverOptions | None = None):
    """Riemannian trust-region minimization of g(Y) = <C Y, Y> from a feasible Y0.

    Stops when ``||grad|| <= eps_g`` and the Hessian's smallest eigenvalue on
    the tangent space is ``>= -eps_H``; at a first-order point with negative
    curvature it steps along the eigenvector. Accepted steps never increase
    the cost (measured by :func:`cost_decrease`) beyond rounding: once the
    predicted decrease drops below the noise floor ``1e3 eps max(1, |g|)``, a
    step is also taken when it lowers the gradient norm. Returns the final
    factor and a SolveReport whose ``success`` flag is false on
    iteration-cap or radius underflow.
    """
    opts = SolverOptions() if opts is None else opts
    t0 = time.perf_counter()
    f = Y0 if isinstance(Y0, Factor) else Factor(problem, Y0)
    if not f.is_feasible():
        raise ValueError(f"Y0 is infeasible (residual {f.residual:.3e})")
    eps_g, eps_H = opts.tolerances(problem)
    rng = np.random.default_rng(opts.seed)
    ny = float(np.linalg.norm(f.Y))
    radius_max = opts.tr_radius_max if opts.tr_radius_max is not None else 4.0 * max(ny, EPS)
    radius = opts.tr_radius_init if opts.tr_radius_init is not None else ny / 8.0
    radius = min(max(radius, 10 * RADIUS_UNDERFLOW), radius_max)
    dim = max(1, f.n * f.p - f.gram.m_prime)
    max_inner = dim if opts.tcg_max is None else opts.tcg_max
    costs = [f.cost]
    decreases = []
    tcg_total = 0
    status = "max_outer"
    success = False
    lam = math.nan
    it = 0
    for it in range(opts.max_outer + 1):
        grad = f.grad
        gn = f.grad_norm
        boundary = False
        if gn <= eps_g:
            lam, V = hessian_min_eig(f, rng)
            if lam >= -eps_H or V is None:
                status, success = "converged", True
                break
            if it == opts.max_outer:
                break
            if _inner(V, grad) > 0:
                V = -V
            eta = radius * V
            Heta = hessian_vec(f, eta, check=False)
            boundary = True
        else:
            if it == opts.max_outer:
                break
            eta, Heta, k, stop = tcg(f, grad, radius, max_inner)
            tcg_total += k
            boundary = stop in ("negative_curvature", "exceeded_radius")
            ce, cHe = _cauchy_step(f, grad, radius)
            if _model(grad, ce, cHe) < _model(grad, eta, Heta):
                eta, Heta = ce, cHe
        model_dec = -_model(grad, eta, Heta)
        cand = _try_retract(f, eta)
        if cand is None:
            rho = -math.inf
        else:
            reg = max(1.0, abs(f.cost)) * EPS * RHO_REGULARIZATION
            actual = cost_decrease(f, cand)
            rho = (actual + reg) / (model_dec + reg)
        if rho < 0.25:
            radius *= 0.25
        elif rho > 0.75 and boundary:
            radius = min(2.0 * radius, radius_max)
        accept = cand is not None and rho > 0.1 and (
            actual >= 0
            # decrease lost in rounding: take the step if it still improves the gradient
            or (-actual <= reg and model_dec <= reg and cand.grad_norm < gn))
        if accept:
            f = cand
            costs.append(f.cost)
            decreases.append(actual)
        else:
            radius = min(radius, 0.25 * float(np.linalg.norm(eta)))
        if radius < RADIUS_UNDERFLOW:
            status = "radius_underflow"
            break
    if not success:
        lam, _ = hessian_min_eig(f, rng)
    _, rank = trim_factor(f.Y)
    report = SolveReport(
        final_cost=f.cost, grad_norm=f.grad_norm, hess_min_eig_estimate=lam, p_used=f.p,
        rank_Y=rank, outer_iters=it, tcg_iters_total=tcg_total, success=success,
        status=status, eps_g=eps_g, eps_H=eps_H, wall_time=time.perf_counter() - t0, costs=costs,
        decreases=decreases,
    )
    log.debug("rtr p=%d status=%s cost=%.12g iters=%d", f.p, status, f.cost, it)
    return f, report


# ---------------------------------------------------------------------------
# Escape and staircase


def escalate(factor: Factor) -> Factor:
    """[Y | 0]: same X = Y Y^T, one more column."""
    Y = factor.Y
    return Factor(factor.problem, np.hstack([Y, np.zeros((Y.shape[0], 1))]))


def escape_direction(factor: Factor, S=None, eps_H: float | None = None, rank_tol: float = 1e-8):
    """Unit descent direction x z^T at a column-rank-deficient Y, or None.

    x is a unit eigenvector for lambda_min(S) and z a unit vector with
    Y z = 0; then <V, Hess g(Y)[V]> = 2 lambda_min(S). None is returned when
    Y has full column rank or lambda_min(S) >= -eps_H / 2.
    """
    pb = factor.problem
    if eps_H is None:
        eps_H = 1e-6 * (1.0 + pb.c_norm)
    S = factor.S if S is None else S
    Y = factor.Y
    _, s, vt = np.linalg.svd(Y, full_matrices=True)
    smax = s[0] if s.size else 0.0
    if factor.p > s.size or smax == 0.0:
        z = vt[-1]
    elif s[-1] <= rank_tol * smax:
        z = vt[-1]
    else:
        return None
    lam, x, _ = smallest_eigenpair(S.array)
    if not lam < -0.5 * eps_H:
        return None
    x = x / np.linalg.norm(x)
    return np.outer(x, z / np.linalg.norm(z))


@dataclass(frozen=True)
class EscapeStep:
    factor: Factor
    step: float
    decrease: float
    curvature: float


def escape_step(factor: Factor, V, t0: float | None = None, min_step: float = 1e-12):
    """Move along the escape direction V with backtracking.

    The curvature ``lam = <V, Hess[V]> / 2`` is negative; the step t is
    halved from ``t0`` until the cost decreases by at least ``0.5 |lam| t^2``.
    Returns None if no such step exists above ``min_step``.
    """
    V = np.asarray(V, dtype=float)
    V = V / np.linalg.norm(V)
    lam = 0.5 * _inner(V, hessian_vec(factor, V, check=False))
    if not lam < 0:
        return None
    t = t0 if t0 is not None else max(float(np.linalg.norm(factor.Y)), 1.0) / 8.0
    while t >= min_step:
        cand = _try_retract(factor, t * V)
        if cand is not None:
            dec = cost_decrease(factor, cand)
            if dec >= 0.5 * abs(lam) * t * t:
                return EscapeStep(factor=cand, step=t, decrease=dec, curvature=lam)
        t *= 0.5
    return None


def auto_start_rank(problem: SdpProblem, seed: int = 0) -> int:
    """pataki_bound(m') + 1, capped at n + 1; m' measured at a feasible point."""
    rng = np.random.default_rng([seed, 1])
    Y = feasible_point(problem, problem.n, rng)
    m_prime = Factor(problem, Y).gram.m_prime
    return min(pataki_bound(m_prime) + 1, problem.n + 1)


def certify_tolerances(factor: Factor, eps_g: float, eps_H: float):
    """Certificate tolerances used by the staircase: (eps_g, eps_H/2 + 10 eps ||S||)."""
    s_norm = float(np.linalg.norm(factor.S.array, 2))
    return eps_g, 0.5 * eps_H + 10.0 * EPS * s_norm


def staircase(problem: SdpProblem, opts: SolverOptions | None = None, Y0=None):
    """Solve at increasing rank until the dual certificate is positive semidefinite.

    Starting rank: ``Y0``'s width if given, else the first entry of an
    explicit schedule, else ``pataki_bound(m') + 1``. After each solve the
    certificate is checked; on failure Y is padded with a zero column,
    moved along an escape direction when one exists, and solved again. The
    auto schedule stops at p = n + 1; an explicit schedule at its last entry.
    """
    opts = SolverOptions() if opts is None else opts
    t0 = time.perf_counter()
    eps_g, eps_H = opts.tolerances(problem)
    rng = np.random.default_rng(opts.seed)
    schedule = None if opts.p_schedule == "auto" else list(opts.p_schedule)
    if Y0 is not None:
        f0 = Y0 if isinstance(Y0, Factor) else Factor(problem, Y0)
        Y = f0.Y
        p = Y.shape[1]
        if schedule is not None:
            schedule = [q for q in schedule if q > p]
            schedule.insert(0, p)
    else:
        p = schedule[0] if schedule is not None else auto_start_rank(problem, opts.seed)
        Y = feasible_point(problem, p, rng)
    escalations = []
    outer = tcg_total = 0
    while True:
        f, rep = rtr(problem, Y, opts)
        outer += rep.outer_iters
        tcg_total += rep.tcg_iters_total
        tol_g, tol_H = certify_tolerances(f, eps_g, eps_H)
        cert = certify(problem, f, tol_g=tol_g, tol_H=tol_H, gap_tol=opts.gap_tol)
        if cert.verdict is Verdict.CERTIFIED_OPTIMAL:
            break
        if schedule is None:
            nxt = p + 1 if p < problem.n + 1 else None
        else:
            later = [q for q in schedule if q > p]
            nxt = later[0] if later else None
        if nxt is None:
            break
        reason = (f"lambda_min(S)={cert.lambda_min_S:.3e}, ||SY||={cert.sy_norm:.3e}"
                  f" at p={p}; solver status {rep.status}")
        escalations.append(EscalationEvent(p=nxt, reason=reason))
        g = f
        while g.p < nxt:
            g = escalate(g)
        V = escape_direction(g, eps_H=eps_H)
        if V is not None:
            moved = escape_step(g, V)
            if moved is not None:
                g = moved.factor
        Y, p = g.Y, nxt
    rep.escalations = escalations
    rep.certificate = cert
    rep.outer_iters = outer
    rep.tcg_iters_total = tcg_total
    rep.success = rep.success and cert.verdict is Verdict.CERTIFIED_OPTIMAL
    rep.wall_time = time.perf_counter() - t0
    return f, rep
