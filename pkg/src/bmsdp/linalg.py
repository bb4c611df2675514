"""Small dense linear-algebra helpers shared by the geometry and solver code."""
from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.linalg as sla

EPS = np.finfo(float).eps


def rank_cutoff(values, shape, rcond=None):
    """Threshold below which singular values of a ``shape`` matrix count as zero.

    Default convention: ``max(shape) * eps * max(values)``.
    """
    values = np.asarray(values)
    vmax = float(values.max()) if values.size else 0.0
    if rcond is None:
        rcond = max(shape) * EPS
    return rcond * vmax


def numerical_rank(M, rcond=None):
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.count_nonzero(s > rank_cutoff(s, M.shape, rcond)))


def null_vectors(M, rcond=None):
    """Orthonormal basis (as columns) of the null space of M, plus its rank."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    _, s, vt = np.linalg.svd(M, full_matrices=True)
    r = int(np.count_nonzero(s > rank_cutoff(s, M.shape, rcond))) if s.size else 0
    return vt[r:].T.copy(), r


def lanczos_smallest(
    matvec: Callable[[np.ndarray], np.ndarray],
    v0: np.ndarray,
    iters: int = 50,
    restarts: int = 3,
    project: Callable[[np.ndarray], np.ndarray] | None = None,
):
    """Smallest eigenpair of a symmetric operator by restarted Lanczos.

    Full reorthogonalization is used. Each restart begins from the best Ritz
    vector of the previous pass. Returns ``(theta, y, residual)`` where
    ``residual = ||A y - theta y||`` so that an eigenvalue of A lies within
    ``residual`` of ``theta``.
    """
    shape = v0.shape
    v = np.asarray(v0, dtype=float).ravel()
    if project is not None:
        v = project(v.reshape(shape)).ravel()
    nv = np.linalg.norm(v)
    if nv == 0.0:
        raise ValueError("zero starting vector")
    theta, y, res = np.inf, v / nv, np.inf

    def op(x):
        w = matvec(x.reshape(shape))
        if project is not None:
            w = project(w)
        return np.asarray(w, dtype=float).ravel()

    for _ in range(max(1, restarts)):
        Q = np.zeros((v.size, iters))
        alpha = np.zeros(iters)
        beta = np.zeros(iters)
        q = v / np.linalg.norm(v)
        k = 0
        for j in range(iters):
            Q[:, j] = q
            w = op(q)
            alpha[j] = q @ w
            w = w - Q[:, : j + 1] @ (Q[:, : j + 1].T @ w)
            w = w - Q[:, : j + 1] @ (Q[:, : j + 1].T @ w)
            k = j + 1
            b = np.linalg.norm(w)
            if b <= 1e-14 * max(1.0, abs(alpha[j])) or k == v.size:
                break
            beta[j] = b
            q = w / b
        evals, evecs = sla.eigh_tridiagonal(alpha[:k], beta[: k - 1])
        cand = Q[:, :k] @ evecs[:, 0]
        cand /= np.linalg.norm(cand)
        Ay = op(cand)
        t = float(cand @ Ay)
        r = float(np.linalg.norm(Ay - t * cand))
        if t < theta or (t == theta and r < res):
            theta, y, res = t, cand, r
        if r <= 1e-12 * max(1.0, abs(t)):
            break
        v = cand
    return theta, y.reshape(shape), res


def smallest_eigenpair(M, dense_max=2000, rng=None, iters=50, restarts=3):
    """Smallest eigenpair of a symmetric matrix with a residual error bar.

    Dense solver up to ``dense_max``; restarted Lanczos above.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if n <= dense_max:
        w, v = sla.eigh(M, subset_by_index=[0, 0])
        x = v[:, 0]
        lam = float(w[0])
    else:
        rng = np.random.default_rng(0) if rng is None else rng
        lam, x, _ = lanczos_smallest(lambda u: M @ u, rng.standard_normal(n), iters, restarts)
    res = float(np.linalg.norm(M @ x - lam * x))
    return lam, x, res
