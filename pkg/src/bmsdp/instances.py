"""Seeded generators for test and benchmark instances."""
from __future__ import annotations

import math

import numpy as np

from .sdp_model import GenEig, OrthoCut, SdpProblem, Spheres, Trs, build_family, maxcut

GRAPHS = ("cycle", "complete", "random", "gaussian")


def laplacian(W) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    return np.diag(W.sum(axis=1)) - W


def cycle_adjacency(n: int) -> np.ndarray:
    W = np.zeros((n, n))
    idx = np.arange(n)
    W[idx, (idx + 1) % n] = 1.0
    W[(idx + 1) % n, idx] = 1.0
    return W


def graph_cost(n: int, graph: str = "cycle", rng=None, density: float = 0.5) -> np.ndarray:
    """Cost matrix for Max-Cut style problems: -L/4 for a graph, or a symmetric Gaussian."""
    if graph == "cycle":
        return -laplacian(cycle_adjacency(n)) / 4.0
    if graph == "complete":
        return -laplacian(np.ones((n, n)) - np.eye(n)) / 4.0
    rng = np.random.default_rng(0) if rng is None else rng
    if graph == "random":
        U = np.triu((rng.random((n, n)) < density).astype(float), 1)
        return -laplacian(U + U.T) / 4.0
    if graph == "gaussian":
        return random_symmetric(n, rng)
    raise ValueError(f"unknown graph {graph!r}; expected one of {GRAPHS}")


def random_symmetric(n: int, rng) -> np.ndarray:
    G = rng.standard_normal((n, n))
    return (G + G.T) / 2.0


def random_spd(n: int, rng, cond: float = 10.0) -> np.ndarray:
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = np.exp(rng.uniform(0.0, math.log(cond), n))
    return (Q * w) @ Q.T


def random_geneig(n: int, rng) -> GenEig:
    return GenEig(C=random_symmetric(n, rng), B=random_spd(n, rng))


def random_trs(n: int, rng) -> Trs:
    return Trs(A=random_symmetric(n, rng), b=rng.standard_normal(n), c=float(rng.standard_normal()))


def hard_case_trs(n: int, rng) -> Trs:
    """TRS with b orthogonal to the bottom eigenvector of A and ||(A - l1 I)^+ b|| < 1.

    The lifted SDP then has rank-two optima.
    """
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = rng.uniform(-1.0, 1.0, n)
    w[1:] = w[0] + 0.5 + np.abs(w[1:])
    A = (Q * w) @ Q.T
    gaps = w[1:] - w[0]
    coef = np.zeros(n)
    coef[1:] = rng.standard_normal(n - 1)
    coef[1:] *= rng.uniform(0.1, 0.9) / np.linalg.norm(coef[1:] / gaps)
    b = Q @ coef
    return Trs(A=0.5 * (A + A.T), b=b, c=float(rng.standard_normal()))


def local_min_trs() -> Trs:
    """A TRS instance whose lifted problem at p = 1 has a strict suboptimal local minimum.

    A = diag(-1, 1), b = (0.1, 0), c = 0: x = e_1 is a local minimizer of the
    sphere problem with value -0.8, while x = -e_1 is optimal with -1.2.
    """
    return Trs(A=np.diag([-1.0, 1.0]), b=np.array([0.1, 0.0]), c=0.0)


def local_min_trs_point() -> np.ndarray:
    """The rank-one factor [e_1; 1] of the suboptimal critical point above."""
    return np.array([[1.0], [0.0], [1.0]])


def random_orthocut(n: int, d: int, rng) -> SdpProblem:
    return build_family(OrthoCut(C=random_symmetric(n, rng), d=d))


def random_maxcut(n: int, rng) -> SdpProblem:
    return maxcut(random_symmetric(n, rng))


def cycle_spiral(n: int, k: int, p: int = 2) -> np.ndarray:
    """Rows (cos 2 pi k i / n, sin 2 pi k i / n) padded to p columns.

    Critical for Max-Cut on the n-cycle because C Y = lambda_k Y row-wise;
    for 0 < k < n/2 with k not the minimizing frequency it is a full-rank,
    suboptimal critical point at p = 2.
    """
    ang = 2.0 * math.pi * k * np.arange(n) / n
    Y = np.zeros((n, p))
    Y[:, 0] = np.cos(ang)
    Y[:, 1] = np.sin(ang)
    return Y


def orthocut_stacked_identity(n: int, d: int, p: int) -> np.ndarray:
    """Feasible OrthoCut point attaining the face-dimension upper bound (d | p, p <= n).

    Start from rows of I_p repeated in d-row slices, then make the first p
    rows equal to I_p so the factor has full column rank p.
    """
    if p % d or n % d or p > n:
        raise ValueError("need d | p, d | n and p <= n")
    Y = np.zeros((n, p))
    for s in range(n // d):
        Y[s * d:(s + 1) * d, :d] = np.eye(d)
    Y[:p] = np.eye(p)
    return Y


def random_family_problem(family: str, n: int, rng, d: int = 2) -> SdpProblem:
    """A random instance of a built-in family of size about n (Trs lifts to n + 1)."""
    if family == "geneig":
        return build_family(random_geneig(n, rng))
    if family == "trs":
        return build_family(random_trs(n, rng))
    if family == "spheres":
        cut = int(rng.integers(1, n)) if n > 1 else 1
        sizes = (cut, n - cut) if n > 1 else (1,)
        return build_family(Spheres(C=random_symmetric(n + 1, rng), sizes=sizes))
    if family == "orthocut":
        n = max(d, n - n % d)
        return build_family(OrthoCut(C=random_symmetric(n, rng), d=d))
    raise ValueError(f"unknown family {family!r}")


def random_instance(seed: int, n_max: int = 20, p_max: int = 6):
    """Seeded (problem, Y) pair: family cycles with the seed, Y random feasible."""
    from .sdp_model import feasible_point

    rng = np.random.default_rng(seed)
    family = ("geneig", "trs", "spheres", "orthocut")[seed % 4]
    n = int(rng.integers(2, n_max)) if family == "trs" else int(rng.integers(2, n_max + 1))
    d = int(rng.integers(1, 3))
    pb = random_family_problem(family, n, rng, d=d)
    lo = d if family == "orthocut" else 1
    p = int(rng.integers(lo, p_max + 1))
    return pb, feasible_point(pb, p, rng)
