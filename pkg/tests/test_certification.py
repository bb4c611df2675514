import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmsdp.certification import (
    Verdict,
    certify,
    check_nondegeneracy,
    extract_rank_one,
    extract_trs,
    face_dimension,
    trs_cost,
)
from bmsdp.errors import DependentConstraintsError, ExtractionError, InfeasibleError
from bmsdp.geometry import Factor
from bmsdp.instances import (
    cycle_spiral,
    graph_cost,
    hard_case_trs,
    local_min_trs,
    local_min_trs_point,
    orthocut_stacked_identity,
    random_family_problem,
    random_geneig,
    random_trs,
)
from bmsdp.oracle import oracle_geneig, oracle_trs
from bmsdp.rtr import SolverOptions, hessian_min_eig, rtr, staircase
from bmsdp.sdp_model import (
    GenEig,
    OrthoCut,
    SdpProblem,
    Trs,
    apply_A_adjoint,
    build_family,
    feasible_point,
    maxcut,
    pataki_bound,
)

seeds = st.integers(0, 10**6)


def geneig_optimum(fam):
    """Rank-one factor of the oracle's generalized-eigenvector optimum."""
    res = oracle_geneig(fam.C, fam.B)
    return res, res.x[:, None] / math.sqrt(res.x @ fam.B @ res.x)


# --- certify ---------------------------------------------------------------


@pytest.mark.parametrize("seed", range(5))
def test_geneig_optimum_is_certified(seed):
    fam = random_geneig(6, np.random.default_rng(seed))
    pb = build_family(fam)
    res, Y = geneig_optimum(fam)
    cert = certify(pb, Y)
    assert cert.verdict is Verdict.CERTIFIED_OPTIMAL
    assert cert.lambda_min_S >= -1e-10
    assert cert.cost == pytest.approx(res.f_star, rel=1e-12, abs=1e-12)


def test_cost_in_range_of_adjoint_has_zero_certificate():
    pb0 = build_family(OrthoCut(C=np.eye(6), d=2))
    nu = np.random.default_rng(0).standard_normal(pb0.m)
    C = apply_A_adjoint(pb0, nu).toarray()
    pb = build_family(OrthoCut(C=C, d=2))
    Y = feasible_point(pb, 3, np.random.default_rng(1))
    cert = certify(pb, Y)
    assert np.abs(cert.S.toarray()).max() <= 1e-12
    assert cert.verdict is Verdict.CERTIFIED_OPTIMAL
    assert cert.cost == pytest.approx(nu @ pb.b, abs=1e-12)


def test_trs_local_min_is_not_certified():
    pb = build_family(local_min_trs())
    Y = local_min_trs_point()
    f = Factor(pb, Y)
    assert f.grad_norm <= 1e-14
    lam_hess, _ = hessian_min_eig(f)
    assert lam_hess > 0  # second-order critical at p = 1
    cert = certify(pb, Y)
    assert cert.verdict is not Verdict.CERTIFIED_OPTIMAL
    assert cert.lambda_min_S < 0
    # the oracle confirms suboptimality
    fam = local_min_trs()
    assert oracle_trs(fam.A, fam.b, fam.c).f_star < cert.cost - 0.1


def test_gap_bound_formula_and_gap_bounded_verdict():
    pb = build_family(GenEig(C=np.diag([1.0, 2.0, 3.0]), B=np.diag([1.0, 2.0, 4.0])))
    Y = feasible_point(pb, 2, np.random.default_rng(3))
    cert = certify(pb, Y)
    assert pb.R is not None and not pb.identity_in_range
    expect = cert.eps_H * pb.R + cert.eps_g * math.sqrt(pb.R)
    assert cert.gap_bound == pytest.approx(expect, rel=1e-15)
    assert cert.eps_g == 2 * cert.sy_norm
    assert cert.verdict is Verdict.INCONCLUSIVE
    loose = certify(pb, Y, gap_tol=2 * cert.gap_bound)
    assert loose.verdict is Verdict.GAP_BOUNDED


def test_identity_in_range_drops_sqrt_term():
    pb = maxcut(graph_cost(6, "cycle"))
    Y = feasible_point(pb, 2, np.random.default_rng(0))
    cert = certify(pb, Y)
    assert cert.gap_bound == pytest.approx(cert.eps_H * pb.R, rel=1e-15)


def test_unknown_R_gives_unknown_gap():
    pb = SdpProblem(C=np.eye(3), A=[np.diag([1.0, 0.0, 0.0])], b=[1.0])
    assert pb.R is None
    cert = certify(pb, np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]]))
    assert cert.gap_bound is None


def test_certify_rejects_infeasible():
    pb = maxcut(np.eye(3))
    with pytest.raises(InfeasibleError):
        certify(pb, np.ones((3, 2)))


@given(seeds)
@settings(max_examples=20, deadline=None)
def test_certified_optimal_is_sound(seed):
    # Certificate soundness against the GenEig oracle.
    rng = np.random.default_rng(seed)
    fam = random_geneig(int(rng.integers(2, 9)), rng)
    pb = build_family(fam)
    f, _ = rtr(pb, feasible_point(pb, 2, rng), SolverOptions(seed=seed))
    cert = certify(pb, f)
    f_star = oracle_geneig(fam.C, fam.B).f_star
    if cert.verdict is Verdict.CERTIFIED_OPTIMAL:
        R = pb.R
        slack = 100 * np.finfo(float).eps * (1 + abs(f_star))
        assert 2 * (cert.cost - f_star) <= 2 * cert.tol_H * R + 2 * cert.tol_g * math.sqrt(R) + slack


# --- faces -----------------------------------------------------------------


@given(seeds, st.integers(1, 4))
@settings(max_examples=30, deadline=None)
def test_geneig_face_dimension(seed, p):
    rng = np.random.default_rng(seed)
    pb = build_family(random_geneig(6, rng))
    rep = face_dimension(pb, feasible_point(pb, p, rng))
    assert rep.p == p
    assert rep.dim_face == p * (p + 1) // 2 - 1


@given(seeds)
@settings(max_examples=20, deadline=None)
def test_trs_rank_one_face_is_a_point(seed):
    rng = np.random.default_rng(seed)
    pb = build_family(random_trs(5, rng))
    rep = face_dimension(pb, feasible_point(pb, 1, rng))
    assert rep.dim_face == 0


@pytest.mark.parametrize("n, d, p", [(6, 1, 1), (6, 1, 3), (8, 1, 5), (8, 2, 2), (8, 2, 4), (12, 2, 6),
                                     (9, 3, 3), (12, 3, 6)])
def test_stacked_identity_attains_upper_bound(n, d, p):
    pb = build_family(OrthoCut(C=np.eye(n), d=d))
    Y = orthocut_stacked_identity(n, d, p)
    assert np.abs(Y @ Y.T - np.eye(n))[np.kron(np.eye(n // d), np.ones((d, d))) > 0].max() == 0
    rep = face_dimension(pb, Y)
    assert rep.p == p
    assert rep.dim_face == p * (p + 1) // 2 - p * (d + 1) // 2


@given(seeds)
@settings(max_examples=50, deadline=None)
def test_orthocut_face_bounds(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 3))
    n = d * int(rng.integers(2, 6))
    p = int(rng.integers(d, n + 1))
    pb = build_family(OrthoCut(C=np.eye(n), d=d))
    rep = face_dimension(pb, feasible_point(pb, p, rng))
    r = rep.p
    assert r * (r + 1) // 2 - n * (d + 1) // 2 <= rep.dim_face <= r * (r + 1) // 2 - r * (d + 1) / 2
    assert rep.dim_face >= max(0, rep.delta)


def test_trimming_and_forbidden_trimming():
    pb = maxcut(np.eye(4))
    Y = np.hstack([feasible_point(pb, 2, np.random.default_rng(0)), np.zeros((4, 1))])
    assert face_dimension(pb, Y).p == 2
    assert face_dimension(pb, Y).neg_eig_cap is None
    with pytest.raises(ValueError):
        face_dimension(pb, Y, trim=False)


@pytest.mark.parametrize("seed", range(6))
def test_pataki_consistency_at_certified_extreme_optima(seed):
    rng = np.random.default_rng(seed)
    pb = random_family_problem(("orthocut", "spheres", "geneig")[seed % 3], 8, rng)
    f, rep = staircase(pb, SolverOptions(seed=seed))
    assert rep.certificate.verdict is Verdict.CERTIFIED_OPTIMAL
    face = face_dimension(pb, f.Y)
    if face.dim_face == 0:
        assert face.p <= pataki_bound(face.m_prime)


@pytest.mark.parametrize("n, k", [(8, 2), (12, 3), (15, 4), (16, 4), (14, 4), (16, 6)])
def test_negative_eigenvalues_of_S_within_cap(n, k):
    # full-rank second-order spirals; the count of negative eigenvalues of S is capped
    pb = maxcut(graph_cost(n, "cycle"))
    f = Factor(pb, cycle_spiral(n, k))
    assert f.grad_norm <= 1e-12
    assert hessian_min_eig(f)[0] >= -1e-10
    rep = face_dimension(pb, f)
    neg = int(np.sum(np.linalg.eigvalsh(f.S.array) < -1e-9))
    assert rep.neg_eig_cap is not None
    assert neg <= rep.neg_eig_cap


# --- non-degeneracy --------------------------------------------------------


@given(seeds)
@settings(max_examples=30, deadline=None)
def test_builtin_families_are_nondegenerate(seed):
    rng = np.random.default_rng(seed)
    family = ("geneig", "trs", "spheres", "orthocut")[seed % 4]
    pb = random_family_problem(family, int(rng.integers(3, 9)), rng)
    lo = pb.family.d if family == "orthocut" else 1
    p = int(rng.integers(lo, lo + 3))
    Y = feasible_point(pb, p, rng)
    assert check_nondegeneracy(pb, Y)
    # appending zero columns does not change the verdict
    assert check_nondegeneracy(pb, np.hstack([Y, np.zeros((pb.n, 2))]))


def test_duplicated_constraint_is_reported():
    pb = maxcut(np.eye(4))
    dup = SdpProblem(C=pb.C, A=pb.A + (pb.A[2],), b=np.append(pb.b, 1.0))
    with pytest.raises(DependentConstraintsError) as exc:
        check_nondegeneracy(dup, np.eye(4))
    c = exc.value.combination
    assert np.flatnonzero(np.abs(c) > 1e-8).tolist() == [2, 4]
    assert c[2] == pytest.approx(-c[4])


def test_degenerate_point_detected():
    # A_1 = diag(1, 0) and A_2 = I are independent matrices, but at Y = e_1
    # both A_1 Y and A_2 Y equal e_1
    A1 = np.diag([1.0, 0.0])
    Y = np.array([[1.0], [0.0]])
    pb = SdpProblem(C=np.eye(2), A=[A1, np.eye(2)], b=[1.0, 1.0])
    assert not check_nondegeneracy(pb, Y)
    pb2 = SdpProblem(C=np.eye(2), A=[A1, np.array([[0.0, 1.0], [1.0, 0.0]])], b=[1.0, 0.0])
    assert check_nondegeneracy(pb2, Y)


# --- extraction ------------------------------------------------------------


@given(seeds)
@settings(max_examples=30, deadline=None)
def test_extract_trs_rank_one(seed):
    rng = np.random.default_rng(seed)
    fam = random_trs(5, rng)
    pb = build_family(fam)
    x = rng.standard_normal(5)
    x /= np.linalg.norm(x)
    y2 = rng.standard_normal(3)
    y2 /= np.linalg.norm(y2)
    Y = np.vstack([np.outer(x, y2), y2])
    xr = extract_trs(pb, Y)
    assert min(np.linalg.norm(xr - x), np.linalg.norm(xr + x)) <= 1e-12
    assert trs_cost(pb, xr) == pytest.approx(Factor(pb, Y).cost, abs=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_extract_trs_after_solve_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    fam = random_trs(6, rng)
    pb = build_family(fam)
    f, rep = rtr(pb, feasible_point(pb, 2, rng), SolverOptions(seed=seed))
    assert rep.success
    x = extract_trs(pb, f)
    assert abs(np.linalg.norm(x) - 1) <= 1e-12
    assert trs_cost(pb, x) == pytest.approx(oracle_trs(fam.A, fam.b, fam.c).f_star, abs=1e-6)
    assert trs_cost(pb, x) == pytest.approx(f.cost, rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("seed", range(6))
def test_extract_trs_hard_case(seed):
    rng = np.random.default_rng(100 + seed)
    fam = hard_case_trs(5, rng)
    pb = build_family(fam)
    f, rep = rtr(pb, feasible_point(pb, 2, rng), SolverOptions(seed=seed))
    assert rep.success
    assert np.linalg.svd(f.Y, compute_uv=False)[1] > 1e-3  # genuinely rank two
    x = extract_trs(pb, f)
    assert trs_cost(pb, x) == pytest.approx(oracle_trs(fam.A, fam.b, fam.c).f_star, abs=1e-6)


def test_extract_trs_errors():
    pb = build_family(Trs(A=np.eye(3), b=np.ones(3), c=0.0))
    with pytest.raises(ExtractionError):
        extract_trs(pb, np.zeros((4, 2)))
    with pytest.raises(ExtractionError):
        extract_trs(pb, np.vstack([np.eye(3) / math.sqrt(3), np.ones(3) / math.sqrt(3)]))
    with pytest.raises(ValueError):
        extract_trs(maxcut(np.eye(3)), np.eye(3))


def test_extract_rank_one_exact():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(7)
    Y = np.outer(x, [0.6, 0.8])
    xr, res = extract_rank_one(Y)
    assert res <= 1e-12
    assert np.allclose(np.outer(xr, xr), np.outer(x, x), atol=1e-12)


def test_extract_rank_one_equal_singular_values():
    Q, _ = np.linalg.qr(np.random.default_rng(1).standard_normal((5, 2)))
    _, res = extract_rank_one(Q)
    # s1 = s2: the truncation error is ||s2^2|| / ||(s1^2, s2^2)|| = 1/sqrt(2)
    assert res == pytest.approx(1 / math.sqrt(2), rel=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_extract_rank_one_geneig_p2(seed):
    rng = np.random.default_rng(seed)
    fam = random_geneig(7, rng)
    pb = build_family(fam)
    f, rep = rtr(pb, feasible_point(pb, 2, rng), SolverOptions(seed=seed))
    assert rep.success
    x, res = extract_rank_one(f)
    assert res <= 1e-8
    assert x @ fam.C @ x == pytest.approx(oracle_geneig(fam.C, fam.B).f_star, rel=1e-8)
