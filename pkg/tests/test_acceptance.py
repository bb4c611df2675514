"""Acceptance criteria 1-8, each at its stated tolerance.

Every criterion is a function returning ``(passed, detail, fingerprint)``;
the fingerprint (verdicts and cost values) is what criterion 8 compares
across two runs.
"""
import math
import time

import numpy as np
import pytest

from bmsdp.certification import Verdict, certify, extract_trs, face_dimension, trs_cost
from bmsdp.cli import EXIT_INCONCLUSIVE, main
from bmsdp.geometry import Factor, hessian_vec, project_tangent, retract, tangency_residual
from bmsdp.instances import (
    cycle_spiral,
    graph_cost,
    hard_case_trs,
    local_min_trs,
    local_min_trs_point,
    orthocut_stacked_identity,
    random_family_problem,
    random_geneig,
    random_instance,
    random_symmetric,
    random_trs,
)
from bmsdp.linalg import EPS
from bmsdp.oracle import oracle_geneig, oracle_sdp_via_escalation, oracle_trs
from bmsdp.rtr import SolverOptions, escalate, escape_direction, escape_step, hessian_min_eig, rtr, staircase
from bmsdp.sdp_model import OrthoCut, build_family, feasible_point, maxcut, pataki_bound

_FIRST_RUN = {}


# --- 1. geometry ------------------------------------------------------------


def criterion_1():
    t0 = time.perf_counter()
    worst = {"proj": 0.0, "grad": 0.0, "hess": 0.0}
    fams, fp = set(), []
    seed = count = 0
    while count < 50:
        pb, Y = random_instance(seed, n_max=20, p_max=6)
        seed += 1
        f = Factor(pb, Y)
        if f.n * f.p - f.gram.m_prime == 0:
            continue  # zero-dimensional tangent space: nothing to check
        count += 1
        fams.add(pb.family.tag)
        rng = np.random.default_rng(seed)
        Z, W = rng.standard_normal((2,) + Y.shape)
        PZ, PW = project_tangent(f, Z), project_tangent(f, W)
        nz, nw = np.linalg.norm(Z), np.linalg.norm(W)
        worst["proj"] = max(
            worst["proj"],
            np.linalg.norm(project_tangent(f, PZ) - PZ) / nz,
            abs(np.vdot(PZ, W) - np.vdot(Z, PW)) / (nz * nw),
            tangency_residual(f, PZ) / (nz * f.constraint_norms.max()),
        )
        V = PZ / np.linalg.norm(PZ)
        floor = 1e-2 * (1.0 + pb.c_norm)
        t = 1e-5
        fd = (retract(f, t * V).cost - retract(f, -t * V).cost) / (2 * t)
        exact = np.vdot(f.grad, V)
        worst["grad"] = max(worst["grad"], abs(fd - exact) / max(abs(exact), f.grad_norm, floor))
        t = 1e-4
        fd2 = (retract(f, t * V, method="newton").cost + retract(f, -t * V, method="newton").cost
               - 2 * f.cost) / t ** 2
        q = np.vdot(V, hessian_vec(f, V))
        worst["hess"] = max(worst["hess"], abs(fd2 - q) / max(abs(q), floor))
        fp.append(round(float(q), 12))
    elapsed = time.perf_counter() - t0
    ok = (worst["proj"] <= 1e-12 and worst["grad"] <= 1e-6 and worst["hess"] <= 1e-4
          and len(fams) == 4 and elapsed < 30)
    detail = (f"50 instances over {sorted(fams)}; worst projector {worst['proj']:.1e}, "
              f"gradient FD {worst['grad']:.1e}, Hessian FD {worst['hess']:.1e}; {elapsed:.1f}s")
    return ok, detail, fp


# --- 2. EIG -----------------------------------------------------------------


def criterion_2():
    t0 = time.perf_counter()
    good, total, worst, fp = 0, 0, 0.0, []
    for seed in range(100):
        rng = np.random.default_rng([seed, 2])
        fam = random_geneig(int(rng.integers(2, 13)), rng)
        pb = build_family(fam)
        f_star = oracle_geneig(fam.C, fam.B).f_star
        for p in (1, 2):
            f, rep = rtr(pb, feasible_point(pb, p, rng), SolverOptions(seed=seed))
            err = abs(f.cost - f_star) / max(1.0, abs(f_star))
            worst = max(worst, err)
            total += 1
            good += err <= 1e-7
            fp.append((rep.status, f.cost))
    elapsed = time.perf_counter() - t0
    ok = good == total and elapsed < 60
    return ok, f"{good}/{total} runs within 1e-7 relative (worst {worst:.1e}); {elapsed:.1f}s", fp


# --- 3. TRS -----------------------------------------------------------------


def criterion_3(tmp_path):
    good, hard, worst, fp = 0, 0, 0.0, []
    for seed in range(100):
        rng = np.random.default_rng([seed, 3])
        n = int(rng.integers(2, 11))
        if seed % 10 == 0:
            fam = hard_case_trs(n, rng)
            hard += 1
        else:
            fam = random_trs(n, rng)
        pb = build_family(fam)
        f, _ = rtr(pb, feasible_point(pb, 2, rng), SolverOptions(seed=seed))
        x = extract_trs(pb, f)
        err = abs(trs_cost(pb, x) - oracle_trs(fam.A, fam.b, fam.c).f_star)
        worst = max(worst, err)
        good += err <= 1e-6
        fp.append(float(trs_cost(pb, x)))
    # p = 1 caveat: the crafted instance has a suboptimal second-order point
    pb = build_family(local_min_trs())
    f1 = Factor(pb, local_min_trs_point())
    fam = local_min_trs()
    second_order = f1.grad_norm <= 1e-12 and hessian_min_eig(f1)[0] > 0
    suboptimal = f1.cost > oracle_trs(fam.A, fam.b, fam.c).f_star + 0.1
    code = main(["solve", "--family", "trs", "--trs-case", "local-min", "--p", "1",
                 "--output", str(tmp_path / "p1.json")])
    ok = good == 100 and hard >= 10 and second_order and suboptimal and code == EXIT_INCONCLUSIVE
    detail = (f"{good}/100 extracted costs within 1e-6 ({hard} hard cases, worst {worst:.1e}); "
              f"p=1 local-min instance exit {code}")
    return ok, detail, fp + [code]


# --- 4. Max-Cut / OrthoCut ---------------------------------------------------


def criterion_4():
    res = {}
    fp = []
    silent = 0
    for name, n, d in (("maxcut", 12, 1), ("orthocut", 8, 2)):
        good = 0
        for seed in range(50):
            rng = np.random.default_rng([seed, 4, d])
            pb = build_family(OrthoCut(C=random_symmetric(n, rng), d=d))
            ref = oracle_sdp_via_escalation(pb, seed=seed)
            f, rep = staircase(pb, SolverOptions(seed=seed, p_schedule=[5]))
            cert = rep.certificate
            match = abs(f.cost - ref.f_star) <= ref.error_bar + 1e-6
            good += match
            if not match and cert.is_psd:
                silent += 1
            fp.append((cert.verdict.value, f.cost))
        res[name] = good
    ok = res["maxcut"] == 50 and res["orthocut"] == 50 and silent == 0
    detail = (f"Max-Cut n=12 p=5 {res['maxcut']}/50, OrthoCut d=2 n=8 p=5 {res['orthocut']}/50 "
              f"match the escalation oracle; {silent} silent failures")
    return ok, detail, fp


# --- 5. gap bound -----------------------------------------------------------


def _reference_lower(pb, seed):
    """Lower bound on f* from an oracle."""
    tag = pb.family.tag
    if tag == "geneig":
        return oracle_geneig(pb.C_dense, pb.A[0].toarray()).f_star
    if tag == "trs":
        C = pb.C_dense
        return oracle_trs(C[:-1, :-1], C[:-1, -1], C[-1, -1]).f_star
    ref = oracle_sdp_via_escalation(pb, seed=seed)
    return ref.f_star - ref.error_bar


def criterion_5():
    good, sharp_checked, sharp_good, fp = 0, 0, 0, []
    families = ("geneig", "trs", "spheres", "orthocut", "maxcut")
    for seed in range(30):
        rng = np.random.default_rng([seed, 5])
        fam = families[seed % 5]
        if fam == "maxcut":
            pb = maxcut(random_symmetric(int(rng.integers(3, 9)), rng))
        else:
            # OrthoCut n is rounded down to a multiple of d = 2; keep at least two blocks
            lo = 4 if fam == "orthocut" else 3
            pb = random_family_problem(fam, int(rng.integers(lo, 8)), rng)
        eps_g0, eps_H0 = SolverOptions().tolerances(pb)
        opts = SolverOptions(eps_g=1e4 * eps_g0, eps_H=1e4 * eps_H0, seed=seed)
        f, rep = rtr(pb, feasible_point(pb, pb.n + 1, rng), opts)
        cert = certify(pb, f)
        f_low = _reference_lower(pb, seed)
        R = pb.R
        slack = 100 * EPS * (1 + abs(f.cost) + np.linalg.norm(cert.S.toarray(), 2) * R)
        gap2 = 2 * (f.cost - f_low)
        stated = rep.eps_g * math.sqrt(R) + rep.eps_H * R
        ok_run = rep.success and gap2 <= stated + slack and gap2 <= cert.gap_bound + slack
        if pb.identity_in_range:
            sharp_checked += 1
            sharp = gap2 <= rep.eps_H * R + slack
            sharp_good += sharp
            ok_run = ok_run and sharp
        good += ok_run
        fp.append(f.cost)
    ok = good == 30
    detail = f"{good}/30 runs within eps_g sqrt(R) + eps_H R; sharper eps_H R bound {sharp_good}/{sharp_checked}"
    return ok, detail, fp


# --- 6. faces ---------------------------------------------------------------


def criterion_6():
    in_bounds, fp = 0, []
    for seed in range(100):
        rng = np.random.default_rng([seed, 6])
        d = 1 + seed % 2
        n = d * int(rng.integers(2, 7))
        p = int(rng.integers(d, n + 1))
        pb = build_family(OrthoCut(C=np.eye(n), d=d))
        rep = face_dimension(pb, feasible_point(pb, p, rng))
        r = rep.p
        sym = r * (r + 1) // 2
        in_bounds += sym - n * (d + 1) / 2 <= rep.dim_face <= sym - r * (d + 1) / 2
        fp.append(rep.dim_face)
    constructions = [(n, d, p) for d in (1, 2, 3) for n in (6, 12) for p in range(d, n + 1, d)]
    exact = 0
    for n, d, p in constructions:
        pb = build_family(OrthoCut(C=np.eye(n), d=d))
        rep = face_dimension(pb, orthocut_stacked_identity(n, d, p))
        exact += rep.p == p and rep.dim_face == p * (p + 1) // 2 - p * (d + 1) // 2
    extreme, pataki_ok = 0, 0
    for seed in range(20):
        rng = np.random.default_rng([seed, 66])
        d = 1 + seed % 2
        pb = build_family(OrthoCut(C=random_symmetric(4 * d + 2 * d * (seed % 3), rng), d=d))
        f, srep = staircase(pb, SolverOptions(seed=seed))
        if srep.certificate.verdict is not Verdict.CERTIFIED_OPTIMAL:
            continue
        face = face_dimension(pb, f)
        if face.dim_face == 0:
            extreme += 1
            pataki_ok += face.p <= pataki_bound(face.m_prime)
        fp.append((face.p, face.dim_face))
    ok = in_bounds == 100 and exact == len(constructions) and pataki_ok == extreme
    detail = (f"{in_bounds}/100 sampled points within the bounds; construction exact "
              f"{exact}/{len(constructions)}; Pataki holds at {pataki_ok}/{extreme} certified extreme optima")
    return ok, detail, fp


# --- 7. saddle escape -------------------------------------------------------


# Spirals (n, k) that are second-order critical at p = 2 yet suboptimal:
# S has negative eigenvalues, so only the rank step can escape them.
PLANTED_SPIRALS = ((7, 2), (8, 3), (9, 3), (10, 3), (10, 4), (11, 4), (12, 4), (12, 5), (13, 5), (14, 6))


def criterion_7():
    good, fp = 0, []
    for n, k in PLANTED_SPIRALS:
        pb = maxcut(graph_cost(n, "cycle"))
        Y = cycle_spiral(n, k)
        f = Factor(pb, Y)
        lam_S = float(np.linalg.eigvalsh(f.S.array)[0])
        planted = (f.grad_norm <= 1e-12 and np.linalg.matrix_rank(Y) == 2 and lam_S < 0
                   and hessian_min_eig(f)[0] >= -1e-10)
        g = escalate(f)
        V = escape_direction(g)
        step = escape_step(g, V) if V is not None else None
        escaped = (step is not None and step.decrease > 0
                   and step.decrease >= 0.5 * abs(lam_S) * step.step ** 2)
        fin, rep = staircase(pb, SolverOptions(seed=n), Y0=Y)
        certified = rep.certificate.verdict is Verdict.CERTIFIED_OPTIMAL and len(rep.escalations) >= 1
        good += planted and escaped and certified
        fp.append((rep.certificate.verdict.value, fin.cost, step.decrease if step else None))
    return good == 10, f"{good}/10 planted cycle spirals escaped with sufficient decrease and certified", fp


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7}


def _run(k, tmp_path):
    fn = CRITERIA[k]
    return fn(tmp_path) if k == 3 else fn()


@pytest.mark.parametrize("k", sorted(CRITERIA))
def test_criterion(k, tmp_path, record_criterion):
    ok, detail, fp = _run(k, tmp_path)
    _FIRST_RUN[k] = fp
    record_criterion(k, ok, detail)
    assert ok, detail


def _same(a, b):
    if isinstance(a, (list, tuple)) and isinstance(b, (list, tuple)):
        return len(a) == len(b) and all(_same(x, y) for x, y in zip(a, b))
    if isinstance(a, float) and isinstance(b, float):
        return abs(a - b) <= 1e-12 * max(1.0, abs(a))
    return a == b


def test_criterion_8_determinism(tmp_path, record_criterion):
    same = []
    for k in sorted(CRITERIA):
        first = _FIRST_RUN[k] if k in _FIRST_RUN else _run(k, tmp_path)[2]
        second = _run(k, tmp_path)[2]
        same.append(_same(first, second))
    ok = all(same)
    detail = f"{sum(same)}/7 criteria reproduce verdicts and costs to 1e-12 on rerun"
    record_criterion(8, ok, detail)
    assert ok, detail
