"""JSON documents for problems and factors.

Problem: ``{n, m, b, C, A, family?, R?, constant_trace?, identity_in_range?}``
with every matrix given as ``{n, triplets: [[row, col, value], ...]}``
(0-based, row >= col, sorted by (row, col) on write).
Factor: ``{n, p, data}`` with ``data`` the column-major entries of Y.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import FormatError
from .sdp_model import (
    FamilyInfo,
    OrthoCut,
    SdpProblem,
    Spheres,
    SymMatrix,
    Trs,
    build_family,
)

FAMILY_TAGS = ("geneig", "trs", "spheres", "orthocut")


def matrix_to_json(M: SymMatrix) -> dict:
    return {"n": M.n, "triplets": [[int(i), int(j), float(v)] for i, j, v in M.triplets()]}


def _require(doc, key, path):
    if not isinstance(doc, dict):
        raise FormatError(path or "$", "expected an object")
    if key not in doc:
        raise FormatError(f"{path}.{key}" if path else key, "missing field")
    return doc[key]


def _as_int(v, path, minimum=None):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not float(v).is_integer():
        raise FormatError(path, f"expected an integer, got {v!r}")
    v = int(v)
    if minimum is not None and v < minimum:
        raise FormatError(path, f"must be >= {minimum}, got {v}")
    return v


def _as_float(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise FormatError(path, f"expected a finite number, got {v!r}")
    return float(v)


def matrix_from_json(doc, path, n_expected=None) -> SymMatrix:
    n = _as_int(_require(doc, "n", path), f"{path}.n", minimum=1)
    if n_expected is not None and n != n_expected:
        raise FormatError(f"{path}.n", f"dimension {n} does not match n={n_expected}")
    trips = _require(doc, "triplets", path)
    if not isinstance(trips, list):
        raise FormatError(f"{path}.triplets", "expected a list")
    parsed = []
    seen = set()
    for k, t in enumerate(trips):
        tp = f"{path}.triplets[{k}]"
        if not isinstance(t, list) or len(t) != 3:
            raise FormatError(tp, "expected [row, col, value]")
        i = _as_int(t[0], tp, minimum=0)
        j = _as_int(t[1], tp, minimum=0)
        v = _as_float(t[2], tp)
        if i >= n or j >= n:
            raise FormatError(tp, f"index out of range for n={n}")
        if i < j:
            raise FormatError(tp, "row must be >= col")
        if (i, j) in seen:
            raise FormatError(tp, f"duplicate entry ({i}, {j})")
        seen.add((i, j))
        parsed.append((i, j, v))
    return SymMatrix.from_triplets(n, parsed)


def problem_to_json(problem: SdpProblem) -> dict:
    doc = {
        "n": problem.n,
        "m": problem.m,
        "b": [float(v) for v in problem.b],
        "C": matrix_to_json(problem.C),
        "A": [matrix_to_json(A) for A in problem.A],
        "constant_trace": bool(problem.constant_trace),
        "identity_in_range": bool(problem.identity_in_range),
    }
    if problem.R is not None:
        doc["R"] = float(problem.R)
    if problem.family is not None:
        doc["family"] = problem.family.to_dict()
    return doc


def _family_from_json(doc, n, C, A, b):
    tag = _require(doc, "tag", "family")
    if tag not in FAMILY_TAGS:
        raise FormatError("family.tag", f"unknown family {tag!r}; expected one of {FAMILY_TAGS}")
    if tag == "geneig":
        if len(A) != 1 or not np.array_equal(b, [1.0]):
            raise FormatError("family", "geneig needs a single constraint with b = [1]")
        return FamilyInfo("geneig")
    Cd = C.toarray()
    if tag == "trs":
        ref = build_family(Trs(A=Cd[:-1, :-1], b=Cd[:-1, -1], c=Cd[-1, -1]))
    elif tag == "orthocut":
        d = _as_int(_require(doc, "d", "family"), "family.d", minimum=1)
        if n % d:
            raise FormatError("family.d", f"n={n} is not divisible by d={d}")
        ref = build_family(OrthoCut(C=Cd, d=d))
    else:
        sizes = _require(doc, "sizes", "family")
        if not isinstance(sizes, list):
            raise FormatError("family.sizes", "expected a list")
        sizes = tuple(_as_int(s, f"family.sizes[{k}]", minimum=1) for k, s in enumerate(sizes))
        hom = doc.get("homogeneous", False)
        if not isinstance(hom, bool):
            raise FormatError("family.homogeneous", "expected a boolean")
        try:
            ref = build_family(Spheres(C=Cd, sizes=sizes, homogeneous=hom))
        except ValueError as exc:
            raise FormatError("family", str(exc)) from None
    if len(ref.A) != len(A) or not np.array_equal(ref.b, b):
        raise FormatError("family", f"constraints do not match the {tag} family")
    for k, (Ar, Af) in enumerate(zip(ref.A, A)):
        if Ar.triplets() != Af.triplets():
            raise FormatError(f"A[{k}]", f"constraint does not match the {tag} family")
    return ref.family


def problem_from_json(doc) -> SdpProblem:
    if not isinstance(doc, dict):
        raise FormatError("$", "expected an object")
    n = _as_int(_require(doc, "n", ""), "n", minimum=1)
    m = _as_int(_require(doc, "m", ""), "m", minimum=1)
    b = _require(doc, "b", "")
    if not isinstance(b, list):
        raise FormatError("b", "expected a list")
    if len(b) != m:
        raise FormatError("b", f"has length {len(b)}, expected m={m}")
    b = np.array([_as_float(v, f"b[{k}]") for k, v in enumerate(b)])
    C = matrix_from_json(_require(doc, "C", ""), "C", n)
    A = _require(doc, "A", "")
    if not isinstance(A, list):
        raise FormatError("A", "expected a list")
    if len(A) != m:
        raise FormatError("A", f"has {len(A)} matrices, expected m={m}")
    A = [matrix_from_json(a, f"A[{k}]", n) for k, a in enumerate(A)]
    R = doc.get("R")
    if R is not None:
        R = _as_float(R, "R")
        if R < 0:
            raise FormatError("R", "must be nonnegative")
    flags = {}
    for key in ("constant_trace", "identity_in_range"):
        if key in doc and doc[key] is not None:
            if not isinstance(doc[key], bool):
                raise FormatError(key, "expected a boolean")
            flags[key] = doc[key]
    family = None
    if doc.get("family") is not None:
        family = _family_from_json(doc["family"], n, C, A, b)
    try:
        return SdpProblem(C=C, A=tuple(A), b=b, R=R, family=family, **flags)
    except ValueError as exc:
        raise FormatError("$", str(exc)) from None


def factor_to_json(Y) -> dict:
    Y = np.asarray(Y, dtype=float)
    return {"n": int(Y.shape[0]), "p": int(Y.shape[1]), "data": [float(v) for v in Y.ravel(order="F")]}


def factor_from_json(doc, n_expected=None) -> np.ndarray:
    n = _as_int(_require(doc, "n", ""), "n", minimum=1)
    p = _as_int(_require(doc, "p", ""), "p", minimum=1)
    if n_expected is not None and n != n_expected:
        raise FormatError("n", f"factor has n={n} but the problem has n={n_expected}")
    data = _require(doc, "data", "")
    if not isinstance(data, list) or len(data) != n * p:
        raise FormatError("data", f"expected a list of n*p={n * p} numbers")
    vals = np.array([_as_float(v, f"data[{k}]") for k, v in enumerate(data)])
    return vals.reshape((n, p), order="F")


def _read(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(str(path), f"cannot read file ({exc.strerror})") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError("$", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None


def load_problem(path) -> SdpProblem:
    return problem_from_json(_read(path))


def save_problem(problem: SdpProblem, path):
    Path(path).write_text(json.dumps(problem_to_json(problem), indent=1))


def load_factor(path, n_expected=None) -> np.ndarray:
    return factor_from_json(_read(path), n_expected)


def save_factor(Y, path):
    Path(path).write_text(json.dumps(factor_to_json(Y)))
