"""Low-rank (Burer-Monteiro) semidefinite programming on the constraint manifold."""

__version__ = "0.1.0"

from .certification import (  # noqa: E402
    DualCertificate,
    FaceReport,
    Verdict,
    certify,
    check_nondegeneracy,
    extract_rank_one,
    extract_trs,
    face_dimension,
)
from .geometry import Factor, GramSystem, hessian_vec, project_tangent, retract  # noqa: E402
from .rtr import SolveReport, SolverOptions, escalate, escape_direction, rtr, staircase  # noqa: E402
from .sdp_model import (  # noqa: E402
    GenEig,
    OrthoCut,
    SdpProblem,
    Spheres,
    SymMatrix,
    Trs,
    apply_A,
    apply_A_adjoint,
    build_family,
    check_smoothness,
    feasible_point,
    maxcut,
    pataki_bound,
)
