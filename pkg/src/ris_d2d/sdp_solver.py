"""Dense primal-dual interior-point solver for small unit-diagonal Hermitian SDPs.

Problem shape::

    minimize    tr(C X)
    subject to  tr(G_j X) >= h_j      j = 1..p
                X_kk = 1              k = 1..n   (when ``diag_one``)
                X ⪰ 0

The complex problem is solved through its real symmetric embedding
``[[Re A, -Im A], [Im A, Re A]] / 2`` of size 2n, so both real copies of each
diagonal entry are pinned to one.  Inequalities become equalities with
non-negative slacks ``s``; their dual slacks ``z`` coincide with the
inequality multipliers.  Each iteration takes an infeasible-start HKM
predictor-corrector step (Mehrotra centering, separate primal and dual step
lengths, fraction-to-boundary 0.98) and the Schur complement is factored with
a Cholesky decomposition.  A breakdown of any factorization is reported as
``numerical_failure``.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from scipy import linalg as sla

from .config import format_validation_error
from .feature_flags import get_feature_flag
from .linalg_core import (
    CMatrix,
    InvalidInputError,
    RMatrix,
    as_cmatrix,
    eig_min_hermitian,
    from_real_embedding,
    hermitian_part,
    is_hermitian,
    to_real_embedding,
)

_log = logging.getLogger(__name__)

MAX_DIMENSION = 256
PROBLEM_HERMITIAN_RTOL = 1e-9
PSD_MARGIN = 1e-8
SDP_DUMP_FORMAT = "ris-d2d/sdp"
SDP_DUMP_VERSION = 1


class SdpSolverError(RuntimeError):
    """Raised when a Cholesky factorization or eigen-solve breaks down."""


class SdpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    MAX_ITERS = "max_iters"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical_failure"


class SdpOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    gap_tol: float = Field(default=1e-7, gt=0)
    feas_tol: float = Field(default=1e-7, gt=0)
    max_iters: int = Field(default=100, ge=1)
    step_fraction: float = Field(default=0.98, gt=0, lt=1)
    stall_window: int = Field(default=10, ge=1)
    stall_decrease: float = Field(default=1e-2, gt=0, lt=1)
    certificate_tol: float = Field(default=1e-8, gt=0)


@dataclass(frozen=True, eq=False)
class SdpConstraint:
    """``tr(G X) >= h``."""

    G: CMatrix
    h: float


@dataclass(frozen=True, eq=False)
class SdpProblem:
    C: CMatrix
    ineq: tuple[SdpConstraint, ...] = ()
    diag_one: bool = True

    def __post_init__(self) -> None:
        C = as_cmatrix(self.C)
        n = C.shape[0]
        if C.shape != (n, n) or n < 1:
            raise InvalidInputError(f"objective must be square and non-empty, got shape {C.shape}")
        if n > MAX_DIMENSION:
            raise InvalidInputError(f"dimension {n} exceeds the supported maximum {MAX_DIMENSION}")
        if not is_hermitian(C, PROBLEM_HERMITIAN_RTOL):
            raise InvalidInputError("objective matrix is not Hermitian")
        object.__setattr__(self, "C", hermitian_part(C))

        constraints: list[SdpConstraint] = []
        for idx, item in enumerate(self.ineq):
            G, h = (item.G, item.h) if isinstance(item, SdpConstraint) else item
            G = as_cmatrix(G)
            if G.shape != (n, n):
                raise InvalidInputError(f"constraint {idx} has shape {G.shape}, expected ({n}, {n})")
            if not is_hermitian(G, PROBLEM_HERMITIAN_RTOL):
                raise InvalidInputError(f"constraint {idx} matrix is not Hermitian")
            h = float(h)
            if not math.isfinite(h):
                raise InvalidInputError(f"constraint {idx} offset is not finite")
            constraints.append(SdpConstraint(G=hermitian_part(G), h=h))
        object.__setattr__(self, "ineq", tuple(constraints))
        if not self.diag_one and not constraints:
            raise InvalidInputError("problem has no constraints; the objective is unbounded or trivial")

    @property
    def n(self) -> int:
        return int(self.C.shape[0])

    def objective_value(self, X: CMatrix) -> float:
        return float(np.real(np.trace(self.C @ X)))

    def constraint_slacks(self, X: CMatrix) -> list[float]:
        return [float(np.real(np.trace(c.G @ X))) - c.h for c in self.ineq]


@dataclass(frozen=True, eq=False)
class SdpSolution:
    X: CMatrix
    objective: float
    duality_gap: float
    iterations: int
    status: SdpStatus
    primal_residual: float = 0.0
    dual_residual: float = 0.0
    message: str = ""

    def diagnostics(self) -> dict:
        return {
            "status": self.status.value,
            "objective": self.objective,
            "duality_gap": self.duality_gap,
            "iterations": self.iterations,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "message": self.message,
        }


# ── Real embedding ───────────────────────────────────────────────────


@dataclass
class _Embedded:
    dim: int
    C: RMatrix
    c_scale: float
    G: list[RMatrix]
    h: np.ndarray
    diag_one: bool
    dropped: int = 0
    trivially_infeasible: bool = False

    @property
    def n_diag(self) -> int:
        return self.dim if self.diag_one else 0

    @property
    def m(self) -> int:
        return self.n_diag + len(self.G)

    def b(self) -> np.ndarray:
        return np.concatenate([np.ones(self.n_diag), self.h])

    def apply(self, W: RMatrix) -> np.ndarray:
        """Constraint operator applied to a matrix (slack columns excluded)."""
        diag = np.diag(W).copy() if self.diag_one else np.zeros(0)
        return np.concatenate([diag, np.array([np.sum(G * W) for G in self.G])])

    def adjoint(self, y: np.ndarray) -> RMatrix:
        out = np.zeros((self.dim, self.dim))
        if self.diag_one:
            out[np.diag_indices(self.dim)] = y[: self.dim]
        for j, G in enumerate(self.G):
            out += y[self.n_diag + j] * G
        return out


def _embed(problem: SdpProblem) -> _Embedded:
    C = 0.5 * to_real_embedding(problem.C)
    c_norm = float(np.linalg.norm(C))
    c_scale = c_norm if c_norm > 0 else 1.0
    Gs: list[RMatrix] = []
    hs: list[float] = []
    dropped = 0
    infeasible = False
    for cons in problem.ineq:
        G = 0.5 * to_real_embedding(cons.G)
        g_norm = float(np.linalg.norm(G))
        if g_norm == 0.0:
            # 0 >= h either always holds or never does.
            if cons.h <= 0:
                dropped += 1
            else:
                infeasible = True
            continue
        Gs.append(G / g_norm)
        hs.append(cons.h / g_norm)
    return _Embedded(
        dim=2 * problem.n,
        C=C / c_scale,
        c_scale=c_scale,
        G=Gs,
        h=np.asarray(hs, dtype=np.float64),
        diag_one=problem.diag_one,
        dropped=dropped,
        trivially_infeasible=infeasible,
    )


# ── Linear algebra kernels ───────────────────────────────────────────


def _sym(A: RMatrix) -> RMatrix:
    return 0.5 * (A + A.T)


def _cholesky(A: RMatrix, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise SdpSolverError(f"Cholesky factorization of {what} failed") from exc


def _max_step_psd(X: RMatrix, dX: RMatrix) -> float:
    L = _cholesky(X, "iterate")
    half = sla.solve_triangular(L, dX, lower=True)
    W = sla.solve_triangular(L, half.T, lower=True)
    try:
        lam = float(np.linalg.eigvalsh(_sym(W))[0])
    except np.linalg.LinAlgError as exc:
        raise SdpSolverError("eigenvalue computation for the step length failed") from exc
    return math.inf if lam >= 0 else -1.0 / lam


def _max_step_orthant(v: np.ndarray, dv: np.ndarray) -> float:
    neg = dv < 0
    if not np.any(neg):
        return math.inf
    return float(np.min(-v[neg] / dv[neg]))


def _schur(emb: _Embedded, Y: RMatrix, Zinv: RMatrix, s: np.ndarray, z: np.ndarray) -> RMatrix:
    """``M_ik = tr(A_i Y A_k Z^{-1})`` plus the slack block ``s/z``."""
    nd, p = emb.n_diag, len(emb.G)
    M = np.zeros((emb.m, emb.m))
    if emb.diag_one:
        M[:nd, :nd] = Y * Zinv
    YGZ = [Y @ G @ Zinv for G in emb.G]
    for j in range(p):
        if emb.diag_one:
            col = np.diag(YGZ[j])
            M[:nd, nd + j] = col
            M[nd + j, :nd] = col
        for i in range(p):
            M[nd + i, nd + j] = np.sum(emb.G[i] * YGZ[j].T)
    M[nd:, nd:] += np.diag(s / z)
    return _sym(M)


# ── Interior-point loop ──────────────────────────────────────────────


@dataclass
class _IterState:
    Y: RMatrix
    s: np.ndarray
    y: np.ndarray
    Z: RMatrix
    z: np.ndarray


def _residuals(emb: _Embedded, st: _IterState, b: np.ndarray) -> tuple[np.ndarray, RMatrix, np.ndarray]:
    nd = emb.n_diag
    AY = emb.apply(st.Y)
    AY[nd:] -= st.s
    r_p = b - AY
    R_d = emb.C - emb.adjoint(st.y) - st.Z
    r_ds = st.y[nd:] - st.z
    return r_p, R_d, r_ds


def _primal_measure(emb: _Embedded, r_p: np.ndarray) -> float:
    nd = emb.n_diag
    diag_part = float(np.max(np.abs(r_p[:nd]))) if nd else 0.0
    ineq_part = float(np.max(np.abs(r_p[nd:]) / (1.0 + np.abs(emb.h)))) if len(emb.G) else 0.0
    return max(diag_part, ineq_part)


def _interior_point(emb: _Embedded, opts: SdpOptions) -> tuple[_IterState, SdpStatus, int, float, float, float, str]:
    dim, nd, p = emb.dim, emb.n_diag, len(emb.G)
    nu = dim + p
    b = emb.b()
    eye = np.eye(dim)

    xi = 1.0 + (float(np.max(np.abs(emb.h))) if p else 0.0)
    eta = 1.0 + max([float(np.linalg.norm(emb.C))] + [1.0] * p)
    y0 = np.zeros(emb.m)
    y0[nd:] = eta
    st = _IterState(Y=xi * eye, s=np.full(p, xi), y=y0, Z=eta * eye, z=np.full(p, eta))

    c_norm = float(np.linalg.norm(emb.C))
    mu_prev = pres_prev = None
    stall = 0
    gap = pres = dres = math.inf

    for it in range(opts.max_iters + 1):
        r_p, R_d, r_ds = _residuals(emb, st, b)
        mu = (float(np.sum(st.Y * st.Z)) + float(st.s @ st.z)) / nu
        pobj = float(np.sum(emb.C * st.Y))
        dobj = float(b @ st.y)
        pres = _primal_measure(emb, r_p)
        dres = math.sqrt(float(np.sum(R_d**2)) + float(r_ds @ r_ds)) / (1.0 + c_norm)
        gap = max(abs(pobj - dobj), nu * mu) / (1.0 + abs(pobj) + abs(dobj))
        _log.debug("sdp it=%d pobj=%.10g dobj=%.10g gap=%.3e pres=%.3e dres=%.3e", it, pobj, dobj, gap, pres, dres)

        if pres <= opts.feas_tol and dres <= opts.feas_tol and gap <= opts.gap_tol:
            return st, SdpStatus.OPTIMAL, it, gap, pres, dres, ""
        if dobj > 0 and (c_norm + float(np.linalg.norm(R_d))) / dobj < opts.certificate_tol:
            return st, SdpStatus.INFEASIBLE, it, gap, pres, dres, "dual ray certifies primal infeasibility"
        if mu_prev is not None and pres_prev is not None:
            if mu_prev - mu < opts.stall_decrease * mu_prev and pres > max(pres_prev, opts.feas_tol):
                stall += 1
            else:
                stall = 0
            if stall >= opts.stall_window:
                return st, SdpStatus.INFEASIBLE, it, gap, pres, dres, "duality measure stalled with growing primal residual"
        if it == opts.max_iters:
            break
        mu_prev, pres_prev = mu, pres

        Zinv = _sym(sla.cho_solve((_cholesky(st.Z, "dual slack"), True), eye))
        try:
            M_factor = sla.cho_factor(_schur(emb, st.Y, Zinv, st.s, st.z), lower=True)
        except np.linalg.LinAlgError as exc:
            raise SdpSolverError("Schur complement is not positive definite") from exc

        def direction(Rc: RMatrix, rc_s: np.ndarray) -> tuple[RMatrix, np.ndarray, np.ndarray, RMatrix, np.ndarray]:
            W = _sym((Rc - st.Y @ R_d) @ Zinv)
            rhs = r_p - emb.apply(W)
            rhs[nd:] -= -rc_s / st.z + (st.s / st.z) * r_ds
            dy = sla.cho_solve(M_factor, rhs)
            dZ = R_d - emb.adjoint(dy)
            dY = _sym((Rc - st.Y @ dZ) @ Zinv)
            dz = r_ds + dy[nd:]
            ds = (rc_s - st.s * dz) / st.z
            return dY, ds, dy, dZ, dz

        # Predictor (affine scaling).
        YZ = st.Y @ st.Z
        dY_a, ds_a, _, dZ_a, dz_a = direction(-YZ, -st.s * st.z)
        ap = min(1.0, _max_step_psd(st.Y, dY_a), _max_step_orthant(st.s, ds_a))
        ad = min(1.0, _max_step_psd(st.Z, dZ_a), _max_step_orthant(st.z, dz_a))
        mu_aff = (
            float(np.sum((st.Y + ap * dY_a) * (st.Z + ad * dZ_a)))
            + float((st.s + ap * ds_a) @ (st.z + ad * dz_a))
        ) / nu
        sigma = min(1.0, (max(mu_aff, 0.0) / mu) ** 3) if mu > 0 else 0.0

        # Corrector with the second-order term.
        Rc = sigma * mu * eye - YZ - dY_a @ dZ_a
        rc_s = sigma * mu - st.s * st.z - ds_a * dz_a
        dY, ds, dy, dZ, dz = direction(Rc, rc_s)
        tau = opts.step_fraction
        ap = min(1.0, tau * min(_max_step_psd(st.Y, dY), _max_step_orthant(st.s, ds)))
        ad = min(1.0, tau * min(_max_step_psd(st.Z, dZ), _max_step_orthant(st.z, dz)))

        st = _IterState(
            Y=_sym(st.Y + ap * dY),
            s=st.s + ap * ds,
            y=st.y + ad * dy,
            Z=_sym(st.Z + ad * dZ),
            z=st.z + ad * dz,
        )

    return st, SdpStatus.MAX_ITERS, opts.max_iters, gap, pres, dres, "iteration limit reached"


# ── Public API ───────────────────────────────────────────────────────


def solve_sdp(
    problem: SdpProblem,
    opts: SdpOptions | None = None,
    *,
    dump_dir: str | Path | None = None,
) -> SdpSolution:
    """Solve ``problem``; deterministic given the problem and options.

    When ``dump_dir`` is given (or the ``sdp_debug_dump_dir`` flag is set)
    the problem is written there as JSON before solving.
    """
    opts = opts or SdpOptions()
    if dump_dir is None:
        dump_dir = str(get_feature_flag("sdp_debug_dump_dir", "") or "")
    if dump_dir:
        _dump_to_dir(problem, Path(dump_dir))

    emb = _embed(problem)
    if emb.trivially_infeasible:
        X = np.eye(problem.n, dtype=np.complex128)
        _log.warning("SDP infeasible: a constraint with zero matrix demands a positive offset")
        return SdpSolution(
            X=X,
            objective=problem.objective_value(X),
            duality_gap=math.inf,
            iterations=0,
            status=SdpStatus.INFEASIBLE,
            message="zero constraint matrix with positive offset",
        )
    if emb.m == 0:
        raise InvalidInputError("every constraint was trivially satisfied; nothing bounds the objective")

    try:
        st, status, iterations, gap, pres, dres, message = _interior_point(emb, opts)
    except SdpSolverError as exc:
        _log.warning("SDP numerical failure on n=%d: %s", problem.n, exc)
        X = np.eye(problem.n, dtype=np.complex128)
        return SdpSolution(
            X=X,
            objective=math.nan,
            duality_gap=math.inf,
            iterations=0,
            status=SdpStatus.NUMERICAL_FAILURE,
            message=str(exc),
        )

    X = from_real_embedding(st.Y)
    objective = problem.objective_value(X)
    if status is SdpStatus.OPTIMAL:
        _log.debug("SDP optimal n=%d iterations=%d objective=%.12g", problem.n, iterations, objective)
    else:
        _log.warning("SDP finished with status %s after %d iterations: %s", status.value, iterations, message)
    return SdpSolution(
        X=X,
        objective=objective,
        duality_gap=gap,
        iterations=iterations,
        status=status,
        primal_residual=pres,
        dual_residual=dres,
        message=message,
    )


def verify_solution(problem: SdpProblem, sol: SdpSolution, opts: SdpOptions | None = None) -> dict:
    """Recompute PSD margin, diagonal residual, inequality slacks and objective."""
    opts = opts or SdpOptions()
    X = hermitian_part(sol.X)
    eig_min = eig_min_hermitian(X)
    diag_residual = float(np.max(np.abs(np.real(np.diag(X)) - 1.0))) if problem.diag_one else 0.0
    slacks = problem.constraint_slacks(X)
    slack_floors = [-opts.feas_tol * max(1.0, float(np.linalg.norm(c.G))) for c in problem.ineq]
    objective = problem.objective_value(X)
    objective_error = abs(objective - sol.objective) if math.isfinite(sol.objective) else math.inf

    checks = {
        "psd_ok": eig_min >= -PSD_MARGIN,
        "diag_ok": diag_residual <= opts.feas_tol,
        "inequalities_ok": all(s >= floor for s, floor in zip(slacks, slack_floors)),
        "objective_ok": objective_error <= 1e-9 * (1.0 + abs(objective)),
    }
    if all(checks.values()):
        status, reason = "pass", "Solution satisfies every constraint at solver tolerances."
    else:
        status, reason = "fail", "One or more solution checks failed."
    return {
        "status": status,
        "reason": reason,
        "checks": checks,
        "metrics": {
            "eig_min": eig_min,
            "diag_residual": diag_residual,
            "inequality_slacks": slacks,
            "objective": objective,
            "reported_objective": sol.objective,
            "solver_status": sol.status.value,
        },
        "thresholds": {
            "psd_margin": PSD_MARGIN,
            "feas_tol": opts.feas_tol,
        },
    }


# ── Debug dump ───────────────────────────────────────────────────────

ComplexEntry = tuple[float, float]


def _encode_matrix(A: CMatrix) -> list[list[ComplexEntry]]:
    return [[(float(z.real), float(z.imag)) for z in row] for row in np.asarray(A)]


def _decode_matrix(rows: Sequence[Sequence[Iterable[float]]]) -> CMatrix:
    return np.array([[complex(re, im) for re, im in row] for row in rows], dtype=np.complex128)


class _DumpConstraint(BaseModel):
    model_config = ConfigDict(extra="forbid")

    G: list[list[ComplexEntry]]
    h: float


class SdpDumpFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format: Literal["ris-d2d/sdp"] = SDP_DUMP_FORMAT
    version: int = SDP_DUMP_VERSION
    n: int = Field(ge=1)
    diag_one: bool
    C: list[list[ComplexEntry]]
    ineq: list[_DumpConstraint] = Field(default_factory=list)


def problem_payload(problem: SdpProblem) -> dict:
    return {
        "format": SDP_DUMP_FORMAT,
        "version": SDP_DUMP_VERSION,
        "n": problem.n,
        "diag_one": problem.diag_one,
        "C": _encode_matrix(problem.C),
        "ineq": [{"G": _encode_matrix(c.G), "h": c.h} for c in problem.ineq],
    }


def dump_problem_json(problem: SdpProblem, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(problem_payload(problem), indent=2) + "\n", encoding="utf-8", newline="\n")
    return path


def load_problem_json(path: str | Path) -> SdpProblem:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = SdpDumpFile.model_validate_json(text)
    except ValidationError as exc:
        raise InvalidInputError(f"{path}: {format_validation_error(exc)}") from exc
    return SdpProblem(
        C=_decode_matrix(doc.C),
        ineq=tuple(SdpConstraint(G=_decode_matrix(c.G), h=c.h) for c in doc.ineq),
        diag_one=doc.diag_one,
    )


def _dump_to_dir(problem: SdpProblem, directory: Path) -> Path:
    text = json.dumps(problem_payload(problem), sort_keys=True)
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
    target = directory / f"sdp-{digest}.json"
    if not target.exists():
        dump_problem_json(problem, target)
        _log.debug("Wrote SDP debug dump %s", target)
    return target
