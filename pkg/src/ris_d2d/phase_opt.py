"""RIS phase-shift optimization for fixed receive beamformer and powers.

For fixed ``(w, p_D, p_C)`` both SINRs are ratios of quadratic forms in the
reflection vector ``θ``.  The sum rate is rewritten with the Lagrangian dual
transform (auxiliaries ``ζ``), the resulting sum of ratios with the
quadratic transform (auxiliaries ``ξ``), which leaves a QCQP in ``θ``.  The
QCQP is lifted to an SDP over ``Φ = [θ; 1][θ; 1]^H`` with the rank-one
constraint dropped, solved with :mod:`ris_d2d.sdp_solver`, and a unit-modulus
``θ`` is recovered by Gaussian randomization.

Only candidates that meet both SINR requirements and improve the true sum
rate are accepted, so the returned phases are never worse than the start.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .channel_model import ChannelSet, PhaseVector
from .linalg_core import CMatrix, CVector, InvalidInputError, psd_sqrt
from .sdp_solver import SdpConstraint, SdpOptions, SdpProblem, SdpSolution, SdpStatus, solve_sdp

_log = logging.getLogger(__name__)

UNIT_NORM_TOL = 1e-9
CONSTRAINT_SLACK = 1e-9
RANK_RTOL = 1e-10

RandomizationScore = Literal["sum_rate", "qcqp"]


class PhaseOptimizationError(RuntimeError):
    """Raised when the relaxation cannot be solved; carries the inner iteration."""

    def __init__(self, iteration: int, message: str) -> None:
        super().__init__(f"phase optimization failed at inner iteration {iteration}: {message}")
        self.iteration = iteration


class PhaseOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    max_inner: int = Field(default=20, ge=1)
    tol_rate: float = Field(default=1e-4, gt=0)
    num_samples: int = Field(default=1000, ge=1)
    seed: int = Field(default=0, ge=0)
    init: Literal["zeros", "random"] = "zeros"
    randomization_score: RandomizationScore = "sum_rate"
    sdp: SdpOptions = Field(default_factory=SdpOptions)


# ── Scalarization ────────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class Scalarization:
    """Offsets ``a`` and reflection weights ``b`` of the four composite paths.

    ``a + b^H θ`` is, respectively, the DT→DR signal (D1), the CU→DR
    interference (C1), the CU signal after ``w`` (C2) and the DT interference
    after ``w`` (D2), all scaled by the square root of the transmit power.
    """

    a_D1: complex
    a_C1: complex
    a_C2: complex
    a_D2: complex
    b_D1: CVector
    b_C1: CVector
    b_C2: CVector
    b_D2: CVector

    @property
    def N(self) -> int:
        return int(self.b_D1.shape[0])

    def amplitudes(self, c: CVector) -> tuple[complex, complex, complex, complex]:
        """``(a + b^H θ)`` for D1, C1, C2, D2 at coefficients ``c``."""
        return (
            self.a_D1 + complex(np.vdot(self.b_D1, c)),
            self.a_C1 + complex(np.vdot(self.b_C1, c)),
            self.a_C2 + complex(np.vdot(self.b_C2, c)),
            self.a_D2 + complex(np.vdot(self.b_D2, c)),
        )


def scalarize(ch: ChannelSet, w: CVector, p_D: float, p_C: float) -> Scalarization:
    w = np.asarray(w, dtype=np.complex128).reshape(-1)
    if w.shape != (ch.M,):
        raise InvalidInputError(f"receive vector has shape {w.shape}, expected ({ch.M},)")
    if abs(float(np.linalg.norm(w)) - 1.0) > UNIT_NORM_TOL:
        raise InvalidInputError("receive vector must have unit norm")
    if p_D < 0 or p_C < 0:
        raise InvalidInputError(f"powers must be non-negative, got p_D={p_D}, p_C={p_C}")
    sD, sC = math.sqrt(p_D), math.sqrt(p_C)
    SBw = ch.S_B.conj().T @ w
    return Scalarization(
        a_D1=sD * ch.g_D,
        a_C1=sC * ch.f_C,
        a_C2=sC * complex(np.vdot(w, ch.g_C)),
        a_D2=sD * complex(np.vdot(w, ch.f_D)),
        b_D1=sD * ch.s_T.conj() * ch.s_R,
        b_C1=sC * ch.s_C.conj() * ch.s_R,
        b_C2=sC * ch.s_C.conj() * SBw,
        b_D2=sD * ch.s_T.conj() * SBw,
    )


def sinr_from_theta(s: Scalarization, phi: PhaseVector, sigma2_D: float, sigma2_B: float) -> tuple[float, float]:
    A_D1, A_C1, A_C2, A_D2 = s.amplitudes(phi.coefficients)
    gamma_D = abs(A_D1) ** 2 / (abs(A_C1) ** 2 + sigma2_D)
    gamma_C = abs(A_C2) ** 2 / (abs(A_D2) ** 2 + sigma2_B)
    return gamma_D, gamma_C


def sum_rate_from_theta(s: Scalarization, phi: PhaseVector, sigma2_D: float, sigma2_B: float) -> float:
    gamma_D, gamma_C = sinr_from_theta(s, phi, sigma2_D, sigma2_B)
    return math.log1p(gamma_D) + math.log1p(gamma_C)


# ── Dual and quadratic transforms ────────────────────────────────────


@dataclass(frozen=True)
class AuxiliaryState:
    zeta_D: float
    zeta_C: float
    xi_D: complex = 0j
    xi_C: complex = 0j

    def __post_init__(self) -> None:
        for name in ("zeta_D", "zeta_C"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise InvalidInputError(f"{name} must be finite and non-negative, got {value}")


def dual_transform_objective(zeta: float, gamma: float) -> float:
    """``log(1+ζ) - ζ + (1+ζ)γ/(1+γ)``, written so ``ζ = γ`` reduces exactly to ``log(1+γ)``."""
    return math.log1p(zeta) + (gamma - zeta) / (1.0 + gamma)


def update_zeta(gamma_D: float, gamma_C: float) -> tuple[float, float]:
    if gamma_D < 0 or gamma_C < 0:
        raise InvalidInputError(f"SINRs must be non-negative, got ({gamma_D}, {gamma_C})")
    return gamma_D, gamma_C


def _denominators(
    amps: tuple[complex, complex, complex, complex], sigma2_D: float, sigma2_B: float
) -> tuple[float, float]:
    A_D1, A_C1, A_C2, A_D2 = amps
    return (
        abs(A_D1) ** 2 + abs(A_C1) ** 2 + sigma2_D,
        abs(A_C2) ** 2 + abs(A_D2) ** 2 + sigma2_B,
    )


def update_xi(
    s: Scalarization, phi: PhaseVector, zeta: tuple[float, float], sigma2_D: float, sigma2_B: float
) -> tuple[complex, complex]:
    amps = s.amplitudes(phi.coefficients)
    den_D, den_C = _denominators(amps, sigma2_D, sigma2_B)
    xi_D = math.sqrt(1.0 + zeta[0]) * amps[0] / den_D
    xi_C = math.sqrt(1.0 + zeta[1]) * amps[2] / den_C
    return xi_D, xi_C


def objective_Fq(
    s: Scalarization, phi: PhaseVector, aux: AuxiliaryState, sigma2_D: float, sigma2_B: float
) -> float:
    """Quadratic-transform surrogate; equals :func:`ratio_objective` at the optimal ``ξ``."""
    amps = s.amplitudes(phi.coefficients)
    den_D, den_C = _denominators(amps, sigma2_D, sigma2_B)
    term_D = 2.0 * math.sqrt(1.0 + aux.zeta_D) * (aux.xi_D.conjugate() * amps[0]).real - abs(aux.xi_D) ** 2 * den_D
    term_C = 2.0 * math.sqrt(1.0 + aux.zeta_C) * (aux.xi_C.conjugate() * amps[2]).real - abs(aux.xi_C) ** 2 * den_C
    return float(term_D + term_C)


def ratio_objective(
    s: Scalarization, phi: PhaseVector, zeta: tuple[float, float], noise: tuple[float, float]
) -> float:
    """``Σ (1+ζ)|signal|² / (|signal|² + interference + noise)`` over both links."""
    sigma2_D, sigma2_B = noise
    amps = s.amplitudes(phi.coefficients)
    den_D, den_C = _denominators(amps, sigma2_D, sigma2_B)
    return (1.0 + zeta[0]) * abs(amps[0]) ** 2 / den_D + (1.0 + zeta[1]) * abs(amps[2]) ** 2 / den_C


# ── QCQP and its lift ────────────────────────────────────────────────


def _outer(b: CVector) -> CMatrix:
    return np.outer(b, b.conj())


def _lift(R: CMatrix, t: CVector) -> CMatrix:
    """``[[R, t], [t^H, 0]]``."""
    n = R.shape[0]
    out = np.zeros((n + 1, n + 1), dtype=np.complex128)
    out[:n, :n] = R
    out[:n, n] = t
    out[n, :n] = t.conj()
    return out


@dataclass(frozen=True, eq=False)
class QcqpInstance:
    """``max -θ^H B θ + 2 Re{u^H θ}`` s.t. ``θ^H R_i θ + 2 Re{t_i^H θ} + δ_i >= 0``, ``|θ_n| = 1``.

    The lifted matrices act on ``θ̄ = [θ; 1]``.  The scalarization, the
    thresholds and the noise powers ride along so candidates can be scored
    by their true sum rate.
    """

    B1: CMatrix
    B2: CMatrix
    u: CVector
    const: float
    R1: CMatrix
    R2: CMatrix
    t1: CVector
    t2: CVector
    delta1: float
    delta2: float
    R_B: CMatrix
    Rbar_D1: CMatrix
    Rbar_C1: CMatrix
    Rbar_C2: CMatrix
    Rbar_D2: CMatrix
    scalarization: Scalarization
    thresholds: tuple[float, float]
    noise: tuple[float, float]

    @property
    def B(self) -> CMatrix:
        return self.B1 + self.B2

    @property
    def N(self) -> int:
        return int(self.u.shape[0])

    def qcqp_objective(self, c: CVector) -> float:
        """``-θ^H B θ + 2 Re{u^H θ}`` (the constant part excluded)."""
        return float(-np.vdot(c, self.B @ c).real + 2.0 * np.vdot(self.u, c).real)

    def constraint_values(self, c: CVector) -> tuple[float, float]:
        v1 = np.vdot(c, self.R1 @ c).real + 2.0 * np.vdot(self.t1, c).real + self.delta1
        v2 = np.vdot(c, self.R2 @ c).real + 2.0 * np.vdot(self.t2, c).real + self.delta2
        return float(v1), float(v2)

    def to_sdp_problem(self) -> SdpProblem:
        gamma_D_min, gamma_C_min = self.thresholds
        return SdpProblem(
            C=self.R_B,
            ineq=(
                SdpConstraint(G=self.Rbar_D1 - gamma_D_min * self.Rbar_C1, h=-self.delta1),
                SdpConstraint(G=self.Rbar_C2 - gamma_C_min * self.Rbar_D2, h=-self.delta2),
            ),
            diag_one=True,
        )


def assemble_qcqp(
    s: Scalarization,
    aux: AuxiliaryState,
    thresholds: tuple[float, float],
    noise_powers: tuple[float, float],
) -> QcqpInstance:
    gamma_D_min, gamma_C_min = thresholds
    sigma2_D, sigma2_B = noise_powers
    rD, rC = math.sqrt(1.0 + aux.zeta_D), math.sqrt(1.0 + aux.zeta_C)
    mD, mC = abs(aux.xi_D) ** 2, abs(aux.xi_C) ** 2

    R_D1, R_C1 = _outer(s.b_D1), _outer(s.b_C1)
    R_C2, R_D2 = _outer(s.b_C2), _outer(s.b_D2)
    t_D1, t_C1 = s.a_D1 * s.b_D1, s.a_C1 * s.b_C1
    t_C2, t_D2 = s.a_C2 * s.b_C2, s.a_D2 * s.b_D2

    B1 = mD * (R_D1 + R_C1)
    B2 = mC * (R_C2 + R_D2)
    u1 = rD * aux.xi_D * s.b_D1 - mD * (t_D1 + t_C1)
    u2 = rC * aux.xi_C * s.b_C2 - mC * (t_C2 + t_D2)
    C1 = 2.0 * rD * (aux.xi_D.conjugate() * s.a_D1).real - mD * (abs(s.a_D1) ** 2 + abs(s.a_C1) ** 2 + sigma2_D)
    C2 = 2.0 * rC * (aux.xi_C.conjugate() * s.a_C2).real - mC * (abs(s.a_C2) ** 2 + abs(s.a_D2) ** 2 + sigma2_B)
    u = u1 + u2

    N = s.N
    R_B = np.zeros((N + 1, N + 1), dtype=np.complex128)
    R_B[:N, :N] = B1 + B2
    R_B[:N, N] = -u
    R_B[N, :N] = -u.conj()

    return QcqpInstance(
        B1=B1,
        B2=B2,
        u=u,
        const=float(C1 + C2),
        R1=R_D1 - gamma_D_min * R_C1,
        R2=R_C2 - gamma_C_min * R_D2,
        t1=t_D1 - gamma_D_min * t_C1,
        t2=t_C2 - gamma_C_min * t_D2,
        delta1=float(abs(s.a_D1) ** 2 - gamma_D_min * (abs(s.a_C1) ** 2 + sigma2_D)),
        delta2=float(abs(s.a_C2) ** 2 - gamma_C_min * (abs(s.a_D2) ** 2 + sigma2_B)),
        R_B=R_B,
        Rbar_D1=_lift(R_D1, t_D1),
        Rbar_C1=_lift(R_C1, t_C1),
        Rbar_C2=_lift(R_C2, t_C2),
        Rbar_D2=_lift(R_D2, t_D2),
        scalarization=s,
        thresholds=(float(gamma_D_min), float(gamma_C_min)),
        noise=(float(sigma2_D), float(sigma2_B)),
    )


# ── Rank-one recovery ────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class RandomizationResult:
    phases: PhaseVector
    sum_rate: float
    feasible: bool
    num_feasible: int
    sample_index: int


def _batch_rates(instance: QcqpInstance, coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sum rates and feasibility for candidate coefficient columns ``coeffs`` (N x S)."""
    s = instance.scalarization
    sigma2_D, sigma2_B = instance.noise
    gamma_D_min, gamma_C_min = instance.thresholds
    A_D1 = s.a_D1 + s.b_D1.conj() @ coeffs
    A_C1 = s.a_C1 + s.b_C1.conj() @ coeffs
    A_C2 = s.a_C2 + s.b_C2.conj() @ coeffs
    A_D2 = s.a_D2 + s.b_D2.conj() @ coeffs
    sig_D, int_D = np.abs(A_D1) ** 2, np.abs(A_C1) ** 2 + sigma2_D
    sig_C, int_C = np.abs(A_C2) ** 2, np.abs(A_D2) ** 2 + sigma2_B
    rates = np.log1p(sig_D / int_D) + np.log1p(sig_C / int_C)
    feasible = (sig_D - gamma_D_min * int_D >= -CONSTRAINT_SLACK) & (sig_C - gamma_C_min * int_C >= -CONSTRAINT_SLACK)
    return rates, feasible


def _batch_qcqp_objective(instance: QcqpInstance, coeffs: np.ndarray) -> np.ndarray:
    quad = np.einsum("ns,nm,ms->s", coeffs.conj(), instance.B, coeffs).real
    return -quad + 2.0 * (instance.u.conj() @ coeffs).real


def gaussian_randomization(
    Phi: CMatrix,
    instance: QcqpInstance,
    num_samples: int,
    seed: int,
    *,
    score: RandomizationScore = "sum_rate",
) -> RandomizationResult:
    """Draw ``v = L z`` with ``L L^H = Φ`` and project each sample to unit modulus.

    ``θ_n = arg(v_n / v_{N+1})``.  The feasible sample with the best score wins
    (lowest index on ties); without a feasible sample the best infeasible one
    is returned and flagged.  ``score="sum_rate"`` ranks by the true sum rate,
    ``score="qcqp"`` by the relaxed objective ``-θ^H B θ + 2 Re{u^H θ}``.
    ``sum_rate`` on the result is always the true sum rate.
    """
    N = instance.N
    Phi = np.asarray(Phi, dtype=np.complex128)
    if Phi.shape != (N + 1, N + 1):
        raise InvalidInputError(f"Φ has shape {Phi.shape}, expected ({N + 1}, {N + 1})")
    if num_samples < 1:
        raise InvalidInputError("num_samples must be at least 1")
    if score not in ("sum_rate", "qcqp"):
        raise InvalidInputError(f"unknown randomization score {score!r}")
    L = psd_sqrt(Phi, rank_rtol=RANK_RTOL)

    rng = np.random.Generator(np.random.Philox(seed))
    draws = rng.standard_normal((N + 1, num_samples, 2))
    z = (draws[..., 0] + 1j * draws[..., 1]) / math.sqrt(2.0)
    v = L @ z
    angles = np.angle(v[:N] * v[N].conj())
    coeffs = np.exp(1j * angles)

    rates, feasible = _batch_rates(instance, coeffs)
    scores = rates if score == "sum_rate" else _batch_qcqp_objective(instance, coeffs)
    num_feasible = int(np.count_nonzero(feasible))
    if num_feasible:
        best = int(np.argmax(np.where(feasible, scores, -np.inf)))
    else:
        best = int(np.argmax(scores))
    return RandomizationResult(
        phases=PhaseVector(angles[:, best]),
        sum_rate=float(rates[best]),
        feasible=bool(num_feasible),
        num_feasible=num_feasible,
        sample_index=best,
    )


# ── Alternating loop ─────────────────────────────────────────────────


@dataclass
class PhaseIterationRecord:
    index: int
    sdp_status: str
    sdp_iterations: int
    sdp_objective: float
    duality_gap: float
    candidate_sum_rate: float | None
    candidate_feasible: bool
    num_feasible: int
    accepted: bool

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "sdp_status": self.sdp_status,
            "sdp_iterations": self.sdp_iterations,
            "sdp_objective": self.sdp_objective,
            "duality_gap": self.duality_gap,
            "candidate_sum_rate": self.candidate_sum_rate,
            "candidate_feasible": self.candidate_feasible,
            "num_feasible": self.num_feasible,
            "accepted": self.accepted,
        }


@dataclass
class PhaseTrace:
    start_sum_rate: float
    final_sum_rate: float
    stop_reason: str = ""
    records: list[PhaseIterationRecord] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.records)

    def to_dict(self) -> dict:
        return {
            "start_sum_rate": self.start_sum_rate,
            "final_sum_rate": self.final_sum_rate,
            "stop_reason": self.stop_reason,
            "iterations": self.iterations,
            "records": [r.to_dict() for r in self.records],
        }


def phases_feasible(
    s: Scalarization, phi: PhaseVector, thresholds: tuple[float, float], noise: tuple[float, float]
) -> bool:
    amps = s.amplitudes(phi.coefficients)
    sigma2_D, sigma2_B = noise
    v1 = abs(amps[0]) ** 2 - thresholds[0] * (abs(amps[1]) ** 2 + sigma2_D)
    v2 = abs(amps[2]) ** 2 - thresholds[1] * (abs(amps[3]) ** 2 + sigma2_B)
    return v1 >= -CONSTRAINT_SLACK and v2 >= -CONSTRAINT_SLACK


def _record(index: int, sol: SdpSolution, cand: RandomizationResult | None, accepted: bool) -> PhaseIterationRecord:
    return PhaseIterationRecord(
        index=index,
        sdp_status=sol.status.value,
        sdp_iterations=sol.iterations,
        sdp_objective=sol.objective,
        duality_gap=sol.duality_gap,
        candidate_sum_rate=None if cand is None else cand.sum_rate,
        candidate_feasible=False if cand is None else cand.feasible,
        num_feasible=0 if cand is None else cand.num_feasible,
        accepted=accepted,
    )


def optimize_phases(
    s: Scalarization,
    thresholds: tuple[float, float],
    noise_powers: tuple[float, float],
    phi_init: PhaseVector,
    opts: PhaseOptions | None = None,
) -> tuple[PhaseVector, PhaseTrace]:
    """Alternate ζ, ξ and the relaxed θ update; keep the best feasible phases."""
    opts = opts or PhaseOptions()
    if phi_init.N != s.N:
        raise InvalidInputError(f"initial phases have {phi_init.N} elements, scalarization has {s.N}")
    sigma2_D, sigma2_B = noise_powers
    current = phi_init
    rate = sum_rate_from_theta(s, current, sigma2_D, sigma2_B)
    trace = PhaseTrace(start_sum_rate=rate, final_sum_rate=rate)
    if s.N == 0:
        trace.stop_reason = "no_elements"
        return current, trace

    trace.stop_reason = "max_inner"
    for k in range(opts.max_inner):
        zeta = update_zeta(*sinr_from_theta(s, current, sigma2_D, sigma2_B))
        xi = update_xi(s, current, zeta, sigma2_D, sigma2_B)
        aux = AuxiliaryState(zeta_D=zeta[0], zeta_C=zeta[1], xi_D=xi[0], xi_C=xi[1])
        instance = assemble_qcqp(s, aux, thresholds, noise_powers)
        sol = solve_sdp(instance.to_sdp_problem(), opts.sdp)

        if sol.status is SdpStatus.NUMERICAL_FAILURE:
            trace.records.append(_record(k, sol, None, False))
            raise PhaseOptimizationError(k, sol.message or "SDP numerical failure")
        if sol.status is SdpStatus.INFEASIBLE:
            trace.records.append(_record(k, sol, None, False))
            trace.stop_reason = "sdp_infeasible"
            _log.warning("Relaxation infeasible at inner iteration %d; keeping current phases", k)
            break
        if sol.status is SdpStatus.MAX_ITERS:
            _log.warning("Relaxation hit the iteration limit at inner iteration %d; using its last iterate", k)

        cand = gaussian_randomization(
            sol.X, instance, opts.num_samples, opts.seed + k, score=opts.randomization_score
        )
        accepted = cand.feasible and cand.sum_rate > rate
        trace.records.append(_record(k, sol, cand, accepted))
        _log.debug(
            "inner %d: candidate rate=%.10g feasible=%s incumbent=%.10g accepted=%s",
            k, cand.sum_rate, cand.feasible, rate, accepted,
        )
        if not accepted:
            trace.stop_reason = "no_improvement"
            break

        improvement = cand.sum_rate - rate
        current, rate = cand.phases, cand.sum_rate
        if improvement < opts.tol_rate:
            trace.stop_reason = "converged"
            break

    trace.final_sum_rate = rate
    return current, trace
