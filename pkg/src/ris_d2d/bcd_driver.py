"""Block coordinate descent over receive beamformer, uplink powers and RIS phases.

Blocks run in the order ``beamforming → power → phase`` (configurable).
Every block is wrapped by :meth:`BcdRun._run_stage` for timing, diagnostics
and the optional progress callback ``(stage, status, details)``.

Acceptance is feasibility-first: while no iterate meets every constraint,
a feasible power step is always taken; afterwards an update is kept only if
the true sum rate does not decrease.  The report carries the best feasible
iterate seen, so its sum-rate trace never decreases.  Accepted power and
phase steps re-derive the MMSE receiver, so every iterate's ``w`` is the
beamforming block's answer for its own phases and powers.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .channel_model import ChannelSet, EffectiveChannels, PhaseVector, effective_channels
from .config import SystemConfig
from .linalg_core import CVector
from .phase_opt import PhaseOptions, PhaseTrace, optimize_phases, scalarize
from .power_alloc import PowerCase, optimal_power, power_coefficients
from .receive_beamforming import DegenerateChannelError, cu_sinr, optimal_receiver

_log = logging.getLogger(__name__)

# Type alias for progress callbacks: (stage_name, status, detail_dict)
ProgressCallback = Callable[[str, str, dict[str, Any]], None]

Block = Literal["beamforming", "power", "phase"]
DEFAULT_BLOCK_ORDER: tuple[Block, ...] = ("beamforming", "power", "phase")
AUDIT_SLACK = 1e-9


class BcdStatus(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    INFEASIBLE = "infeasible"


class BcdOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    max_outer: int = Field(default=30, ge=1)
    tol_rate: float = Field(default=1e-4, gt=0)
    phase_opts: PhaseOptions = Field(default_factory=PhaseOptions)
    on_infeasible: Literal["keep_previous", "abort"] = "keep_previous"
    block_order: tuple[Block, ...] = DEFAULT_BLOCK_ORDER

    @field_validator("block_order")
    @classmethod
    def _check_order(cls, value: tuple[Block, ...]) -> tuple[Block, ...]:
        if sorted(value) != sorted(DEFAULT_BLOCK_ORDER):
            raise ValueError(f"block_order must list each of {DEFAULT_BLOCK_ORDER} exactly once")
        return value


def sum_rate(gamma_D: float, gamma_C: float) -> float:
    """``log(1+γ_D) + log(1+γ_C)`` in nats."""
    return math.log1p(gamma_D) + math.log1p(gamma_C)


def _complex_list(v: CVector) -> list[list[float]]:
    return [[float(z.real), float(z.imag)] for z in np.asarray(v)]


# ── Iterate bookkeeping ──────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class _Iterate:
    w: CVector
    p_D: float
    p_C: float
    phases: PhaseVector
    gamma_D: float
    gamma_C: float
    sum_rate: float
    feasible: bool


def _evaluate(config: SystemConfig, ch: ChannelSet, w: CVector, p_D: float, p_C: float, phases: PhaseVector) -> _Iterate:
    eff = effective_channels(ch, phases)
    gamma_D = abs(eff.h_D) ** 2 * p_D / (abs(eff.h_C) ** 2 * p_C + config.sigma2_D)
    gamma_C = cu_sinr(w, eff, p_D, p_C, config.sigma2_B)
    slacks = _constraint_slacks(config, p_D, p_C, gamma_D, gamma_C)
    return _Iterate(
        w=w,
        p_D=p_D,
        p_C=p_C,
        phases=phases,
        gamma_D=gamma_D,
        gamma_C=gamma_C,
        sum_rate=sum_rate(gamma_D, gamma_C),
        feasible=all(v >= -AUDIT_SLACK for v in slacks.values()),
    )


def _constraint_slacks(config: SystemConfig, p_D: float, p_C: float, gamma_D: float, gamma_C: float) -> dict[str, float]:
    return {
        "d2d_sinr": gamma_D - config.gamma_D_min,
        "cu_sinr": gamma_C - config.gamma_C_min,
        "p_D_nonnegative": p_D,
        "p_D_max": config.p_D_max - p_D,
        "p_C_nonnegative": p_C,
        "p_C_max": config.p_C_max - p_C,
    }


@dataclass
class IterationRecord:
    index: int
    w: CVector
    p_D: float
    p_C: float
    phases: PhaseVector
    gamma_D: float
    gamma_C: float
    sum_rate: float
    feasible: bool
    best_sum_rate: float | None
    power_case: str = ""
    power_point: str = ""
    phase_trace: PhaseTrace | None = None

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "w": _complex_list(self.w),
            "p_D": self.p_D,
            "p_C": self.p_C,
            "theta": self.phases.to_list(),
            "gamma_D": self.gamma_D,
            "gamma_C": self.gamma_C,
            "sum_rate": self.sum_rate,
            "feasible": self.feasible,
            "best_sum_rate": self.best_sum_rate,
            "power_case": self.power_case,
            "power_point": self.power_point,
            "phase_trace": None if self.phase_trace is None else self.phase_trace.to_dict(),
        }


@dataclass
class SolutionReport:
    scheme: str
    status: BcdStatus
    w: CVector
    p_D: float
    p_C: float
    phases: PhaseVector
    gamma_D: float
    gamma_C: float
    sum_rate: float
    feasible: bool
    iterations: int
    records: list[IterationRecord] = field(default_factory=list)
    message: str = ""
    stage_diagnostics: dict[str, dict[str, Any]] = field(default_factory=dict)

    @property
    def best_rate_trace(self) -> list[float]:
        return [r.best_sum_rate for r in self.records if r.best_sum_rate is not None]

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "status": self.status.value,
            "feasible": self.feasible,
            "sum_rate_nats": self.sum_rate,
            "gamma_D": self.gamma_D,
            "gamma_C": self.gamma_C,
            "p_D": self.p_D,
            "p_C": self.p_C,
            "w": _complex_list(self.w),
            "theta": self.phases.to_list(),
            "iterations": self.iterations,
            "message": self.message,
            "stage_diagnostics": self.stage_diagnostics,
            "records": [r.to_dict() for r in self.records],
        }


# ── Runner ───────────────────────────────────────────────────────────


class BcdRun:
    """One alternating-optimization run on a fixed channel realization."""

    def __init__(
        self,
        config: SystemConfig,
        ch: ChannelSet,
        opts: BcdOptions,
        *,
        scheme: str,
        phases: PhaseVector,
        optimize_phase: bool,
        on_progress: ProgressCallback | None = None,
    ) -> None:
        if ch.M != config.M or ch.N != config.N:
            raise ValueError(f"channels are {ch.M}x{ch.N} but config declares {config.M}x{config.N}")
        if phases.N != ch.N:
            raise ValueError(f"phase vector has {phases.N} elements, channels have N={ch.N}")
        self.config = config
        self.ch = ch
        self.opts = opts
        self.scheme = scheme
        self.optimize_phase = optimize_phase and ch.N > 0
        self._on_progress = on_progress
        self.stage_diagnostics: dict[str, dict[str, Any]] = {}
        self._aborted = False
        self._power_case = ""
        self._power_point = ""
        self._phase_trace: PhaseTrace | None = None

        p_D, p_C = config.p_D_max, config.p_C_max
        self._degenerate = ""
        try:
            w = self._receiver(phases, p_D, p_C)
        except DegenerateChannelError as exc:
            # Zero CU channel: every receiver is equally useless; report infeasible.
            self._degenerate = str(exc)
            w = np.zeros(config.M, dtype=np.complex128)
            w[0] = 1.0
        self.state = _evaluate(config, ch, w, p_D, p_C, phases)

    # ── Stage execution wrapper ──────────────────────────────────────

    def _run_stage(self, stage_name: str, fn: Callable[..., bool], *args: Any) -> bool:
        self._notify(stage_name, "started", {})
        start = time.monotonic()
        diag = self.stage_diagnostics.setdefault(stage_name, {"calls": 0, "elapsed_ms": 0.0, "changed": 0})
        try:
            changed = fn(*args)
        except Exception as exc:
            error_msg = f"{type(exc).__name__}: {exc}"
            diag["error"] = error_msg
            self._notify(stage_name, "error", {"error": error_msg})
            _log.error("BCD: stage %s failed: %s", stage_name, error_msg)
            raise
        elapsed_ms = round((time.monotonic() - start) * 1000, 1)
        diag["calls"] += 1
        diag["elapsed_ms"] = round(diag["elapsed_ms"] + elapsed_ms, 1)
        diag["changed"] += int(changed)
        self._notify(stage_name, "completed", {"elapsed_ms": elapsed_ms, "changed": changed, "sum_rate": self.state.sum_rate})
        return changed

    def _notify(self, stage: str, status: str, details: dict[str, Any]) -> None:
        if self._on_progress is not None:
            try:
                self._on_progress(stage, status, details)
            except Exception:
                _log.debug("Progress callback error for stage %s", stage, exc_info=True)

    # ── Blocks ───────────────────────────────────────────────────────

    def _receiver(self, phases: PhaseVector, p_D: float, p_C: float) -> CVector:
        eff = effective_channels(self.ch, phases)
        return optimal_receiver(eff, p_D, p_C, self.config.sigma2_B).w

    def _beamforming_block(self, outer: int) -> bool:
        st = self.state
        w = self._receiver(st.phases, st.p_D, st.p_C)
        if np.array_equal(w, st.w):
            return False
        candidate = _evaluate(self.config, self.ch, w, st.p_D, st.p_C, st.phases)
        if candidate.sum_rate < st.sum_rate and st.feasible:
            return False
        self.state = candidate
        return True

    def _power_block(self, outer: int) -> bool:
        st = self.state
        cfg = self.config
        eff: EffectiveChannels = effective_channels(self.ch, st.phases)
        co = power_coefficients(eff, cfg.sigma2_B, cfg.gamma_D_min, cfg.gamma_C_min)
        pair = optimal_power(co, (cfg.p_D_max, cfg.p_C_max), cfg.sigma2_D)
        self._power_case = pair.case_id.value
        self._power_point = pair.point.value
        if pair.case_id is PowerCase.INFEASIBLE:
            if self.opts.on_infeasible == "abort":
                _log.warning("BCD outer %d: power region empty; aborting", outer)
                self._aborted = True
            else:
                _log.warning("BCD outer %d: power region empty; keeping previous powers", outer)
            return False
        if pair.p_D == st.p_D and pair.p_C == st.p_C:
            return False
        w = optimal_receiver(eff, pair.p_D, pair.p_C, cfg.sigma2_B).w
        candidate = _evaluate(cfg, self.ch, w, pair.p_D, pair.p_C, st.phases)
        if st.feasible and (not candidate.feasible or candidate.sum_rate < st.sum_rate):
            _log.debug("BCD outer %d: power step rejected (%.10g < %.10g)", outer, candidate.sum_rate, st.sum_rate)
            return False
        self.state = candidate
        return True

    def _phase_block(self, outer: int) -> bool:
        st = self.state
        cfg = self.config
        s = scalarize(self.ch, st.w, st.p_D, st.p_C)
        phase_opts = self.opts.phase_opts
        phase_opts = phase_opts.model_copy(update={"seed": phase_opts.seed + outer * phase_opts.max_inner})
        phases, trace = optimize_phases(
            s,
            (cfg.gamma_D_min, cfg.gamma_C_min),
            (cfg.sigma2_D, cfg.sigma2_B),
            st.phases,
            phase_opts,
        )
        self._phase_trace = trace
        if np.array_equal(phases.theta, st.phases.theta):
            return False
        candidate = _evaluate(cfg, self.ch, st.w, st.p_D, st.p_C, phases)
        if not candidate.feasible or (st.feasible and candidate.sum_rate < st.sum_rate):
            return False
        # Keep w matched to (θ, p); the MMSE receiver never lowers γ_C.
        try:
            w = self._receiver(phases, st.p_D, st.p_C)
        except DegenerateChannelError:
            w = st.w
        refreshed = _evaluate(cfg, self.ch, w, st.p_D, st.p_C, phases)
        self.state = refreshed if refreshed.feasible and refreshed.sum_rate >= candidate.sum_rate else candidate
        return True

    # ── Main loop ────────────────────────────────────────────────────

    def run(self) -> SolutionReport:
        blocks: dict[str, Callable[[int], bool]] = {
            "beamforming": self._beamforming_block,
            "power": self._power_block,
            "phase": self._phase_block,
        }
        if self._degenerate:
            _log.warning("BCD %s: %s", self.scheme, self._degenerate)
            return self._report(BcdStatus.INFEASIBLE, self.state, 0, [], self._degenerate)

        records: list[IterationRecord] = []
        best: _Iterate | None = self.state if self.state.feasible else None
        prev_best_rate = best.sum_rate if best else None
        status = BcdStatus.MAX_ITERS
        _log.info("BCD %s started: M=%d N=%d", self.scheme, self.ch.M, self.ch.N)

        outer = 0
        for outer in range(1, self.opts.max_outer + 1):
            self._power_case = ""
            self._power_point = ""
            self._phase_trace = None
            changed = False
            for name in self.opts.block_order:
                if name == "phase" and not self.optimize_phase:
                    continue
                changed |= self._run_stage(name, blocks[name], outer)
                if self._aborted:
                    break

            st = self.state
            if st.feasible and (best is None or st.sum_rate >= best.sum_rate):
                best = st
            best_rate = best.sum_rate if best else None
            records.append(
                IterationRecord(
                    index=outer,
                    w=st.w,
                    p_D=st.p_D,
                    p_C=st.p_C,
                    phases=st.phases,
                    gamma_D=st.gamma_D,
                    gamma_C=st.gamma_C,
                    sum_rate=st.sum_rate,
                    feasible=st.feasible,
                    best_sum_rate=best_rate,
                    power_case=self._power_case,
                    power_point=self._power_point,
                    phase_trace=self._phase_trace,
                )
            )
            _log.debug("BCD outer %d: rate=%.10g feasible=%s best=%s", outer, st.sum_rate, st.feasible, best_rate)

            if self._aborted:
                break
            if best_rate is not None and prev_best_rate is not None and best_rate - prev_best_rate < self.opts.tol_rate:
                status = BcdStatus.CONVERGED
                break
            if not changed:
                status = BcdStatus.CONVERGED if best is not None else BcdStatus.INFEASIBLE
                break
            prev_best_rate = best_rate

        if best is None:
            status = BcdStatus.INFEASIBLE
            final = self.state
            message = "no iterate satisfied the SINR requirements"
        else:
            final = best
            message = ""
        _log.info("BCD %s finished: status=%s rate=%.10g outer=%d", self.scheme, status.value, final.sum_rate, outer)
        return self._report(status, final, outer, records, message)

    def _report(
        self, status: BcdStatus, final: _Iterate, iterations: int, records: list[IterationRecord], message: str
    ) -> SolutionReport:
        return SolutionReport(
            scheme=self.scheme,
            status=status,
            w=final.w,
            p_D=final.p_D,
            p_C=final.p_C,
            phases=final.phases,
            gamma_D=final.gamma_D,
            gamma_C=final.gamma_C,
            sum_rate=final.sum_rate,
            feasible=final.feasible,
            iterations=iterations,
            records=records,
            message=message,
            stage_diagnostics=self.stage_diagnostics,
        )


# ── Entry points ─────────────────────────────────────────────────────


def _initial_phases(n: int, opts: BcdOptions) -> PhaseVector:
    if opts.phase_opts.init == "random":
        return PhaseVector.random(n, np.random.Generator(np.random.Philox(opts.phase_opts.seed)))
    return PhaseVector.zeros(n)


def run_bcd(
    config: SystemConfig,
    ch: ChannelSet,
    opts: BcdOptions | None = None,
    *,
    on_progress: ProgressCallback | None = None,
) -> SolutionReport:
    """Jointly optimize w, (p_D, p_C) and the RIS phases starting from the box corner."""
    opts = opts or BcdOptions()
    return BcdRun(
        config,
        ch,
        opts,
        scheme="ris_bcd",
        phases=_initial_phases(ch.N, opts),
        optimize_phase=True,
        on_progress=on_progress,
    ).run()


def solve_baseline_no_ris(
    config: SystemConfig,
    ch: ChannelSet,
    opts: BcdOptions | None = None,
    *,
    on_progress: ProgressCallback | None = None,
) -> SolutionReport:
    """Direct links only: alternate w and powers."""
    opts = opts or BcdOptions()
    return BcdRun(
        config.with_elements(0),
        ch.without_ris(),
        opts,
        scheme="no_ris",
        phases=PhaseVector.zeros(0),
        optimize_phase=False,
        on_progress=on_progress,
    ).run()


def solve_baseline_random_phase(
    config: SystemConfig,
    ch: ChannelSet,
    seed: int,
    opts: BcdOptions | None = None,
    *,
    on_progress: ProgressCallback | None = None,
) -> SolutionReport:
    """Phases drawn uniformly once from ``seed`` and held fixed; w and powers alternate."""
    opts = opts or BcdOptions()
    phases = PhaseVector.random(ch.N, np.random.Generator(np.random.Philox(seed)))
    return BcdRun(
        config,
        ch,
        opts,
        scheme="random_phase",
        phases=phases,
        optimize_phase=False,
        on_progress=on_progress,
    ).run()


def audit_constraints(config: SystemConfig, ch: ChannelSet, report: SolutionReport) -> dict:
    """Re-evaluate every constraint at the reported solution."""
    if report.phases.N == 0 and ch.N > 0:
        ch = ch.without_ris()
    eff = effective_channels(ch, report.phases)
    gamma_D = abs(eff.h_D) ** 2 * report.p_D / (abs(eff.h_C) ** 2 * report.p_C + config.sigma2_D)
    gamma_C = cu_sinr(report.w, eff, report.p_D, report.p_C, config.sigma2_B)
    slacks = _constraint_slacks(config, report.p_D, report.p_C, gamma_D, gamma_C)
    modulus_error = float(np.max(np.abs(np.abs(report.phases.coefficients) - 1.0))) if report.phases.N else 0.0
    w_norm_error = abs(float(np.linalg.norm(report.w)) - 1.0)
    recomputed_rate = sum_rate(gamma_D, gamma_C)

    checks = {f"{name}_ok": value >= -AUDIT_SLACK for name, value in slacks.items()}
    checks["unit_modulus_ok"] = modulus_error <= AUDIT_SLACK
    checks["unit_norm_receiver_ok"] = w_norm_error <= AUDIT_SLACK
    checks["sum_rate_consistent"] = abs(recomputed_rate - report.sum_rate) <= AUDIT_SLACK * (1.0 + abs(recomputed_rate))

    if all(checks.values()):
        status, reason = "pass", "All constraints satisfied at the reported solution."
    else:
        status, reason = "fail", "One or more constraints are violated."
    return {
        "status": status,
        "reason": reason,
        "checks": checks,
        "slacks": slacks,
        "metrics": {
            "gamma_D": gamma_D,
            "gamma_C": gamma_C,
            "sum_rate": recomputed_rate,
            "modulus_error": modulus_error,
            "w_norm_error": w_norm_error,
        },
        "thresholds": {"slack": AUDIT_SLACK},
    }
