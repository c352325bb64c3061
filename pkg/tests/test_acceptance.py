"""Desk-scale acceptance runs; deselected by default, run with ``pytest -m slow``."""

import os
from pathlib import Path

import numpy as np
import pytest

from ris_d2d.bcd_driver import audit_constraints, run_bcd, solve_baseline_no_ris, solve_baseline_random_phase
from ris_d2d.channel_model import PhaseVector, default_geometry, effective_channels, generate_channels
from ris_d2d.phase_opt import (
    AuxiliaryState,
    Scalarization,
    assemble_qcqp,
    gaussian_randomization,
    scalarize,
    sinr_from_theta,
    sum_rate_from_theta,
    update_xi,
    update_zeta,
)
from ris_d2d.sdp_solver import SdpProblem, SdpStatus, solve_sdp, verify_solution
from ris_d2d.sweep import SweepResult, SweepSpec, TrialRow, derive_trial_seed, load_sweep_spec, run_sweep

pytestmark = pytest.mark.slow

REPO_ROOT = Path(__file__).resolve().parents[1]
NOISE = (1.0, 1.0)
JOBS = max(1, os.cpu_count() or 1)


def _synthetic(rng: np.random.Generator, N: int) -> Scalarization:
    def c() -> complex:
        return complex(rng.standard_normal(), rng.standard_normal())

    def v() -> np.ndarray:
        return rng.standard_normal(N) + 1j * rng.standard_normal(N)

    return Scalarization(a_D1=c(), a_C1=c(), a_C2=c(), a_D2=c(), b_D1=v(), b_C1=v(), b_C2=v(), b_D2=v())


def _aux(s: Scalarization, phi: PhaseVector, noise: tuple[float, float] = NOISE) -> AuxiliaryState:
    zeta = update_zeta(*sinr_from_theta(s, phi, *noise))
    xi = update_xi(s, phi, zeta, *noise)
    return AuxiliaryState(zeta_D=zeta[0], zeta_C=zeta[1], xi_D=xi[0], xi_C=xi[1])


def _channel_instance(N: int, seed: int):
    config = default_geometry(1.0, N=N)
    ch = generate_channels(config, seed)
    eff = effective_channels(ch, PhaseVector.zeros(N))
    s = scalarize(ch, eff.hC_vec / np.linalg.norm(eff.hC_vec), 10.0, 10.0)
    noise = (config.sigma2_D, config.sigma2_B)
    return assemble_qcqp(s, _aux(s, PhaseVector.zeros(N), noise), (1e-3, 1e-3), noise)


# ── Lift and relaxation ──────────────────────────────────────────────


def test_lift_reproduces_quadratic_forms() -> None:
    rng = np.random.default_rng(600)
    for _ in range(1000):
        N = int(rng.integers(1, 9))
        s = _synthetic(rng, N)
        instance = assemble_qcqp(s, _aux(s, PhaseVector.random(N, rng)), tuple(rng.uniform(0, 2, 2)), NOISE)
        problem = instance.to_sdp_problem()
        c = PhaseVector.random(N, rng).coefficients
        theta_bar = np.append(c, 1.0)
        Phi = np.outer(theta_bar, theta_bar.conj())
        expected = instance.qcqp_objective(c)
        assert abs(problem.objective_value(Phi) + expected) <= 1e-10 * max(1.0, abs(expected))
        for lifted, direct in zip(problem.constraint_slacks(Phi), instance.constraint_values(c)):
            assert abs(lifted - direct) <= 1e-10 * max(1.0, abs(direct))


def test_relaxation_bounds_every_sampled_feasible_point() -> None:
    rng = np.random.default_rng(601)
    checked = 0
    for seed in range(20):
        N = (2, 4, 8)[seed % 3]
        instance = _channel_instance(N, seed)
        sol = solve_sdp(instance.to_sdp_problem())
        assert sol.status is SdpStatus.OPTIMAL
        for _ in range(500):
            c = np.exp(1j * rng.uniform(0, 2 * np.pi, N))
            if min(instance.constraint_values(c)) < 0:
                continue
            value = -instance.qcqp_objective(c)
            assert sol.objective <= value + 1e-7 * max(1.0, abs(value))
            checked += 1
    assert checked > 5000


# ── Solver corpus ────────────────────────────────────────────────────


def test_sdp_corpus_meets_tolerances() -> None:
    for index in range(200):
        N = (2, 4, 8)[index % 3]
        problem = _channel_instance(N, 1000 + index).to_sdp_problem()
        sol = solve_sdp(problem)
        assert sol.status is SdpStatus.OPTIMAL, sol.message
        assert sol.duality_gap <= 1e-7
        assert sol.primal_residual <= 1e-7
        assert sol.dual_residual <= 1e-7
        gate = verify_solution(problem, sol)
        assert gate["status"] == "pass", gate

    swap = solve_sdp(SdpProblem(C=np.array([[0.0, 1.0], [1.0, 0.0]])))
    assert abs(swap.objective + 2.0) <= 1e-8


def test_randomization_recovers_rank_one_points() -> None:
    rng = np.random.default_rng(800)
    for _ in range(100):
        N = int(rng.integers(1, 9))
        s = _synthetic(rng, N)
        instance = assemble_qcqp(s, _aux(s, PhaseVector.zeros(N)), (0.0, 0.0), NOISE)
        target = PhaseVector.random(N, rng)
        theta_bar = np.append(target.coefficients, 1.0)
        result = gaussian_randomization(np.outer(theta_bar, theta_bar.conj()), instance, 20, seed=int(rng.integers(2**32)))
        rate = sum_rate_from_theta(s, target, *NOISE)
        assert abs(result.sum_rate - rate) <= 1e-9 * max(1.0, rate)


# ── End-to-end trends ────────────────────────────────────────────────


def _audited_trial(spec: SweepSpec, value: float, trial: int) -> list[TrialRow]:
    """Like the library trial runner, but fails the trial on any trace or audit violation."""
    config = spec.config_for(value)
    seed = derive_trial_seed(spec.master_seed, spec.variable, value, trial)
    ch = generate_channels(config, seed)
    rows = []
    for scheme in spec.schemes:
        if scheme == "ris_bcd":
            report = run_bcd(config, ch, spec.bcd)
        elif scheme == "no_ris":
            report = solve_baseline_no_ris(config, ch, spec.bcd)
        else:
            report = solve_baseline_random_phase(config, ch, (seed + 1) % 2**64, spec.bcd)
        trace = report.best_rate_trace
        if any(b < a for a, b in zip(trace, trace[1:])):
            raise AssertionError(f"{scheme} trace decreased at {spec.variable}={value} trial {trial}")
        if report.feasible and audit_constraints(config, ch, report)["status"] != "pass":
            raise AssertionError(f"{scheme} audit failed at {spec.variable}={value} trial {trial}")
        rows.append(TrialRow.from_report(spec.variable, value, trial, report))
    return rows


def _means(result: SweepResult) -> dict[tuple[float, str], float]:
    return {(r.value, r.scheme): r.sum_rate_nats for r in result.mean_rows}


def _paired_gaps(result: SweepResult, value: float) -> np.ndarray:
    by_trial: dict[int, dict[str, float]] = {}
    for r in result.rows:
        if r.value == value and r.succeeded:
            by_trial.setdefault(int(r.trial), {})[r.scheme] = r.sum_rate_nats
    return np.array([t["ris_bcd"] - t["no_ris"] for t in by_trial.values() if {"ris_bcd", "no_ris"} <= set(t)])


def _assert_clean(result: SweepResult) -> None:
    errors = sorted({r.status for r in result.rows if r.status.startswith("error:")})
    assert result.failed_rows == 0, errors


def test_elements_sweep_trend() -> None:
    spec = load_sweep_spec(REPO_ROOT / "config" / "sweep_elements.json")
    result = run_sweep(spec, jobs=JOBS, run_trial_fn=_audited_trial)
    _assert_clean(result)
    means = _means(result)
    gaps = []
    for value in spec.values:
        assert means[(value, "ris_bcd")] > means[(value, "no_ris")]
        gaps.append(means[(value, "ris_bcd")] - means[(value, "no_ris")])
    assert all(b >= a for a, b in zip(gaps, gaps[1:])), gaps

    diffs = _paired_gaps(result, spec.values[-1])
    rng = np.random.default_rng(0)
    boot = rng.choice(diffs, size=(2000, diffs.size), replace=True).mean(axis=1)
    assert np.percentile(boot, 2.5) > 0


def test_power_sweep_trend() -> None:
    spec = load_sweep_spec(REPO_ROOT / "config" / "sweep_power.json")
    result = run_sweep(spec, jobs=JOBS, run_trial_fn=_audited_trial)
    _assert_clean(result)
    means = _means(result)
    for scheme in spec.schemes:
        series = [means[(value, scheme)] for value in spec.values]
        assert all(b >= a for a, b in zip(series, series[1:])), (scheme, series)
    for value in spec.values:
        assert means[(value, "ris_bcd")] >= means[(value, "no_ris")]
