import json
from pathlib import Path

import numpy as np
import pytest

from ris_d2d.channel_model import PhaseVector, default_geometry, effective_channels, generate_channels
from ris_d2d.linalg_core import InvalidInputError, eig_min_hermitian
from ris_d2d.phase_opt import AuxiliaryState, assemble_qcqp, scalarize, sinr_from_theta, update_xi, update_zeta
from ris_d2d.sdp_solver import (
    SdpConstraint,
    SdpOptions,
    SdpProblem,
    SdpStatus,
    dump_problem_json,
    load_problem_json,
    solve_sdp,
    verify_solution,
)

TIGHT = SdpOptions(gap_tol=1e-10, feas_tol=1e-10)
SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])


def _relaxation_instance(n: int, seed: int):
    config = default_geometry(1.0, N=n)
    ch = generate_channels(config, seed)
    eff = effective_channels(ch, PhaseVector.zeros(n))
    w = eff.hC_vec / np.linalg.norm(eff.hC_vec)
    s = scalarize(ch, w, 10.0, 10.0)
    noise = (config.sigma2_D, config.sigma2_B)
    phi0 = PhaseVector.zeros(n)
    zeta = update_zeta(*sinr_from_theta(s, phi0, *noise))
    xi = update_xi(s, phi0, zeta, *noise)
    aux = AuxiliaryState(zeta_D=zeta[0], zeta_C=zeta[1], xi_D=xi[0], xi_C=xi[1])
    return assemble_qcqp(s, aux, (1e-3, 1e-3), noise)


# ── Known optima ─────────────────────────────────────────────────────


def test_one_dimensional_problem_is_pinned() -> None:
    problem = SdpProblem(C=np.array([[3.5]]))
    sol = solve_sdp(problem, TIGHT)
    assert sol.status is SdpStatus.OPTIMAL
    assert sol.objective == pytest.approx(3.5, abs=1e-8)
    assert sol.X[0, 0].real == pytest.approx(1.0, abs=1e-8)


def test_two_dimensional_swap_objective() -> None:
    sol = solve_sdp(SdpProblem(C=SWAP), TIGHT)
    assert sol.status is SdpStatus.OPTIMAL
    assert sol.objective == pytest.approx(-2.0, abs=1e-8)
    assert sol.X[0, 1].real == pytest.approx(-1.0, abs=1e-6)


def test_complex_off_diagonal_objective() -> None:
    C = np.array([[0.0, 1j], [-1j, 0.0]])
    sol = solve_sdp(SdpProblem(C=C), TIGHT)
    assert sol.status is SdpStatus.OPTIMAL
    assert sol.objective == pytest.approx(-2.0, abs=1e-8)
    # tr(C X) = -2 Im X_21 is minimized at X_21 = i.
    assert sol.X[1, 0] == pytest.approx(1j, abs=1e-6)


def test_inequality_caps_the_objective() -> None:
    problem = SdpProblem(C=SWAP, ineq=(SdpConstraint(G=SWAP, h=-1.0),))
    sol = solve_sdp(problem, TIGHT)
    assert sol.status is SdpStatus.OPTIMAL
    assert sol.objective == pytest.approx(-1.0, abs=1e-7)
    assert verify_solution(problem, sol, TIGHT)["status"] == "pass"


def test_inequality_only_problem() -> None:
    problem = SdpProblem(C=np.eye(2), ineq=((np.diag([1.0, 2.0]), 1.0),), diag_one=False)
    sol = solve_sdp(problem, TIGHT)
    assert sol.status is SdpStatus.OPTIMAL
    assert sol.objective == pytest.approx(0.5, abs=1e-7)
    assert sol.X[1, 1].real == pytest.approx(0.5, abs=1e-6)


def test_solution_is_psd_with_unit_diagonal() -> None:
    rng = np.random.default_rng(4)
    A = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    problem = SdpProblem(C=A + A.conj().T)
    sol = solve_sdp(problem)
    gate = verify_solution(problem, sol)
    assert sol.status is SdpStatus.OPTIMAL
    assert gate["status"] == "pass"
    assert gate["checks"] == {"psd_ok": True, "diag_ok": True, "inequalities_ok": True, "objective_ok": True}
    assert eig_min_hermitian(0.5 * (sol.X + sol.X.conj().T)) >= -1e-8
    assert sol.diagnostics()["status"] == "optimal"


def test_solve_is_deterministic() -> None:
    instance = _relaxation_instance(4, 3)
    a = solve_sdp(instance.to_sdp_problem())
    b = solve_sdp(instance.to_sdp_problem())
    assert np.array_equal(a.X, b.X)
    assert a.iterations == b.iterations


# ── Infeasibility ────────────────────────────────────────────────────


def test_zero_constraint_with_positive_offset_is_infeasible() -> None:
    problem = SdpProblem(C=np.eye(2), ineq=((np.zeros((2, 2)), 1.0),))
    sol = solve_sdp(problem)
    assert sol.status is SdpStatus.INFEASIBLE
    assert sol.iterations == 0


def test_diagonal_pin_conflicts_with_inequality() -> None:
    problem = SdpProblem(C=np.eye(2), ineq=((np.diag([1.0, 0.0]), 3.0),))
    sol = solve_sdp(problem)
    assert sol.status is not SdpStatus.OPTIMAL
    assert verify_solution(problem, sol)["status"] == "fail"


def test_only_trivial_constraints_are_rejected() -> None:
    problem = SdpProblem(C=np.eye(2), ineq=((np.zeros((2, 2)), -1.0),), diag_one=False)
    with pytest.raises(InvalidInputError):
        solve_sdp(problem)


# ── Relaxation of the phase subproblem ───────────────────────────────


@pytest.mark.parametrize("n", [1, 2, 4, 8])
def test_relaxation_bounds_the_rank_one_objective(n: int) -> None:
    instance = _relaxation_instance(n, seed=n)
    ones = np.ones(n, dtype=np.complex128)
    assert min(instance.constraint_values(ones)) >= 0
    problem = instance.to_sdp_problem()
    sol = solve_sdp(problem)
    assert sol.status is SdpStatus.OPTIMAL
    assert verify_solution(problem, sol)["status"] == "pass"
    scale = 1.0 + abs(instance.qcqp_objective(ones))
    assert sol.objective <= -instance.qcqp_objective(ones) + 1e-6 * scale
    rng = np.random.default_rng(n)
    for _ in range(20):
        c = np.exp(1j * rng.uniform(0, 2 * np.pi, n))
        if min(instance.constraint_values(c)) >= 0:
            assert sol.objective <= -instance.qcqp_objective(c) + 1e-6 * scale


def test_lifted_objective_matches_qcqp_objective() -> None:
    instance = _relaxation_instance(3, seed=9)
    c = np.exp(1j * np.array([0.3, 1.7, 4.0]))
    theta_bar = np.append(c, 1.0)
    Phi = np.outer(theta_bar, theta_bar.conj())
    assert instance.to_sdp_problem().objective_value(Phi) == pytest.approx(-instance.qcqp_objective(c), rel=1e-12)


# ── Validation and dumps ─────────────────────────────────────────────


def test_problem_validation() -> None:
    with pytest.raises(InvalidInputError):
        SdpProblem(C=np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(InvalidInputError):
        SdpProblem(C=np.eye(2), ineq=((np.eye(3), 0.0),))
    with pytest.raises(InvalidInputError):
        SdpProblem(C=np.eye(2), ineq=((np.eye(2), float("nan")),))
    with pytest.raises(InvalidInputError):
        SdpProblem(C=np.eye(2), diag_one=False)
    with pytest.raises(InvalidInputError):
        SdpProblem(C=np.zeros((0, 0)))


def test_options_reject_out_of_range_values() -> None:
    with pytest.raises(ValueError):
        SdpOptions(step_fraction=1.0)
    with pytest.raises(ValueError):
        SdpOptions(max_iters=0)


def test_dump_round_trip(tmp_path: Path) -> None:
    instance = _relaxation_instance(3, seed=2)
    problem = instance.to_sdp_problem()
    path = dump_problem_json(problem, tmp_path / "nested" / "problem.json")
    loaded = load_problem_json(path)
    assert loaded.n == problem.n
    np.testing.assert_array_equal(loaded.C, problem.C)
    for a, b in zip(loaded.ineq, problem.ineq):
        np.testing.assert_array_equal(a.G, b.G)
        assert a.h == b.h
    assert solve_sdp(loaded).objective == pytest.approx(solve_sdp(problem).objective, rel=1e-12)


def test_load_problem_rejects_unknown_fields(tmp_path: Path) -> None:
    path = dump_problem_json(SdpProblem(C=SWAP), tmp_path / "problem.json")
    payload = json.loads(path.read_text(encoding="utf-8"))
    payload["solver"] = "other"
    path.write_text(json.dumps(payload), encoding="utf-8")
    with pytest.raises(InvalidInputError):
        load_problem_json(path)


def test_dump_dir_flag_writes_problem(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("RIS_D2D_FLAG_SDP_DEBUG_DUMP_DIR", str(tmp_path))
    solve_sdp(SdpProblem(C=SWAP))
    solve_sdp(SdpProblem(C=SWAP))
    dumps = sorted(tmp_path.glob("sdp-*.json"))
    assert len(dumps) == 1
    assert load_problem_json(dumps[0]).n == 2
