import json
from pathlib import Path

import pytest

from ris_d2d.bcd_driver import BcdOptions
from ris_d2d.channel_model import default_geometry
from ris_d2d.phase_opt import PhaseOptions
from ris_d2d.sweep import (
    CSV_COLUMNS,
    SweepSpec,
    TrialRow,
    derive_trial_seed,
    load_sweep_spec,
    run_sweep,
    run_trial,
    write_sweep_csv,
)

REPO_ROOT = Path(__file__).resolve().parents[1]
TINY_BCD = BcdOptions(max_outer=3, phase_opts=PhaseOptions(max_inner=2, num_samples=50))


def _spec(**overrides) -> SweepSpec:
    params = {
        "variable": "N",
        "values": (0, 2),
        "trials": 2,
        "base_config": default_geometry(1.0, N=2),
        "master_seed": 7,
        "bcd": TINY_BCD,
    }
    params.update(overrides)
    return SweepSpec(**params)


def _stub_trial(spec: SweepSpec, value: float, trial: int) -> list[TrialRow]:
    return [
        TrialRow(
            variable=spec.variable,
            value=value,
            trial=trial,
            scheme=scheme,
            sum_rate_nats=value + trial / 10 + offset,
            gamma_D=1.0,
            gamma_C=2.0,
            p_D=3.0,
            p_C=4.0,
            iterations=trial + 1,
            status="converged",
        )
        for offset, scheme in enumerate(spec.schemes)
    ]


def _flaky_trial(spec: SweepSpec, value: float, trial: int) -> list[TrialRow]:
    if trial == 1:
        raise RuntimeError("solver exploded")
    return _stub_trial(spec, value, trial)


# ── Seeds ────────────────────────────────────────────────────────────


def test_trial_seeds_are_stable_and_distinct() -> None:
    seed = derive_trial_seed(2024, "N", 8, 0)
    assert seed == derive_trial_seed(2024, "N", 8, 0)
    assert 0 <= seed < 2**64
    seeds = {derive_trial_seed(2024, "N", n, t) for n in (4, 8, 16) for t in range(10)}
    assert len(seeds) == 30
    assert derive_trial_seed(2024, "P_m_dBW", 5, 0) != derive_trial_seed(2024, "P_m_dBW", -5, 0)
    assert derive_trial_seed(2024, "P_m_dBW", 8, 0) != derive_trial_seed(2024, "N", 8, 0)
    assert derive_trial_seed(1, "N", 8, 0) != derive_trial_seed(2, "N", 8, 0)


def test_schemes_do_not_change_channels() -> None:
    full = run_trial(_spec(), 2, 1)
    alone = run_trial(_spec(schemes=("no_ris",)), 2, 1)
    by_scheme = {r.scheme: r for r in full}
    assert [r.scheme for r in full] == ["ris_bcd", "no_ris", "random_phase"]
    assert alone == [by_scheme["no_ris"]]


# ── Sweep orchestration ──────────────────────────────────────────────


def test_run_sweep_row_counts_and_means() -> None:
    spec = _spec(values=(0, 4, 8), trials=3)
    result = run_sweep(spec, run_trial_fn=_stub_trial)
    assert len(result.rows) == 3 * 3 * 3
    assert len(result.mean_rows) == 3 * 3
    assert [(r.value, r.trial) for r in result.rows[:3]] == [(0, 0)] * 3
    first = result.mean_rows[0]
    assert (first.value, first.scheme, first.trial, first.status) == (0, "ris_bcd", "mean", "3/3;common=3")
    assert first.sum_rate_nats == pytest.approx(0.1)
    assert first.iterations == pytest.approx(2.0)
    assert result.failed_rows == 0
    summary = result.summary()
    assert summary["data_rows"] == 27
    assert len(summary["means"]) == 9


def test_failed_trials_become_error_rows() -> None:
    result = run_sweep(_spec(), run_trial_fn=_flaky_trial)
    errors = [r for r in result.rows if r.status.startswith("error:")]
    assert len(errors) == 2 * 3
    assert all(r.status == "error:RuntimeError" and r.sum_rate_nats is None for r in errors)
    assert result.failed_rows == 6
    assert {r.status for r in result.mean_rows} == {"1/2;common=1"}
    assert all(r.sum_rate_nats is not None for r in result.mean_rows)


def test_means_report_trials_common_to_all_schemes() -> None:
    def no_ris_fails_first_trial(spec, value, trial):
        rows = _stub_trial(spec, value, trial)
        if trial == 0:
            rows[1] = TrialRow.failed(spec.variable, value, trial, "no_ris", RuntimeError("boom"))
        return rows

    spec = _spec(values=(0,), trials=3)
    result = run_sweep(spec, run_trial_fn=no_ris_fails_first_trial)
    by_scheme = {r.scheme: r for r in result.mean_rows}
    assert by_scheme["ris_bcd"].status == "3/3;common=2"
    assert by_scheme["no_ris"].status == "2/3;common=2"
    # ris_bcd averages trials 0..2, no_ris only trials 1 and 2.
    assert by_scheme["ris_bcd"].sum_rate_nats == pytest.approx(0.1)
    assert by_scheme["no_ris"].sum_rate_nats == pytest.approx(1.15)


def test_all_failed_cell_has_empty_mean() -> None:
    def always_fails(spec, value, trial):
        raise ValueError("nope")

    result = run_sweep(_spec(values=(0,), trials=1), run_trial_fn=always_fails)
    assert {r.status for r in result.mean_rows} == {"0/1;common=0"}
    assert all(r.sum_rate_nats is None for r in result.mean_rows)


def test_parallel_sweep_matches_sequential() -> None:
    spec = _spec(values=(0, 2, 4), trials=3)
    sequential = run_sweep(spec, jobs=1, run_trial_fn=_stub_trial)
    parallel = run_sweep(spec, jobs=2, run_trial_fn=_stub_trial)
    assert parallel.rows == sequential.rows
    assert parallel.mean_rows == sequential.mean_rows


def test_run_sweep_rejects_bad_jobs() -> None:
    with pytest.raises(ValueError):
        run_sweep(_spec(), jobs=0, run_trial_fn=_stub_trial)


def test_sweep_spec_validation() -> None:
    with pytest.raises(ValueError):
        _spec(values=())
    with pytest.raises(ValueError):
        _spec(trials=0)
    with pytest.raises(ValueError):
        _spec(values=(2.5,))
    power = _spec(variable="P_m_dBW", values=(20.0,))
    assert power.config_for(20.0).p_D_max == pytest.approx(100.0)
    assert _spec().config_for(4).N == 4


# ── CSV output ───────────────────────────────────────────────────────


def test_csv_layout(tmp_path: Path) -> None:
    result = run_sweep(_spec(), run_trial_fn=_flaky_trial)
    path = write_sweep_csv(result, tmp_path / "out" / "sweep.csv")
    data = path.read_bytes()
    assert b"\r\n" not in data
    lines = data.decode("utf-8").splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 1 + len(result.rows) + len(result.mean_rows)
    assert lines[1] == "N,0,0,ris_bcd,0,1,2,3,4,1,converged"
    error_line = next(line for line in lines if "error:" in line)
    assert error_line.endswith(",,,,,,,error:RuntimeError")
    assert lines[-1].startswith("N,2,mean,random_phase,")


def test_power_values_use_general_format(tmp_path: Path) -> None:
    spec = _spec(variable="P_m_dBW", values=(2.5,), trials=1, schemes=("no_ris",))
    path = write_sweep_csv(run_sweep(spec, run_trial_fn=_stub_trial), tmp_path / "p.csv")
    assert path.read_text(encoding="utf-8").splitlines()[1].startswith("P_m_dBW,2.5,0,no_ris,2.5,")


def test_real_sweep_csv_is_byte_deterministic(tmp_path: Path) -> None:
    spec = _spec()
    a = write_sweep_csv(run_sweep(spec), tmp_path / "a.csv")
    b = write_sweep_csv(run_sweep(spec), tmp_path / "b.csv")
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text(encoding="utf-8").splitlines()) == 1 + 2 * 2 * 3 + 2 * 3


# ── Sweep files ──────────────────────────────────────────────────────


def test_load_shipped_sweep_specs() -> None:
    elements = load_sweep_spec(REPO_ROOT / "config" / "sweep_elements.json")
    assert elements.variable == "N"
    assert elements.values == (4, 8, 16, 32)
    assert elements.trials == 200
    power = load_sweep_spec(REPO_ROOT / "config" / "sweep_power.json")
    assert power.variable == "P_m_dBW"
    assert power.base_config.N == 8


def test_load_sweep_spec_uses_sample_flag(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps({"variable": "N", "values": [2], "trials": 1}), encoding="utf-8")
    monkeypatch.setenv("RIS_D2D_FLAG_RANDOMIZATION_SAMPLES_DEFAULT", "50")
    assert load_sweep_spec(path).bcd.phase_opts.num_samples == 50
    path.write_text(json.dumps({"variable": "N", "values": [2], "trials": 1, "sdr_samples": 7}), encoding="utf-8")
    assert load_sweep_spec(path).bcd.phase_opts.num_samples == 7


@pytest.mark.parametrize(
    "payload, fragment",
    [
        ('{\n  "variable": "N",\n  "values": [4,\n}', "line 4"),
        ('{"variable": "N", "values": [4], "trials": 1, "extra": true}', "extra"),
        ('{"variable": "N", "values": [4], "trials": 1, "schemes": ["no_ris", "no_ris"]}', "repeat"),
        ('{"variable": "M", "values": [4], "trials": 1}', "variable"),
    ],
)
def test_load_sweep_spec_errors(tmp_path: Path, payload: str, fragment: str) -> None:
    path = tmp_path / "sweep.json"
    path.write_text(payload, encoding="utf-8")
    with pytest.raises(ValueError) as exc:
        load_sweep_spec(path)
    assert fragment in str(exc.value)
