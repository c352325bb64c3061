"""Monte-Carlo sweeps over the RIS size or the maximum transmit power.

Every (value, trial) pair gets a fresh channel realization whose seed depends
only on ``(master_seed, variable, value, trial)``, so adding or removing a
scheme never changes the channels the other schemes see.  Trials may run in
a process pool; rows are always merged in (value, trial, scheme) order.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .bcd_driver import BcdOptions, BcdStatus, SolutionReport, run_bcd, solve_baseline_no_ris, solve_baseline_random_phase
from .channel_model import generate_channels
from .config import ScenarioFile, SystemConfig, dbw_to_watts, format_validation_error
from .feature_flags import get_feature_flag
from .phase_opt import PhaseOptions

_log = logging.getLogger(__name__)

SweepVariable = Literal["N", "P_m_dBW"]
Scheme = Literal["ris_bcd", "no_ris", "random_phase"]
ALL_SCHEMES: tuple[Scheme, ...] = ("ris_bcd", "no_ris", "random_phase")
CSV_COLUMNS = (
    "variable",
    "value",
    "trial",
    "scheme",
    "sum_rate_nats",
    "gamma_D",
    "gamma_C",
    "p_D",
    "p_C",
    "iterations",
    "status",
)
_VARIABLE_CODES = {"N": 1, "P_m_dBW": 2}
_SUCCESS = {BcdStatus.CONVERGED.value, BcdStatus.MAX_ITERS.value}


# ── Sweep definition ─────────────────────────────────────────────────


@dataclass(frozen=True)
class SweepSpec:
    variable: SweepVariable
    values: tuple[float, ...]
    trials: int
    base_config: SystemConfig
    schemes: tuple[Scheme, ...] = ALL_SCHEMES
    master_seed: int = 0
    bcd: BcdOptions = field(default_factory=BcdOptions)

    def __post_init__(self) -> None:
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if self.trials < 1:
            raise ValueError(f"trials must be at least 1, got {self.trials}")
        if not self.schemes:
            raise ValueError("sweep needs at least one scheme")
        if self.variable == "N":
            for v in self.values:
                if v < 0 or float(v) != int(v):
                    raise ValueError(f"element counts must be non-negative integers, got {v}")

    def config_for(self, value: float) -> SystemConfig:
        if self.variable == "N":
            return self.base_config.with_elements(int(value))
        return self.base_config.with_max_power(dbw_to_watts(value))

    def to_dict(self) -> dict:
        return {
            "variable": self.variable,
            "values": list(self.values),
            "trials": self.trials,
            "schemes": list(self.schemes),
            "master_seed": self.master_seed,
            "base_config": self.base_config.model_dump(mode="json"),
            "bcd": self.bcd.model_dump(mode="json"),
        }


class SweepSpecFile(BaseModel):
    """JSON sweep file; ``scenario`` holds the fixed parameters."""

    model_config = ConfigDict(extra="forbid")

    variable: SweepVariable
    values: list[float] = Field(min_length=1)
    trials: int = Field(ge=1)
    schemes: list[Scheme] = Field(default_factory=lambda: list(ALL_SCHEMES), min_length=1)
    master_seed: int = Field(default=0, ge=0)
    scenario: ScenarioFile = Field(default_factory=ScenarioFile)
    max_outer: int = Field(default=30, ge=1)
    tol_rate: float = Field(default=1e-4, gt=0)
    sdr_samples: int | None = Field(default=None, ge=1)

    @field_validator("schemes")
    @classmethod
    def _unique_schemes(cls, value: list[str]) -> list[str]:
        if len(set(value)) != len(value):
            raise ValueError("schemes must not repeat")
        return value

    def to_spec(self) -> SweepSpec:
        return SweepSpec(
            variable=self.variable,
            values=tuple(self.values),
            trials=self.trials,
            base_config=self.scenario.to_system_config(),
            schemes=tuple(self.schemes),
            master_seed=self.master_seed,
            bcd=BcdOptions(
                max_outer=self.max_outer,
                tol_rate=self.tol_rate,
                phase_opts=PhaseOptions(num_samples=self.sdr_samples or default_sdr_samples()),
            ),
        )


def default_sdr_samples() -> int:
    return int(get_feature_flag("randomization_samples_default", 1000))


def load_sweep_spec(path: Path) -> SweepSpec:
    text = Path(path).read_text(encoding="utf-8")
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        doc = SweepSpecFile.model_validate(payload)
    except ValidationError as exc:
        raise ValueError(f"{path}: {format_validation_error(exc)}") from exc
    return doc.to_spec()


def _value_key(variable: str, value: float) -> int:
    key = int(value) if variable == "N" else int(round(value * 1000))
    # Zigzag so negative dBW values map to distinct non-negative entropy words.
    return 2 * key if key >= 0 else -2 * key - 1


def derive_trial_seed(master_seed: int, variable: str, value: float, trial: int) -> int:
    """64-bit channel seed for one (value, trial) cell of the sweep."""
    entropy = [master_seed, _VARIABLE_CODES[variable], _value_key(variable, value), trial]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0])


# ── Rows ─────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class TrialRow:
    variable: str
    value: float
    trial: int | str
    scheme: str
    sum_rate_nats: float | None
    gamma_D: float | None
    gamma_C: float | None
    p_D: float | None
    p_C: float | None
    iterations: float | None
    status: str

    @classmethod
    def from_report(cls, variable: str, value: float, trial: int, report: SolutionReport) -> "TrialRow":
        return cls(
            variable=variable,
            value=value,
            trial=trial,
            scheme=report.scheme,
            sum_rate_nats=report.sum_rate,
            gamma_D=report.gamma_D,
            gamma_C=report.gamma_C,
            p_D=report.p_D,
            p_C=report.p_C,
            iterations=report.iterations,
            status=report.status.value,
        )

    @classmethod
    def failed(cls, variable: str, value: float, trial: int, scheme: str, exc: BaseException) -> "TrialRow":
        return cls(variable, value, trial, scheme, None, None, None, None, None, None, f"error:{type(exc).__name__}")

    @property
    def succeeded(self) -> bool:
        return self.status in _SUCCESS

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in CSV_COLUMNS}


def _fmt_number(value: float | None) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return format(float(value), ".12g")


def _fmt_value(variable: str, value: float) -> str:
    return str(int(value)) if variable == "N" else _fmt_number(value)


def _csv_fields(row: TrialRow) -> list[str]:
    return [
        row.variable,
        _fmt_value(row.variable, row.value),
        str(row.trial),
        row.scheme,
        _fmt_number(row.sum_rate_nats),
        _fmt_number(row.gamma_D),
        _fmt_number(row.gamma_C),
        _fmt_number(row.p_D),
        _fmt_number(row.p_C),
        _fmt_number(row.iterations),
        row.status,
    ]


# ── Trial execution ──────────────────────────────────────────────────


def run_trial(spec: SweepSpec, value: float, trial: int) -> list[TrialRow]:
    """Solve every scheme of ``spec`` on one channel realization."""
    config = spec.config_for(value)
    seed = derive_trial_seed(spec.master_seed, spec.variable, value, trial)
    rows: list[TrialRow] = []
    try:
        ch = generate_channels(config, seed)
    except Exception as exc:
        _log.error("Trial %s=%s #%d: channel generation failed: %s", spec.variable, value, trial, exc)
        return [TrialRow.failed(spec.variable, value, trial, scheme, exc) for scheme in spec.schemes]

    for scheme in spec.schemes:
        try:
            if scheme == "ris_bcd":
                report = run_bcd(config, ch, spec.bcd)
            elif scheme == "no_ris":
                report = solve_baseline_no_ris(config, ch, spec.bcd)
            else:
                report = solve_baseline_random_phase(config, ch, (seed + 1) % 2**64, spec.bcd)
            rows.append(TrialRow.from_report(spec.variable, value, trial, report))
        except Exception as exc:
            _log.error("Trial %s=%s #%d scheme %s failed: %s", spec.variable, value, trial, scheme, exc)
            rows.append(TrialRow.failed(spec.variable, value, trial, scheme, exc))
    return rows


RunTrialFn = Callable[[SweepSpec, float, int], Sequence[TrialRow]]


def _call_trial(args: tuple[RunTrialFn, SweepSpec, float, int]) -> list[TrialRow]:
    fn, spec, value, trial = args
    try:
        return list(fn(spec, value, trial))
    except Exception as exc:
        _log.error("Trial %s=%s #%d failed: %s", spec.variable, value, trial, exc)
        return [TrialRow.failed(spec.variable, value, trial, scheme, exc) for scheme in spec.schemes]


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list[TrialRow]
    mean_rows: list[TrialRow]
    started_at: str
    finished_at: str

    @property
    def failed_rows(self) -> int:
        return sum(1 for r in self.rows if r.status.startswith("error:"))

    def summary(self) -> dict:
        return {
            "variable": self.spec.variable,
            "values": list(self.spec.values),
            "trials": self.spec.trials,
            "schemes": list(self.spec.schemes),
            "master_seed": self.spec.master_seed,
            "data_rows": len(self.rows),
            "failed_rows": self.failed_rows,
            "means": [
                {"value": r.value, "scheme": r.scheme, "sum_rate_nats": r.sum_rate_nats, "status": r.status}
                for r in self.mean_rows
            ],
        }


def mean_rows(spec: SweepSpec, rows: Sequence[TrialRow]) -> list[TrialRow]:
    """Per-(value, scheme) arithmetic means over successful trials.

    Each scheme is averaged over its own successful trials, so two schemes'
    means can come from different realizations.  The status reads
    ``k/trials;common=c`` where ``c`` counts the trials every scheme solved.
    """
    out: list[TrialRow] = []
    numeric = ("sum_rate_nats", "gamma_D", "gamma_C", "p_D", "p_C", "iterations")
    for value in spec.values:
        solved: dict[str, set[int | str]] = {
            scheme: {r.trial for r in rows if r.value == value and r.scheme == scheme and r.succeeded}
            for scheme in spec.schemes
        }
        common = len(set.intersection(*solved.values())) if solved else 0
        for scheme in spec.schemes:
            ok = [r for r in rows if r.value == value and r.scheme == scheme and r.succeeded]
            means = {name: (float(np.mean([getattr(r, name) for r in ok])) if ok else None) for name in numeric}
            out.append(
                TrialRow(
                    variable=spec.variable,
                    value=value,
                    trial="mean",
                    scheme=scheme,
                    status=f"{len(ok)}/{spec.trials};common={common}",
                    **means,
                )
            )
    return out


def run_sweep(spec: SweepSpec, jobs: int = 1, run_trial_fn: RunTrialFn | None = None) -> SweepResult:
    """Run every (value, trial) cell; ``jobs > 1`` uses a process pool."""
    if jobs < 1:
        raise ValueError(f"jobs must be at least 1, got {jobs}")
    fn = run_trial_fn or run_trial
    started = datetime.now(timezone.utc).isoformat()
    tasks = [(fn, spec, value, trial) for value in spec.values for trial in range(spec.trials)]
    _log.info("Sweep over %s: %d cells, jobs=%d", spec.variable, len(tasks), jobs)

    rows: list[TrialRow] = []
    if jobs == 1:
        for done, task in enumerate(tasks, start=1):
            rows.extend(_call_trial(task))
            _log.info("Sweep progress %d/%d", done, len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            for done, result in enumerate(executor.map(_call_trial, tasks), start=1):
                rows.extend(result)
                _log.info("Sweep progress %d/%d", done, len(tasks))

    return SweepResult(
        spec=spec,
        rows=rows,
        mean_rows=mean_rows(spec, rows),
        started_at=started,
        finished_at=datetime.now(timezone.utc).isoformat(),
    )


def write_sweep_csv(result: SweepResult, path: Path) -> Path:
    """Write data rows then mean rows; byte-deterministic for a given spec."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in [*result.rows, *result.mean_rows]:
            writer.writerow(_csv_fields(row))
    return path
