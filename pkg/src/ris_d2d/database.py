"""SQLite persistence layer for sweep runs using SQLModel."""

from __future__ import annotations

import json
import os
from pathlib import Path

from sqlmodel import Field, Session, SQLModel, create_engine, select

from .sweep import SweepResult


class SweepRun(SQLModel, table=True):
    id: int | None = Field(default=None, primary_key=True)
    started_at: str = Field(index=True)
    finished_at: str
    variable: str
    master_seed: int
    trials: int
    data_row_count: int
    failed_row_count: int = 0
    csv_path: str = ""
    spec_json: str = "{}"


class TrialRecord(SQLModel, table=True):
    id: int | None = Field(default=None, primary_key=True)
    run_id: int = Field(index=True)
    value: float
    trial: int
    scheme: str = Field(index=True)
    status: str
    sum_rate_nats: float | None = None
    gamma_D: float | None = None
    gamma_C: float | None = None
    p_D: float | None = None
    p_C: float | None = None
    iterations: int | None = None


def get_data_root() -> Path:
    """Return the results directory, respecting the RIS_D2D_DATA_ROOT env var."""
    env = os.environ.get("RIS_D2D_DATA_ROOT")
    if env:
        return Path(env)
    return Path.home() / ".ris-d2d"


def default_db_path() -> Path:
    return get_data_root() / "results.db"


def build_engine(path: Path | None = None):
    db_path = path or default_db_path()
    db_path.parent.mkdir(parents=True, exist_ok=True)
    return create_engine(f"sqlite:///{db_path}")


def init_db(path: Path | None = None) -> None:
    engine = build_engine(path)
    SQLModel.metadata.create_all(engine)


def persist_sweep(result: SweepResult, csv_path: Path | None = None, path: Path | None = None) -> int:
    """Store one sweep invocation and its data rows; returns the run id."""
    engine = build_engine(path)
    SQLModel.metadata.create_all(engine)

    run = SweepRun(
        started_at=result.started_at,
        finished_at=result.finished_at,
        variable=result.spec.variable,
        master_seed=result.spec.master_seed,
        trials=result.spec.trials,
        data_row_count=len(result.rows),
        failed_row_count=result.failed_rows,
        csv_path=str(csv_path) if csv_path else "",
        spec_json=json.dumps(result.spec.to_dict(), sort_keys=True),
    )

    with Session(engine) as session:
        session.add(run)
        session.commit()
        session.refresh(run)
        run_id = int(run.id or 0)

        for row in result.rows:
            session.add(
                TrialRecord(
                    run_id=run_id,
                    value=float(row.value),
                    trial=int(row.trial),
                    scheme=row.scheme,
                    status=row.status,
                    sum_rate_nats=row.sum_rate_nats,
                    gamma_D=row.gamma_D,
                    gamma_C=row.gamma_C,
                    p_D=row.p_D,
                    p_C=row.p_C,
                    iterations=None if row.iterations is None else int(row.iterations),
                )
            )
        session.commit()
    return run_id


def get_recent_runs(limit: int = 10, path: Path | None = None) -> list[SweepRun]:
    engine = build_engine(path)
    SQLModel.metadata.create_all(engine)
    with Session(engine) as session:
        statement = select(SweepRun).order_by(SweepRun.id.desc()).limit(limit)
        return list(session.exec(statement))


def get_trial_records(
    run_id: int,
    *,
    scheme: str | None = None,
    path: Path | None = None,
) -> list[dict]:
    """Data rows of one run in insertion order, as plain dicts.

    Optionally filter by *scheme* (``"ris_bcd"`` | ``"no_ris"`` | ``"random_phase"``).
    """
    engine = build_engine(path)
    SQLModel.metadata.create_all(engine)
    with Session(engine) as session:
        stmt = select(TrialRecord).where(TrialRecord.run_id == run_id)
        if scheme is not None:
            stmt = stmt.where(TrialRecord.scheme == scheme)
        stmt = stmt.order_by(TrialRecord.id)
        rows = session.exec(stmt).all()
    return [r.model_dump() for r in rows]
