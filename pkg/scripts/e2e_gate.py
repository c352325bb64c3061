"""Deterministic E2E regression gate with artifact capture."""

from __future__ import annotations

import argparse
import hashlib
import json
import subprocess
import sys
from datetime import UTC, datetime
from pathlib import Path

CLI = [sys.executable, "-m", "ris_d2d.main"]


def run_and_capture(command: list[str], output_path: Path, ok_codes: tuple[int, ...] = (0,)) -> dict | list:
    proc = subprocess.run(command, capture_output=True, text=True, check=False)
    output_path.write_text(proc.stdout, encoding="utf-8")
    if proc.returncode not in ok_codes:
        err_path = output_path.with_suffix(".stderr.log")
        err_path.write_text(proc.stderr, encoding="utf-8")
        raise RuntimeError(
            f"Command failed ({proc.returncode}): {' '.join(command)}; "
            f"stdout={output_path}; stderr={err_path}"
        )
    try:
        return json.loads(proc.stdout)
    except json.JSONDecodeError as exc:
        raise RuntimeError(f"Non-JSON output from {' '.join(command)} at {output_path}") from exc


def ensure(condition: bool, message: str) -> None:
    if not condition:
        raise RuntimeError(message)


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--artifacts-root", default="artifacts/e2e")
    parser.add_argument("--scenario", default="config/scenario.default.json")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)

    ts = datetime.now(UTC).strftime("%Y%m%dT%H%M%SZ")
    out_dir = Path(args.artifacts_root) / ts
    out_dir.mkdir(parents=True, exist_ok=True)

    channels = out_dir / "channels.json"
    twin = out_dir / "channels.twin.json"
    gen = run_and_capture(
        [*CLI, "gen-channels", "--config", args.scenario, "--seed", str(args.seed), "--out", str(channels)],
        out_dir / "01_gen_channels.json",
    )
    run_and_capture(
        [*CLI, "gen-channels", "--config", args.scenario, "--seed", str(args.seed), "--out", str(twin)],
        out_dir / "01_gen_channels.twin.json",
    )
    ensure(gen.get("out") == str(channels), "gen-channels reported the wrong output path")
    ensure(sha256(channels) == sha256(twin), "gen-channels is not byte-reproducible")

    solve = run_and_capture(
        [*CLI, "solve", "--channels", str(channels), "--max-outer", "10", "--sdr-samples", "200"],
        out_dir / "02_solve.json",
        ok_codes=(0, 2),
    )
    ensure(solve.get("status") in {"converged", "max_iters", "infeasible"}, "solve returned an unknown status")
    if solve.get("status") != "infeasible":
        ensure(solve.get("audit", {}).get("status") == "pass", "solve constraint audit failed")

    spec = out_dir / "sweep_spec.json"
    spec.write_text(
        json.dumps(
            {
                "variable": "N",
                "values": [0, 4],
                "trials": 2,
                "master_seed": args.seed,
                "scenario": json.loads(Path(args.scenario).read_text(encoding="utf-8")),
                "max_outer": 5,
                "sdr_samples": 100,
            },
            indent=2,
        ),
        encoding="utf-8",
    )
    db = out_dir / "results.db"
    csv_paths = [out_dir / "03_sweep.csv", out_dir / "03_sweep.twin.csv"]
    sweep = run_and_capture(
        [*CLI, "sweep", "--spec", str(spec), "--out", str(csv_paths[0]), "--db", str(db)],
        out_dir / "03_sweep.json",
    )
    run_and_capture(
        [*CLI, "sweep", "--spec", str(spec), "--out", str(csv_paths[1]), "--jobs", "2"],
        out_dir / "03_sweep.twin.json",
    )
    ensure(sweep.get("failed_rows") == 0, "sweep recorded failed trials")
    ensure(sha256(csv_paths[0]) == sha256(csv_paths[1]), "sweep CSV differs between sequential and parallel runs")

    runs = run_and_capture([*CLI, "show-runs", "--db", str(db)], out_dir / "04_show_runs.json")
    ensure(len(runs) == 1 and runs[0].get("id") == sweep.get("run_id"), "show-runs did not list the persisted sweep")

    summary = {
        "status": "pass",
        "timestamp_utc": ts,
        "artifacts_dir": str(out_dir),
        "checks": {
            "channels_sha256": sha256(channels),
            "solve_status": solve.get("status"),
            "solve_sum_rate_nats": solve.get("sum_rate_nats"),
            "sweep_data_rows": sweep.get("data_rows"),
            "sweep_csv_sha256": sha256(csv_paths[0]),
            "persisted_run_id": sweep.get("run_id"),
        },
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    print(json.dumps(summary, indent=2))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
