"""System and scenario configuration schemas using pydantic.

``SystemConfig`` is the library-side description of one deployment and is
linear-scale throughout.  ``ScenarioFile`` is the on-disk JSON schema with
explicit units in the field names; it is the only place where dB values are
converted.
"""

from __future__ import annotations

import json
import math
from itertools import combinations
from pathlib import Path
from typing import Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

Point = Tuple[float, float]

DEFAULT_RIS_POSITION_D0: Point = (-0.5, 0.35)
DEFAULT_D2D_SEPARATION_D0 = 0.2
DEFAULT_THRESHOLD_DB = 3.0
DEFAULT_ANTENNAS = 4


def db_to_linear(value_db: float) -> float:
    return float(10.0 ** (value_db / 10.0))


def dbw_to_watts(value_dbw: float) -> float:
    return db_to_linear(value_dbw)


class SystemConfig(BaseModel):
    """Geometry, array sizes, power budgets, SINR thresholds and noise powers.

    ``gamma_D_min``/``gamma_C_min`` are the minimum SINR requirements
    (linear); ``sigma2_B``/``sigma2_D`` are the noise powers at the BS and
    the D2D receiver in watts.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    M: int = Field(ge=1)
    N: int = Field(ge=0)
    d0: float = Field(gt=0)
    d_D: float = Field(gt=0)
    bs_position: Point
    cu_position: Point
    dt_position: Point
    dr_position: Point
    ris_position: Point
    p_D_max: float = Field(gt=0)
    p_C_max: float = Field(gt=0)
    gamma_D_min: float = Field(gt=0)
    gamma_C_min: float = Field(gt=0)
    sigma2_B: float = Field(gt=0)
    sigma2_D: float = Field(gt=0)
    pathloss_exponent: float = Field(default=4.0, gt=0)

    @model_validator(mode="after")
    def validate_geometry(self) -> "SystemConfig":
        named = {
            "bs": self.bs_position,
            "cu": self.cu_position,
            "dt": self.dt_position,
            "dr": self.dr_position,
            "ris": self.ris_position,
        }
        for name, point in named.items():
            if not all(math.isfinite(c) for c in point):
                raise ValueError(f"{name} position must be finite")
        for (name_a, a), (name_b, b) in combinations(named.items(), 2):
            if a == b:
                raise ValueError(f"{name_a} and {name_b} positions coincide at {a}")
        return self

    def with_elements(self, n: int) -> "SystemConfig":
        return self.model_copy(update={"N": n})

    def with_max_power(self, watts: float) -> "SystemConfig":
        return self.model_copy(update={"p_D_max": watts, "p_C_max": watts})


class ScenarioFile(BaseModel):
    """JSON scenario file with unit-suffixed fields.

    Positions are in meters.  When ``ris_position_m`` is omitted the RIS is
    placed at ``(-0.5 d0, 0.35 d0)``.
    """

    model_config = ConfigDict(extra="forbid")

    antennas: int = Field(default=DEFAULT_ANTENNAS, ge=1)
    ris_elements: int = Field(default=8, ge=0)
    d0_m: float = Field(default=100.0, gt=0)
    ris_position_m: Point | None = None
    p_max_dbw: float = 10.0
    p_d_max_dbw: float | None = None
    p_c_max_dbw: float | None = None
    gamma_min_db: float = DEFAULT_THRESHOLD_DB
    gamma_d_min_db: float | None = None
    gamma_c_min_db: float | None = None
    noise_power_w: float = Field(default=1.0, gt=0)
    pathloss_exponent: float = Field(default=4.0, gt=0)

    def to_system_config(self) -> SystemConfig:
        # Local import keeps config importable without numpy-heavy modules.
        from .channel_model import default_geometry

        pd_dbw = self.p_max_dbw if self.p_d_max_dbw is None else self.p_d_max_dbw
        pc_dbw = self.p_max_dbw if self.p_c_max_dbw is None else self.p_c_max_dbw
        gd_db = self.gamma_min_db if self.gamma_d_min_db is None else self.gamma_d_min_db
        gc_db = self.gamma_min_db if self.gamma_c_min_db is None else self.gamma_c_min_db
        base = default_geometry(self.d0_m, self.ris_position_m, M=self.antennas, N=self.ris_elements)
        return base.model_copy(
            update={
                "p_D_max": dbw_to_watts(pd_dbw),
                "p_C_max": dbw_to_watts(pc_dbw),
                "gamma_D_min": db_to_linear(gd_db),
                "gamma_C_min": db_to_linear(gc_db),
                "sigma2_B": self.noise_power_w,
                "sigma2_D": self.noise_power_w,
                "pathloss_exponent": self.pathloss_exponent,
            }
        )


def format_validation_error(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err.get("loc", ())) or "<root>"
        parts.append(f"{loc}: {err.get('msg', 'invalid value')}")
    return "; ".join(parts)


def load_scenario_file(path: Path) -> ScenarioFile:
    """Parse and validate a scenario file.

    Raises ``ValueError`` with the JSON line/column or the offending field
    names on failure.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        return ScenarioFile.model_validate(payload)
    except ValidationError as exc:
        raise ValueError(f"{path}: {format_validation_error(exc)}") from exc
