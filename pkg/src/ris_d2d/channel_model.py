"""Channel realizations for the RIS-assisted D2D underlay uplink.

Node layout (all coordinates scale with the cell radius ``d0``)::

    BS  (0, 0)            CU  (0, 0.5 d0)
    DT  (0, -0.75 d0 - 0.5 d_D)
    DR  (0, -0.75 d0 + 0.5 d_D)
    RIS configurable, (-0.5 d0, 0.35 d0) by default

Every channel coefficient is an i.i.d. circularly-symmetric complex Gaussian
whose total variance is ``(d / d0) ** -pathloss_exponent`` for the link
distance ``d``.

Reproducibility contract
------------------------
Realizations come from ``numpy.random.Generator(numpy.random.Philox(seed))``.
Channels are drawn in the order g_C, g_D, f_C, f_D, s_C, S_B (row-major),
s_T, s_R; within a channel each coefficient consumes two consecutive standard
normals (real part, then imaginary part).

Channel files
-------------
``save_channel_file`` writes ``{"format", "version", "config", "seed",
"channels": {g_C, g_D, f_C, f_D, s_C, S_B, s_T, s_R}}``.  Every coefficient
is a ``[re, im]`` pair of 17-significant-digit decimal strings and ``S_B`` is
row-major.  ``load_channel_file`` also accepts the channel arrays at the top
level instead of under ``"channels"``, with the pairs as plain JSON numbers.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, ValidationError

from .config import (
    DEFAULT_ANTENNAS,
    DEFAULT_D2D_SEPARATION_D0,
    DEFAULT_RIS_POSITION_D0,
    DEFAULT_THRESHOLD_DB,
    Point,
    SystemConfig,
    db_to_linear,
    format_validation_error,
)
from .linalg_core import CMatrix, CVector

_log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
CHANNEL_FILE_FORMAT = "ris-d2d/channels"
CHANNEL_FILE_VERSION = 1
CHANNEL_NAMES = ("g_C", "g_D", "f_C", "f_D", "s_C", "S_B", "s_T", "s_R")


class GeometryError(ValueError):
    """Raised for zero-length links or otherwise unusable node layouts."""


class DimensionMismatchError(ValueError):
    """Raised when channel/phase dimensions disagree."""


class ChannelFileError(ValueError):
    """Raised when a channel file cannot be parsed or validated."""


# ── Geometry ─────────────────────────────────────────────────────────


def default_geometry(
    d0: float,
    ris_position: Point | None = None,
    *,
    M: int = DEFAULT_ANTENNAS,
    N: int = 8,
    p_max: float = 10.0,
) -> SystemConfig:
    """Build the reference layout with d_D = 0.2 d0, unit noise and 3 dB thresholds."""
    if d0 <= 0:
        raise GeometryError(f"cell radius d0 must be positive, got {d0}")
    d_D = DEFAULT_D2D_SEPARATION_D0 * d0
    if ris_position is None:
        ris_position = (DEFAULT_RIS_POSITION_D0[0] * d0, DEFAULT_RIS_POSITION_D0[1] * d0)
    threshold = db_to_linear(DEFAULT_THRESHOLD_DB)
    return SystemConfig(
        M=M,
        N=N,
        d0=d0,
        d_D=d_D,
        bs_position=(0.0, 0.0),
        cu_position=(0.0, 0.5 * d0),
        dt_position=(0.0, -0.75 * d0 - 0.5 * d_D),
        dr_position=(0.0, -0.75 * d0 + 0.5 * d_D),
        ris_position=(float(ris_position[0]), float(ris_position[1])),
        p_D_max=p_max,
        p_C_max=p_max,
        gamma_D_min=threshold,
        gamma_C_min=threshold,
        sigma2_B=1.0,
        sigma2_D=1.0,
    )


def _distance(a: Point, b: Point) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def link_distances(config: SystemConfig) -> dict[str, float]:
    """Distances of every modelled link, keyed by the channel they feed."""
    return {
        "g_C": _distance(config.cu_position, config.bs_position),
        "g_D": _distance(config.dt_position, config.dr_position),
        "f_C": _distance(config.cu_position, config.dr_position),
        "f_D": _distance(config.dt_position, config.bs_position),
        "s_C": _distance(config.cu_position, config.ris_position),
        "S_B": _distance(config.ris_position, config.bs_position),
        "s_T": _distance(config.dt_position, config.ris_position),
        "s_R": _distance(config.ris_position, config.dr_position),
    }


def link_variance(distance: float, d0: float, exponent: float) -> float:
    if distance <= 0 or not math.isfinite(distance):
        raise GeometryError(f"link endpoints coincide (distance={distance})")
    return float((distance / d0) ** (-exponent))


def complex_gaussian(rng: np.random.Generator, shape: tuple[int, ...], variance: float) -> npt.NDArray[np.complex128]:
    """Draw CN(0, variance) samples; each coefficient uses (re, im) consecutively."""
    pairs = rng.standard_normal((*shape, 2))
    scale = math.sqrt(variance / 2.0)
    return scale * (pairs[..., 0] + 1j * pairs[..., 1])


# ── Domain types ─────────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class PhaseVector:
    """RIS phase shifts ``theta`` in [0, 2π); coefficients are ``exp(j theta)``."""

    theta: npt.NDArray[np.float64]

    def __post_init__(self) -> None:
        theta = np.asarray(self.theta, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(theta)):
            raise ValueError("phase angles must be finite")
        wrapped = np.mod(theta, TWO_PI)
        wrapped[wrapped >= TWO_PI] = 0.0
        object.__setattr__(self, "theta", wrapped)

    @property
    def N(self) -> int:
        return int(self.theta.shape[0])

    @property
    def coefficients(self) -> CVector:
        return np.exp(1j * self.theta)

    @classmethod
    def zeros(cls, n: int) -> "PhaseVector":
        return cls(np.zeros(n))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "PhaseVector":
        return cls(rng.uniform(0.0, TWO_PI, size=n))

    @classmethod
    def from_coefficients(cls, coefficients: npt.ArrayLike) -> "PhaseVector":
        return cls(np.angle(np.asarray(coefficients, dtype=np.complex128)))

    def to_list(self) -> list[float]:
        return [float(t) for t in self.theta]


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """One realization of all eight channels; RIS arrays may be empty (N = 0)."""

    g_C: CVector
    g_D: complex
    f_C: complex
    f_D: CVector
    s_C: CVector
    S_B: CMatrix
    s_T: CVector
    s_R: CVector
    seed: int | None = None

    def __post_init__(self) -> None:
        for name in ("g_C", "f_D", "s_C", "s_T", "s_R"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.complex128).reshape(-1))
        object.__setattr__(self, "g_D", complex(self.g_D))
        object.__setattr__(self, "f_C", complex(self.f_C))
        S_B = np.asarray(self.S_B, dtype=np.complex128)
        if S_B.ndim != 2:
            S_B = S_B.reshape(self.g_C.shape[0], -1)
        object.__setattr__(self, "S_B", S_B)

        M, N = self.M, self.N
        if self.f_D.shape != (M,):
            raise DimensionMismatchError(f"f_D has shape {self.f_D.shape}, expected ({M},)")
        if S_B.shape != (M, N):
            raise DimensionMismatchError(f"S_B has shape {S_B.shape}, expected ({M}, {N})")
        for name in ("s_T", "s_R"):
            if getattr(self, name).shape != (N,):
                raise DimensionMismatchError(f"{name} has shape {getattr(self, name).shape}, expected ({N},)")
        for name in CHANNEL_NAMES:
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"channel {name} contains non-finite entries")

    @property
    def M(self) -> int:
        return int(self.g_C.shape[0])

    @property
    def N(self) -> int:
        return int(self.s_C.shape[0])

    def without_ris(self) -> "ChannelSet":
        """Direct links only (N = 0)."""
        empty = np.zeros(0, dtype=np.complex128)
        return ChannelSet(
            g_C=self.g_C,
            g_D=self.g_D,
            f_C=self.f_C,
            f_D=self.f_D,
            s_C=empty,
            S_B=np.zeros((self.M, 0), dtype=np.complex128),
            s_T=empty,
            s_R=empty,
            seed=self.seed,
        )


@dataclass(frozen=True, eq=False)
class EffectiveChannels:
    """Composite channels for one phase configuration.

    ``h_D``/``h_C`` are the scalar DT→DR and CU→DR channels, ``hC_vec``/
    ``hD_vec`` the CU→BS and DT→BS channels seen by the M receive antennas.
    """

    h_D: complex
    h_C: complex
    hC_vec: CVector
    hD_vec: CVector


# ── Generation and composition ───────────────────────────────────────


def generate_channels(config: SystemConfig, seed: int) -> ChannelSet:
    """Draw one channel realization for ``config``; deterministic given ``seed``."""
    distances = link_distances(config)
    variances = {
        name: link_variance(dist, config.d0, config.pathloss_exponent) for name, dist in distances.items()
    }
    rng = np.random.Generator(np.random.Philox(seed))
    M, N = config.M, config.N

    g_C = complex_gaussian(rng, (M,), variances["g_C"])
    g_D = complex(complex_gaussian(rng, (), variances["g_D"]))
    f_C = complex(complex_gaussian(rng, (), variances["f_C"]))
    f_D = complex_gaussian(rng, (M,), variances["f_D"])
    s_C = complex_gaussian(rng, (N,), variances["s_C"])
    S_B = complex_gaussian(rng, (M, N), variances["S_B"])
    s_T = complex_gaussian(rng, (N,), variances["s_T"])
    s_R = complex_gaussian(rng, (N,), variances["s_R"])
    _log.debug("Generated channels seed=%d M=%d N=%d", seed, M, N)
    return ChannelSet(g_C=g_C, g_D=g_D, f_C=f_C, f_D=f_D, s_C=s_C, S_B=S_B, s_T=s_T, s_R=s_R, seed=seed)


def effective_channels(ch: ChannelSet, phi: PhaseVector) -> EffectiveChannels:
    """Compose direct and reflected paths for the reflection coefficients of ``phi``."""
    if phi.N != ch.N:
        raise DimensionMismatchError(f"phase vector has {phi.N} elements, channels have N={ch.N}")
    c = phi.coefficients
    return EffectiveChannels(
        h_D=complex(ch.g_D + np.vdot(ch.s_R, c * ch.s_T)),
        h_C=complex(ch.f_C + np.vdot(ch.s_R, c * ch.s_C)),
        hC_vec=ch.g_C + ch.S_B @ (c * ch.s_C),
        hD_vec=ch.f_D + ch.S_B @ (c * ch.s_T),
    )


# ── Channel file I/O ─────────────────────────────────────────────────

# Written as 17-digit decimal strings; plain JSON numbers are accepted on load.
ComplexPart = str | float
ComplexPair = tuple[ComplexPart, ComplexPart]


class _ChannelPayload(BaseModel):
    model_config = ConfigDict(extra="forbid")

    g_C: list[ComplexPair]
    g_D: ComplexPair
    f_C: ComplexPair
    f_D: list[ComplexPair]
    s_C: list[ComplexPair]
    S_B: list[list[ComplexPair]]
    s_T: list[ComplexPair]
    s_R: list[ComplexPair]


class ChannelFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format: Literal["ris-d2d/channels"] = CHANNEL_FILE_FORMAT
    version: int = CHANNEL_FILE_VERSION
    config: SystemConfig
    seed: int | None = None
    channels: _ChannelPayload


def _encode_real(x: float) -> str:
    return format(float(x), ".17g")


def _encode_complex(z: complex) -> ComplexPair:
    return (_encode_real(z.real), _encode_real(z.imag))


def _decode_complex(pair: ComplexPair) -> complex:
    return complex(float(pair[0]), float(pair[1]))


def channel_file_payload(config: SystemConfig, ch: ChannelSet) -> dict:
    if (ch.M, ch.N) != (config.M, config.N):
        raise DimensionMismatchError(f"channels are {ch.M}x{ch.N}, config is {config.M}x{config.N}")
    return {
        "format": CHANNEL_FILE_FORMAT,
        "version": CHANNEL_FILE_VERSION,
        "config": config.model_dump(mode="json"),
        "seed": ch.seed,
        "channels": {
            "g_C": [_encode_complex(z) for z in ch.g_C],
            "g_D": _encode_complex(ch.g_D),
            "f_C": _encode_complex(ch.f_C),
            "f_D": [_encode_complex(z) for z in ch.f_D],
            "s_C": [_encode_complex(z) for z in ch.s_C],
            "S_B": [[_encode_complex(z) for z in row] for row in ch.S_B],
            "s_T": [_encode_complex(z) for z in ch.s_T],
            "s_R": [_encode_complex(z) for z in ch.s_R],
        },
    }


def save_channel_file(path: Path, config: SystemConfig, ch: ChannelSet) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(channel_file_payload(config, ch), indent=2)
    path.write_text(text + "\n", encoding="utf-8", newline="\n")
    return path


_CHANNEL_KEYS = ("g_C", "g_D", "f_C", "f_D", "s_C", "S_B", "s_T", "s_R")


def _nest_flat_layout(payload: dict) -> dict:
    """Move top-level channel arrays under ``channels``."""
    if not isinstance(payload, dict) or "channels" in payload or not any(k in payload for k in _CHANNEL_KEYS):
        return payload
    nested = {k: v for k, v in payload.items() if k not in _CHANNEL_KEYS}
    nested["channels"] = {k: payload[k] for k in _CHANNEL_KEYS if k in payload}
    return nested


def parse_channel_payload(payload: dict) -> tuple[SystemConfig, ChannelSet]:
    try:
        doc = ChannelFile.model_validate(_nest_flat_layout(payload))
    except ValidationError as exc:
        raise ChannelFileError(format_validation_error(exc)) from exc
    raw = doc.channels
    M, N = doc.config.M, doc.config.N
    try:
        S_B = np.array(
            [[_decode_complex(p) for p in row] for row in raw.S_B], dtype=np.complex128
        ).reshape(M, N)
        ch = ChannelSet(
            g_C=np.array([_decode_complex(p) for p in raw.g_C], dtype=np.complex128),
            g_D=_decode_complex(raw.g_D),
            f_C=_decode_complex(raw.f_C),
            f_D=np.array([_decode_complex(p) for p in raw.f_D], dtype=np.complex128),
            s_C=np.array([_decode_complex(p) for p in raw.s_C], dtype=np.complex128),
            S_B=S_B,
            s_T=np.array([_decode_complex(p) for p in raw.s_T], dtype=np.complex128),
            s_R=np.array([_decode_complex(p) for p in raw.s_R], dtype=np.complex128),
            seed=doc.seed,
        )
    except ValueError as exc:
        raise ChannelFileError(str(exc)) from exc
    if (ch.M, ch.N) != (M, N):
        raise ChannelFileError(f"channel arrays are {ch.M}x{ch.N} but config declares {M}x{N}")
    return doc.config, ch


def load_channel_file(path: Path) -> tuple[SystemConfig, ChannelSet]:
    text = Path(path).read_text(encoding="utf-8")
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ChannelFileError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        return parse_channel_payload(payload)
    except ChannelFileError as exc:
        raise ChannelFileError(f"{path}: {exc}") from exc
