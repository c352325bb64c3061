"""Closed-form uplink power allocation on the border of the feasible region.

With the receive beamformer optimal for every ``p_D``, the two SINR
requirements carve the feasible set in the (p_D, p_C) plane out of the power
box by a straight line (D2D requirement) and a concave increasing curve (CU
requirement)::

    p_C <= (p_D - α σ_D²) / (α k0)                 # line
    p_C >= β (p_D + k2) / (k̄1 p_D + k2)            # curve

Scaling any interior point by ε > 1 strictly increases the objective and keeps
it feasible, so the optimum sits on the vertical border ``p_D = p_D_max`` or
the horizontal border ``p_C = p_C_max``.  Along either border the objective
first decreases and then increases (its derivative has the sign of a convex
quadratic that is increasing from zero), so only segment ends matter.  Along
the horizontal border it is increasing outright whenever
``ν2 k2 >= k1 (k0 p_C_max + σ_D²)``.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

from .channel_model import EffectiveChannels
from .receive_beamforming import correlation_coefficient

_log = logging.getLogger(__name__)

MIN_POWER_FRACTION = 1e-12
SLACK_TOL = 1e-9


class DegenerateCoefficientError(ValueError):
    """Raised when a border intersection is undefined (α = 0 or k0 = 0)."""


class PowerCase(str, enum.Enum):
    LINE_ON_VERTICAL = "line_on_vertical"
    BOX_CORNER = "box_corner"
    HORIZONTAL_BORDER = "horizontal_border"
    INFEASIBLE = "infeasible"


class PowerPoint(str, enum.Enum):
    """Which border point won inside a case."""

    LINE_TOP = "line_top"  # (p_D_max, I_Ly)
    CORNER = "corner"  # (p_D_max, p_C_max)
    CURVE_BOTTOM = "curve_bottom"  # (p_D_max, I_Cy)
    LINE_END = "line_end"  # D2D line meets p_C_max
    CURVE_END = "curve_end"  # CU curve meets p_C_max
    NONE = "none"


@dataclass(frozen=True)
class PowerCoefficients:
    """Coefficients of the reformulated SINR constraints and objective.

    ``alpha = γ_D_min/|h_D|²``, ``beta = σ_B² γ_C_min/||h_C||²``,
    ``k0 = |h_C|²``, ``k1 = ρ²``, ``k2 = σ_B²/||h_D||²``,
    ``nu1 = ||h_C||²/σ_B²``, ``nu2 = |h_D|²``.  ``alpha`` and ``k2`` are
    ``inf`` when the corresponding channel vanishes.
    """

    alpha: float
    beta: float
    k0: float
    k1: float
    k2: float
    nu1: float
    nu2: float

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "k0", "k1", "k2", "nu1", "nu2"):
            value = getattr(self, name)
            if math.isnan(value) or value < 0:
                raise ValueError(f"coefficient {name} must be non-negative, got {value}")
        if self.k1 > 1.0 + 1e-12:
            raise ValueError(f"k1 = ρ² must not exceed 1, got {self.k1}")

    @property
    def k1_bar(self) -> float:
        return max(0.0, 1.0 - self.k1)


@dataclass(frozen=True)
class PowerPair:
    p_D: float
    p_C: float
    case_id: PowerCase
    sum_rate: float
    point: PowerPoint = PowerPoint.NONE

    @property
    def feasible(self) -> bool:
        return self.case_id is not PowerCase.INFEASIBLE


def power_coefficients(
    eff: EffectiveChannels, sigma2_B: float, gamma_D_min: float, gamma_C_min: float
) -> PowerCoefficients:
    hD_gain = abs(eff.h_D) ** 2
    hC_energy = float((abs(eff.hC_vec) ** 2).sum())
    hD_energy = float((abs(eff.hD_vec) ** 2).sum())
    rho = correlation_coefficient(eff.hC_vec, eff.hD_vec)
    return PowerCoefficients(
        alpha=gamma_D_min / hD_gain if hD_gain > 0 else math.inf,
        beta=sigma2_B * gamma_C_min / hC_energy if hC_energy > 0 else math.inf,
        k0=abs(eff.h_C) ** 2,
        k1=rho**2,
        k2=sigma2_B / hD_energy if hD_energy > 0 else math.inf,
        nu1=hC_energy / sigma2_B,
        nu2=hD_gain,
    )


# ── Objective ────────────────────────────────────────────────────────


def _cu_suppression(p_D: float, co: PowerCoefficients) -> float:
    """``(k2 + k̄1 p_D) / (k2 + p_D)``, the CU SINR loss factor from D2D interference."""
    if math.isinf(co.k2):
        return 1.0
    return (co.k2 + co.k1_bar * p_D) / (co.k2 + p_D)


def rate_components(p_D: float, p_C: float, co: PowerCoefficients, sigma2_D: float) -> tuple[float, float]:
    """(γ_D, γ_C) at the given powers with the optimal receive beamformer."""
    gamma_D = co.nu2 * p_D / (co.k0 * p_C + sigma2_D)
    gamma_C = co.nu1 * p_C * _cu_suppression(p_D, co)
    return gamma_D, gamma_C


def rate_objective(pair: tuple[float, float], co: PowerCoefficients, sigma2_D: float) -> float:
    """``log R(p_D, p_C)`` in nats."""
    p_D, p_C = pair
    if p_D < 0 or p_C < 0:
        raise ValueError(f"powers must be non-negative, got {pair}")
    gamma_D, gamma_C = rate_components(p_D, p_C, co, sigma2_D)
    return math.log1p(gamma_C) + math.log1p(gamma_D)


# ── Feasible region ──────────────────────────────────────────────────


def d2d_line(p_D: float, co: PowerCoefficients, sigma2_D: float) -> float:
    """Largest p_C meeting the D2D requirement at ``p_D``."""
    if math.isinf(co.alpha):
        return -math.inf
    excess = p_D - co.alpha * sigma2_D
    if co.k0 == 0.0:
        return math.inf if excess >= 0 else -math.inf
    return excess / (co.alpha * co.k0)


def cu_curve(p_D: float, co: PowerCoefficients) -> float:
    """Smallest p_C meeting the CU requirement at ``p_D``."""
    if math.isinf(co.beta):
        return math.inf
    if math.isinf(co.k2):
        return co.beta
    return co.beta * (p_D + co.k2) / (co.k1_bar * p_D + co.k2)


def boundary_intersections(
    co: PowerCoefficients, limits: tuple[float, float], sigma2_D: float
) -> tuple[float, float]:
    """``(I_Ly, I_Cy)``: where the line and the curve cross ``p_D = p_D_max``."""
    p_D_max, _ = limits
    if p_D_max <= 0:
        raise ValueError(f"p_D_max must be positive, got {p_D_max}")
    if co.alpha == 0.0 or math.isinf(co.alpha):
        raise DegenerateCoefficientError(f"alpha = {co.alpha} leaves the D2D line undefined")
    if co.k0 == 0.0:
        raise DegenerateCoefficientError("k0 = 0 makes the D2D line vertical")
    return d2d_line(p_D_max, co, sigma2_D), cu_curve(p_D_max, co)


def power_constraint_slacks(
    p_D: float, p_C: float, co: PowerCoefficients, sigma2_D: float, limits: tuple[float, float]
) -> dict[str, float]:
    """Slacks of the box and SINR constraints (watts; non-negative means satisfied)."""
    p_D_max, p_C_max = limits
    return {
        "p_D_positive": p_D,
        "p_C_positive": p_C,
        "p_D_max": p_D_max - p_D,
        "p_C_max": p_C_max - p_C,
        "d2d_sinr": d2d_line(p_D, co, sigma2_D) - p_C,
        "cu_sinr": p_C - cu_curve(p_D, co),
    }


def _is_feasible(p_D: float, p_C: float, co: PowerCoefficients, sigma2_D: float, limits: tuple[float, float]) -> bool:
    p_D_max, p_C_max = limits
    if p_D < MIN_POWER_FRACTION * p_D_max or p_C < MIN_POWER_FRACTION * p_C_max:
        return False
    tol = SLACK_TOL * max(1.0, p_C_max, p_D_max)
    slacks = power_constraint_slacks(p_D, p_C, co, sigma2_D, limits)
    return all(v >= -tol for v in slacks.values())


# ── Closed-form optimum ──────────────────────────────────────────────


def _pick(
    candidates: list[tuple[PowerPoint, tuple[float, float]]],
    case_id: PowerCase,
    co: PowerCoefficients,
    sigma2_D: float,
    limits: tuple[float, float],
) -> PowerPair:
    best: PowerPair | None = None
    for point, (p_D, p_C) in candidates:
        if not (math.isfinite(p_D) and math.isfinite(p_C)):
            continue
        # Snap onto the box so rounding never pushes a border point outside it.
        p_D, p_C = min(p_D, limits[0]), min(p_C, limits[1])
        if not _is_feasible(p_D, p_C, co, sigma2_D, limits):
            continue
        rate = rate_objective((p_D, p_C), co, sigma2_D)
        # Strictly better wins; on exact ties keep the earlier (primary) candidate,
        # except that a smaller p_D wins a tie on the horizontal border.
        if best is None or rate > best.sum_rate or (
            rate == best.sum_rate and case_id is PowerCase.HORIZONTAL_BORDER and p_D < best.p_D
        ):
            best = PowerPair(p_D=p_D, p_C=p_C, case_id=case_id, sum_rate=rate, point=point)
    if best is None:
        return PowerPair(p_D=0.0, p_C=0.0, case_id=PowerCase.INFEASIBLE, sum_rate=0.0)
    return best


def optimal_power(co: PowerCoefficients, limits: tuple[float, float], sigma2_D: float) -> PowerPair:
    """Optimal (p_D, p_C) for the given coefficients, or an INFEASIBLE pair.

    Case selection follows where the line (``I_Ly``) and the curve (``I_Cy``)
    cross the vertical border relative to ``p_C_max``:

    * ``I_Cy < I_Ly < p_C_max`` → top of the vertical segment is ``(p_D_max, I_Ly)``
    * ``I_Cy < p_C_max < I_Ly`` → top of the vertical segment is the box corner
    * ``p_C_max < I_Cy < I_Ly`` → the ends of the horizontal segment

    In the first two cases the bottom end ``(p_D_max, I_Cy)`` is compared
    too, and in the second the left end ``(α(k0 p_C_max + σ_D²), p_C_max)``
    of the horizontal border as well.  ``PowerPair.point`` names the winner;
    ``case_id`` only says which part of the border was searched.
    """
    p_D_max, p_C_max = limits
    if p_D_max <= 0 or p_C_max <= 0:
        raise ValueError(f"power limits must be positive, got {limits}")

    I_Ly = d2d_line(p_D_max, co, sigma2_D)
    I_Cy = cu_curve(p_D_max, co)
    if not (I_Ly > 0 and I_Cy <= I_Ly):
        _log.debug("Power region empty: I_Ly=%.6g I_Cy=%.6g", I_Ly, I_Cy)
        return PowerPair(p_D=0.0, p_C=0.0, case_id=PowerCase.INFEASIBLE, sum_rate=0.0)

    # Left end of the horizontal border, where the D2D line meets p_C_max.
    line_end = co.alpha * (co.k0 * p_C_max + sigma2_D)
    if I_Cy <= p_C_max:
        bottom = (PowerPoint.CURVE_BOTTOM, (p_D_max, max(I_Cy, MIN_POWER_FRACTION * p_C_max)))
        if I_Ly <= p_C_max:
            return _pick([(PowerPoint.LINE_TOP, (p_D_max, I_Ly)), bottom], PowerCase.LINE_ON_VERTICAL, co, sigma2_D, limits)
        # The curve stays below p_C_max for p_D < p_D_max, so the horizontal
        # border is feasible from line_end up to the corner.
        corner = (PowerPoint.CORNER, (p_D_max, p_C_max))
        return _pick([corner, bottom, (PowerPoint.LINE_END, (line_end, p_C_max))], PowerCase.BOX_CORNER, co, sigma2_D, limits)

    # p_C_max < I_Cy: only the horizontal border can be feasible.
    denominator = co.k1_bar * p_C_max - co.beta
    if math.isinf(co.k2) or denominator == 0.0:
        curve_end = math.inf if p_C_max >= co.beta else -math.inf
    else:
        curve_end = co.k2 * (co.beta - p_C_max) / denominator
    candidates = [(PowerPoint.LINE_END, (line_end, p_C_max))]
    if curve_end > 0:
        candidates.append((PowerPoint.CURVE_END, (min(curve_end, p_D_max), p_C_max)))
    return _pick(candidates, PowerCase.HORIZONTAL_BORDER, co, sigma2_D, limits)
