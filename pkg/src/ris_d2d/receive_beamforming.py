"""Closed-form MMSE receive beamformer at the BS and the CU SINR it achieves."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .channel_model import EffectiveChannels
from .feature_flags import get_feature_flag
from .linalg_core import CVector, sherman_morrison_inv

_log = logging.getLogger(__name__)

CROSS_CHECK_RTOL = 1e-9


class DegenerateChannelError(ValueError):
    """Raised when the composite CU→BS channel is identically zero."""


class SinrCrossCheckError(RuntimeError):
    """Raised when the closed-form and direct CU SINR evaluations disagree."""


@dataclass(frozen=True, eq=False)
class BeamformerResult:
    w: CVector
    gamma_C_achieved: float
    rho: float
    gamma_C_direct: float | None = None


def correlation_coefficient(hC_vec: CVector, hD_vec: CVector) -> float:
    """``|h_C^H h_D| / (||h_C|| ||h_D||)``, zero when either vector vanishes."""
    norm = float(np.linalg.norm(hC_vec) * np.linalg.norm(hD_vec))
    if norm == 0.0:
        return 0.0
    return float(min(1.0, abs(np.vdot(hC_vec, hD_vec)) / norm))


def cu_sinr(w: CVector, eff: EffectiveChannels, p_D: float, p_C: float, sigma2_B: float) -> float:
    """CU SINR at the BS for an arbitrary receive vector ``w``."""
    signal = p_C * abs(np.vdot(w, eff.hC_vec)) ** 2
    interference = p_D * abs(np.vdot(w, eff.hD_vec)) ** 2
    return float(signal / (interference + sigma2_B * float(np.vdot(w, w).real)))


def closed_form_cu_sinr(
    hC_energy: float, hD_energy: float, rho: float, p_D: float, p_C: float, sigma2_B: float
) -> float:
    """``p_C ||h_C||² / σ² · (1 - ρ² / (1 + σ² / (p_D ||h_D||²)))``.

    Written as ``ρ² · x / (x + σ²)`` with ``x = p_D ||h_D||²`` so ``p_D = 0``
    needs no special case.
    """
    x = p_D * hD_energy
    suppression = rho**2 * x / (x + sigma2_B)
    return float(p_C * hC_energy / sigma2_B * (1.0 - suppression))


def optimal_receiver(
    eff: EffectiveChannels,
    p_D: float,
    p_C: float,
    sigma2_B: float,
    *,
    cross_check: bool | None = None,
) -> BeamformerResult:
    """Unit-norm ``w ∝ (p_D h_D h_D^H + σ² I)^{-1} h_C`` maximizing the CU SINR.

    With ``cross_check`` (defaults to the ``sinr_cross_check_enabled`` flag)
    the quadratic form ``p_C h_C^H A^{-1} h_C`` and the direct ratio at ``w``
    are evaluated as well and must agree with the closed form.
    """
    if sigma2_B <= 0:
        raise ValueError(f"sigma2_B must be positive, got {sigma2_B}")
    if p_D < 0 or p_C < 0:
        raise ValueError(f"powers must be non-negative, got p_D={p_D}, p_C={p_C}")
    hC, hD = eff.hC_vec, eff.hD_vec
    hC_energy = float(np.vdot(hC, hC).real)
    if hC_energy == 0.0:
        raise DegenerateChannelError("composite CU→BS channel is zero; every receiver gives zero SINR")

    A_inv = sherman_morrison_inv(p_D, hD, sigma2_B)
    x = A_inv @ hC
    w = x / np.linalg.norm(x)
    rho = correlation_coefficient(hC, hD)
    gamma_C = closed_form_cu_sinr(hC_energy, float(np.vdot(hD, hD).real), rho, p_D, p_C, sigma2_B)

    if cross_check is None:
        cross_check = bool(get_feature_flag("sinr_cross_check_enabled", False))
    gamma_direct: float | None = None
    if cross_check:
        quadratic = float(p_C * np.vdot(hC, A_inv @ hC).real)
        gamma_direct = cu_sinr(w, eff, p_D, p_C, sigma2_B)
        scale = max(abs(gamma_C), np.finfo(float).tiny)
        for label, value in (("quadratic form", quadratic), ("direct ratio", gamma_direct)):
            if abs(value - gamma_C) > CROSS_CHECK_RTOL * scale:
                raise SinrCrossCheckError(
                    f"closed-form CU SINR {gamma_C!r} disagrees with {label} {value!r}"
                )
        _log.debug("CU SINR cross-check passed: %.12g", gamma_C)

    return BeamformerResult(w=w, gamma_C_achieved=gamma_C, rho=rho, gamma_C_direct=gamma_direct)
