"""Dense complex linear-algebra helpers used across the optimization pipeline.

All routines are pure functions of numpy ``complex128`` arrays.  Matrices in
this package are small (at most a few hundred rows) and dense, so everything
delegates to LAPACK through ``numpy.linalg`` and adds the input validation
and tolerance contracts the solvers rely on.

Tolerances are relative to the magnitude of the input unless stated
otherwise.
"""

from __future__ import annotations

import numpy as np
import numpy.typing as npt

CVector = npt.NDArray[np.complex128]
CMatrix = npt.NDArray[np.complex128]
RMatrix = npt.NDArray[np.float64]

HERMITIAN_RTOL = 1e-12


class InvalidInputError(ValueError):
    """Raised for non-finite entries, wrong shapes or non-Hermitian input."""


class NotPsdError(InvalidInputError):
    """Raised when a matrix is further from the PSD cone than allowed."""


def _require_finite(name: str, value: np.ndarray | complex | float) -> None:
    if not np.all(np.isfinite(value)):
        raise InvalidInputError(f"{name} contains non-finite entries")


def as_cvector(values: npt.ArrayLike) -> CVector:
    vec = np.asarray(values, dtype=np.complex128).reshape(-1)
    _require_finite("vector", vec)
    return vec


def as_cmatrix(values: npt.ArrayLike) -> CMatrix:
    mat = np.asarray(values, dtype=np.complex128)
    if mat.ndim != 2:
        raise InvalidInputError(f"expected a 2-D matrix, got shape {mat.shape}")
    _require_finite("matrix", mat)
    return mat


def is_hermitian(A: npt.ArrayLike, rtol: float = HERMITIAN_RTOL) -> bool:
    """True when ``max|A - A^H| <= rtol * max|A|`` (zero matrix included)."""
    mat = np.asarray(A)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        return False
    scale = float(np.max(np.abs(mat))) if mat.size else 0.0
    if scale == 0.0:
        return True
    return float(np.max(np.abs(mat - mat.conj().T))) <= rtol * scale


def hermitian_part(A: npt.ArrayLike) -> CMatrix:
    mat = np.asarray(A, dtype=np.complex128)
    return 0.5 * (mat + mat.conj().T)


def _require_hermitian(A: npt.ArrayLike) -> CMatrix:
    mat = as_cmatrix(A)
    if not is_hermitian(mat):
        raise InvalidInputError("matrix is not Hermitian")
    return hermitian_part(mat)


def sherman_morrison_inv(scale: float, v: npt.ArrayLike, sigma2: float) -> CMatrix:
    """Return ``(scale * v v^H + sigma2 * I)^{-1}`` via the rank-one update identity.

    ``(s v v^H + σ² I)^{-1} = (I - s v v^H / (σ² + s ||v||²)) / σ²``.
    A zero ``scale`` or a zero ``v`` gives ``I / σ²``.
    """
    vec = as_cvector(v)
    _require_finite("scale", scale)
    _require_finite("sigma2", sigma2)
    if sigma2 <= 0:
        raise InvalidInputError(f"sigma2 must be positive, got {sigma2}")
    if scale < 0:
        raise InvalidInputError(f"scale must be non-negative, got {scale}")

    dim = vec.shape[0]
    identity = np.eye(dim, dtype=np.complex128)
    energy = float(np.vdot(vec, vec).real)
    if scale == 0.0 or energy == 0.0:
        return identity / sigma2
    outer = np.outer(vec, vec.conj())
    inv = (identity - (scale / (sigma2 + scale * energy)) * outer) / sigma2
    return hermitian_part(inv)


def eig_min_hermitian(A: npt.ArrayLike) -> float:
    """Smallest eigenvalue of a Hermitian matrix."""
    mat = _require_hermitian(A)
    if mat.size == 0:
        raise InvalidInputError("empty matrix has no eigenvalues")
    return float(np.linalg.eigvalsh(mat)[0])


def psd_sqrt(A: npt.ArrayLike, clip_tol: float = 1e-7, rank_rtol: float = 0.0) -> CMatrix:
    """Return ``L`` with ``L L^H`` equal to ``A`` after clipping negative eigenvalues.

    Eigenvalues in ``[-clip_tol, 0)`` are clipped to zero; anything below
    ``-clip_tol`` raises :class:`NotPsdError`.  Eigenvalues smaller than
    ``rank_rtol * λ_max`` are dropped as well.  Columns of ``L`` are the
    eigenvectors scaled by ``sqrt(λ)``, so a rank-one input yields a single
    non-zero column proportional to its generating vector.
    """
    mat = _require_hermitian(A)
    eigvals, eigvecs = np.linalg.eigh(mat)
    if eigvals.size and eigvals[0] < -clip_tol:
        raise NotPsdError(f"smallest eigenvalue {eigvals[0]:.3e} is below -{clip_tol:.1e}")
    eigvals = np.clip(eigvals, 0.0, None)
    if rank_rtol > 0 and eigvals.size:
        eigvals[eigvals < rank_rtol * eigvals[-1]] = 0.0
    roots = np.sqrt(eigvals)
    return eigvecs * roots[np.newaxis, :]


def to_real_embedding(A: npt.ArrayLike) -> RMatrix:
    """Map a complex ``n x n`` matrix to ``[[Re A, -Im A], [Im A, Re A]]``."""
    mat = np.asarray(A, dtype=np.complex128)
    re, im = mat.real, mat.imag
    return np.block([[re, -im], [im, re]])


def from_real_embedding(Y: npt.ArrayLike) -> CMatrix:
    """Inverse of :func:`to_real_embedding` that averages the two real copies.

    For a symmetric ``Y = [[Y11, Y12], [Y21, Y22]]`` this returns
    ``(Y11 + Y22)/2 + j (Y21 - Y12)/2``, which stays PSD whenever ``Y`` is.
    """
    mat = np.asarray(Y, dtype=np.float64)
    n = mat.shape[0] // 2
    y11, y12 = mat[:n, :n], mat[:n, n:]
    y21, y22 = mat[n:, :n], mat[n:, n:]
    return hermitian_part(0.5 * (y11 + y22) + 0.5j * (y21 - y12))
