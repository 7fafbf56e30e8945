"""Dense complex linear algebra kernel shared by all modules.

Everything operates on small (<= a few thousand entries) numpy arrays of
dtype complex128.  All functions are pure; no global state.
"""

from __future__ import annotations

import numpy as np


class LinopsError(Exception):
    """Base class for linear-algebra kernel errors."""


class NotHermitian(LinopsError):
    """Matrix fails the Hermitian symmetry check."""


class IndefiniteMatrix(LinopsError):
    """Matrix has an eigenvalue below the allowed negative tolerance."""


class Singular(LinopsError):
    """Matrix is numerically singular."""


def op_norm(a: np.ndarray) -> float:
    """Spectral norm (largest singular value)."""
    a = np.asarray(a, dtype=complex)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


def trace_norm(a: np.ndarray) -> float:
    """Sum of singular values.  Equals sum of |eigenvalues| for normal a."""
    a = np.asarray(a, dtype=complex)
    if a.size == 0:
        return 0.0
    if a.shape[0] != a.shape[1]:
        raise ValueError("trace_norm requires a square matrix")
    return float(np.sum(np.linalg.svd(a, compute_uv=False)))


def hermitian_residual(a: np.ndarray) -> float:
    """max_ij |a_ij - conj(a_ji)|, the defect from Hermitian symmetry."""
    a = np.asarray(a, dtype=complex)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - a.conj().T)))


def check_hermitian(a: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Return a symmetrized copy of ``a`` or raise NotHermitian.

    The tolerance is relative to the spectral norm of ``a``.
    """
    a = np.asarray(a, dtype=complex)
    scale = op_norm(a)
    if hermitian_residual(a) > tol * max(scale, 1.0):
        raise NotHermitian(
            f"symmetry residual {hermitian_residual(a):.3e} exceeds "
            f"{tol:.1e} * {max(scale, 1.0):.3e}"
        )
    return 0.5 * (a + a.conj().T)


def psd_sqrt(a: np.ndarray, tol_psd: float | None = None) -> np.ndarray:
    """Hermitian PSD square root of a Hermitian PSD matrix.

    Eigenvalues in [-tol_psd, 0) are clamped to 0; an eigenvalue below
    -tol_psd raises IndefiniteMatrix.  Default tol_psd is 1e-12 * ||a||.
    """
    a = check_hermitian(a)
    if a.size == 0:
        return a
    scale = op_norm(a)
    if tol_psd is None:
        tol_psd = 1e-12 * max(scale, 1.0)
    w, v = np.linalg.eigh(a)
    if w[0] < -tol_psd:
        raise IndefiniteMatrix(f"min eigenvalue {w[0]:.3e} < -{tol_psd:.1e}")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def inverse(a: np.ndarray, cond_floor: float = 1e-13) -> np.ndarray:
    """Inverse of a square matrix; raises Singular if ill-conditioned.

    The smallest singular value must exceed cond_floor * ||a||.
    """
    a = np.asarray(a, dtype=complex)
    if a.shape[0] != a.shape[1]:
        raise ValueError("inverse requires a square matrix")
    if a.size == 0:
        return a
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[-1] <= cond_floor * sv[0] or sv[-1] == 0.0:
        raise Singular(
            f"smallest singular value {sv[-1]:.3e} below floor "
            f"{cond_floor:.1e} * {sv[0]:.3e}"
        )
    return np.linalg.inv(a)


def sign_decomposition(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """For Hermitian a, return (|a|, sign(a)) via eigendecomposition."""
    a = check_hermitian(a)
    w, v = np.linalg.eigh(a)
    absw = np.abs(w)
    sgn = np.sign(w)
    return (v * absw) @ v.conj().T, (v * sgn) @ v.conj().T
