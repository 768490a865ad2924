"""Centering and validation of kernel matrices."""

from __future__ import annotations

import numpy as np

from kapc.exceptions import DataError

SYMMETRY_TOL = 1e-10
PSD_TOL = 1e-8


def center_gram(K) -> np.ndarray:
    """Double-center a kernel matrix, ``G = H K H`` with ``H = I - 11'/n``.

    Implemented by subtracting row and column means and adding back the
    grand mean, so ``G @ 1 == 0``.
    """
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise DataError(f"kernel matrix must be square, got shape {K.shape}")
    scale = max(np.abs(K).max(), 1.0)
    if np.abs(K - K.T).max() > SYMMETRY_TOL * scale:
        raise DataError("kernel matrix is not symmetric")
    row = K.mean(axis=1)
    col = K.mean(axis=0)
    G = K - row[:, None] - col[None, :] + K.mean()
    return 0.5 * (G + G.T)


def validate_kernel_matrix(K, n_expected: int) -> np.ndarray:
    """Check a user supplied kernel matrix and return a symmetrized copy.

    Raises
    ------
    DataError
        Wrong shape, asymmetry above ``1e-10`` (relative to the largest
        entry), non-finite entries, or a negative eigenvalue below
        ``-1e-8`` times the largest eigenvalue.
    """
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape != (n_expected, n_expected):
        raise DataError(f"kernel matrix has shape {K.shape}, expected ({n_expected}, {n_expected})")
    if not np.all(np.isfinite(K)):
        raise DataError("kernel matrix has non-finite entries")
    scale = max(np.abs(K).max(), np.finfo(float).tiny)
    if np.abs(K - K.T).max() > SYMMETRY_TOL * scale:
        raise DataError("kernel matrix is not symmetric")
    K = 0.5 * (K + K.T)
    ev = np.linalg.eigvalsh(K)
    if ev[0] < -PSD_TOL * max(ev[-1], 0.0) or (ev[-1] <= 0 and ev[0] < 0):
        raise DataError(f"kernel matrix is not positive semidefinite (smallest eigenvalue {ev[0]:.3g})")
    return K
