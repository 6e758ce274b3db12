"""Small symmetric-matrix helpers shared across the package."""

from __future__ import annotations

import numpy as np

# A symmetric matrix passes the PSD check when its minimum eigenvalue is
# no smaller than -PSD_RTOL * (1 + max eigenvalue).  This absorbs the
# symmetrization noise of repeated congruence updates.
PSD_RTOL = 1e-10


def sym(M: np.ndarray) -> np.ndarray:
    """Symmetric part (M + M') / 2."""
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def min_eig(M: np.ndarray) -> float:
    """Smallest eigenvalue of the symmetric part of M."""
    return float(np.linalg.eigvalsh(sym(M))[..., 0])


def is_psd(M: np.ndarray, rtol: float = PSD_RTOL) -> bool:
    """PSD test with a relative floor on the minimum eigenvalue."""
    w = np.linalg.eigvalsh(sym(M))
    return bool(w[0] >= -rtol * (1.0 + max(w[-1], 0.0)))


def is_pd(M: np.ndarray) -> bool:
    return min_eig(M) > 0.0


def psd_floor(M: np.ndarray, band: float = 1e-10) -> np.ndarray:
    """Clip round-off negative eigenvalues sitting in (-band, 0) to zero.

    Eigenvalues at or below -band are left alone so genuine violations
    stay visible to the invariant checks.
    """
    S = sym(M)
    w, U = np.linalg.eigh(S)
    if w[0] >= 0.0 or w[0] <= -band:
        return S
    w = np.clip(w, 0.0, None)
    return sym((U * w) @ U.T)


def psd_factor(M: np.ndarray) -> np.ndarray:
    """A factor L with L L' = M for symmetric PSD M.

    Cholesky when M is numerically PD; otherwise an eigenvalue-floored
    square root, which keeps sampling exact on the PSD boundary (Q = 0,
    rank-deficient covariances).
    """
    S = sym(np.asarray(M, dtype=float))
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        w, U = np.linalg.eigh(S)
        w = np.clip(w, 0.0, None)
        return U * np.sqrt(w)
