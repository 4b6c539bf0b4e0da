"""Small dense linear algebra helpers (float64 throughout).

Matrices and vectors are plain numpy arrays; nothing here mutates its inputs.
"""

import numpy as np
from scipy.linalg import solve_triangular


def _as_f64(M):
    return np.asarray(M, dtype=np.float64)


def row_softmax(M):
    """Softmax over the last axis with per-row max subtraction."""
    M = _as_f64(M)
    Z = M - M.max(axis=-1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=-1, keepdims=True)


def singular_values(M):
    """Singular values in descending order."""
    return np.linalg.svd(_as_f64(M), compute_uv=False)


def min_singular_value(M):
    """sigma_min of a tall matrix, from the smallest eigenvalue of M^T M."""
    M = _as_f64(M)
    if M.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    rows, cols = M.shape
    if rows < cols:
        raise ValueError(f"min_singular_value needs rows >= cols, got {rows}x{cols}")
    lam = np.linalg.eigvalsh(M.T @ M)[0]
    return float(np.sqrt(max(lam, 0.0)))


def spectral_norm(M):
    M = _as_f64(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, ord=2))


def frobenius_norm(M):
    return float(np.linalg.norm(_as_f64(M)))


def norm_1_inf(M):
    """||M||_{1,inf} = largest column l1 norm.

    ``norm_1_inf(W.T)`` is therefore the largest row l1 norm of ``W``.
    """
    M = _as_f64(M)
    if M.ndim == 1:
        M = M[:, None]
    return float(np.abs(M).sum(axis=0).max())


def least_squares(X, y):
    """Minimiser of ||X w - y||_2 via thin QR.

    Raises ValueError for a degenerate design (sigma_min < 1e-10 * sigma_max).
    """
    X = _as_f64(X)
    y = _as_f64(y)
    t, d = X.shape
    if t < d:
        raise ValueError(f"least_squares needs t >= d, got {t}x{d}")
    s = singular_values(X)
    if s[0] == 0.0 or s[-1] < 1e-10 * s[0]:
        raise ValueError("degenerate design: X is (numerically) rank deficient")
    Q, R = np.linalg.qr(X, mode="reduced")
    return solve_triangular(R, Q.T @ y, lower=False)
