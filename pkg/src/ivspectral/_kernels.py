"""Loop-bound numeric kernels.

Every kernel exists twice: a numba ``@njit`` version and a vectorised numpy
version with identical semantics. The numba path is used when numba imports
and ``IVSPECTRAL_DISABLE_NUMBA`` is unset (or ``0``); both implementations stay
importable as ``nb_<name>`` / ``np_<name>`` so tests and benchmarks can compare
them directly.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("IVSPECTRAL_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"


# --- AR(1) recursion across instrument columns ------------------------------


def np_ar1_columns(innovations: np.ndarray, rho: float) -> np.ndarray:
    n, k = innovations.shape
    out = np.empty((n, k))
    if k == 0:
        return out
    scale = np.sqrt(1.0 - rho * rho)
    out[:, 0] = innovations[:, 0]
    for j in range(1, k):
        out[:, j] = rho * out[:, j - 1] + scale * innovations[:, j]
    return out


# --- cross-validated first-stage error over a parameter grid ---------------


def np_cv_fold_errors(
    a_test: np.ndarray, coef: np.ndarray, weights: np.ndarray, x_test: np.ndarray
) -> np.ndarray:
    """Sum of squared prediction errors ``||x_test - a_test @ diag(w) @ coef||^2`` per grid row.

    a_test : (m, r) held-out instruments rotated into the eigenbasis
    coef : (r, g) rotated training cross-products ``U' Z' X``
    weights : (p, r) per-grid filter weights ``q_j / lambda_j``
    x_test : (m, g) held-out regressors
    """
    scaled = weights[:, :, None] * coef[None, :, :]  # (p, r, g)
    pred = np.einsum("mr,prg->pmg", a_test, scaled)
    resid = x_test[None, :, :] - pred
    return np.einsum("pmg,pmg->p", resid, resid)


# --- prefix accumulation of the first-stage signal --------------------------


def np_prefix_signal_gram(z: np.ndarray, pi: np.ndarray, k_grid: np.ndarray) -> np.ndarray:
    """``Q_K = (Z_{:K} pi_{:K})' (Z_{:K} pi_{:K}) / n`` for each K in ``k_grid``.

    Returns an array of shape (len(k_grid), g, g).
    """
    n = z.shape[0]
    g = pi.shape[1]
    out = np.empty((k_grid.shape[0], g, g))
    signal = np.zeros((n, g))
    start = 0
    for idx in range(k_grid.shape[0]):
        stop = int(k_grid[idx])
        signal = signal + z[:, start:stop] @ pi[start:stop]
        out[idx] = signal.T @ signal / n
        start = stop
    return out


if HAVE_NUMBA:

    @numba.njit(cache=True)
    def nb_ar1_columns(innovations, rho):
        n, k = innovations.shape
        out = np.empty((n, k))
        if k == 0:
            return out
        scale = np.sqrt(1.0 - rho * rho)
        for i in range(n):
            prev = innovations[i, 0]
            out[i, 0] = prev
            for j in range(1, k):
                prev = rho * prev + scale * innovations[i, j]
                out[i, j] = prev
        return out

    @numba.njit(cache=True)
    def nb_cv_fold_errors(a_test, coef, weights, x_test):
        r, g = coef.shape
        p = weights.shape[0]
        out = np.zeros(p)
        scaled = np.empty((r, g))
        for t in range(p):
            for j in range(r):
                w = weights[t, j]
                for c in range(g):
                    scaled[j, c] = w * coef[j, c]
            resid = x_test - a_test @ scaled
            out[t] = np.sum(resid * resid)
        return out

    @numba.njit(cache=True)
    def nb_prefix_signal_gram(z, pi, k_grid):
        n = z.shape[0]
        g = pi.shape[1]
        out = np.empty((k_grid.shape[0], g, g))
        signal = np.zeros((n, g))
        start = 0
        for idx in range(k_grid.shape[0]):
            stop = k_grid[idx]
            if stop > start:
                signal += np.ascontiguousarray(z[:, start:stop]) @ np.ascontiguousarray(pi[start:stop])
            out[idx] = signal.T @ signal / n
            start = stop
        return out

else:  # pragma: no cover
    nb_ar1_columns = np_ar1_columns
    nb_cv_fold_errors = np_cv_fold_errors
    nb_prefix_signal_gram = np_prefix_signal_gram


def ar1_columns(innovations: np.ndarray, rho: float) -> np.ndarray:
    innovations = np.ascontiguousarray(innovations, dtype=np.float64)
    if USE_NUMBA:
        return nb_ar1_columns(innovations, float(rho))
    return np_ar1_columns(innovations, float(rho))


def cv_fold_errors(a_test, coef, weights, x_test) -> np.ndarray:
    args = [np.ascontiguousarray(v, dtype=np.float64) for v in (a_test, coef, weights, x_test)]
    if USE_NUMBA:
        return nb_cv_fold_errors(*args)
    return np_cv_fold_errors(*args)


def prefix_signal_gram(z, pi, k_grid) -> np.ndarray:
    z = np.ascontiguousarray(z, dtype=np.float64)
    pi = np.ascontiguousarray(pi, dtype=np.float64)
    k_grid = np.ascontiguousarray(k_grid, dtype=np.int64)
    if USE_NUMBA:
        return nb_prefix_signal_gram(z, pi, k_grid)
    return np_prefix_signal_gram(z, pi, k_grid)
