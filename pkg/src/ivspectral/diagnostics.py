"""Effective-instrument counts, the Q_K Cauchy-gap sequence, and covariance spectra.

``Q_K = pi_K' (Z_K' Z_K / n) pi_K`` uses the first K instruments; a sequence
whose successive gaps stay bounded away from zero cannot converge, which is
what happens when infinitely many coefficients exceed the effective threshold.
A flat spectrum of ``Z'Z/n`` (identity covariance) has no decay and so does not
approximate a compact operator as K grows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .dgp import Dataset
from .errors import ParameterError

EPS_DIVERGING = 1e-2
EPS_CAUCHY = 1e-3
TAIL_POINTS = (1, 5, 10)


@dataclass(frozen=True)
class EffectiveCountReport:
    threshold: float
    count_effective: int
    count_irrelevant: int
    count_below_threshold: int
    indices_effective: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class CauchyGapReport:
    k_grid: tuple[int, ...]
    q_values: np.ndarray  # (len(k_grid), g, g)
    gaps: np.ndarray
    verdict: str


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    eigenvalues: np.ndarray
    tail_mass: dict[int, float]
    flatness: float
    decay_fit: float
    nuclear_estimate: float


def _pi_matrix(pi) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    return pi[:, None] if pi.ndim == 1 else pi


def effective_count(pi, n: int, c: float = 1.0) -> EffectiveCountReport:
    """Classify coefficients as effective (``|pi_k| > c/sqrt(n)``), irrelevant (exactly 0) or neither.

    For a K x G coefficient matrix instrument k is judged by ``max_g |pi_kg|``.
    """
    if n < 1:
        raise ParameterError(f"must be >= 1, got {n}", field="n")
    if not c > 0:
        raise ParameterError(f"must be > 0, got {c}", field="c")
    size = np.abs(_pi_matrix(pi)).max(axis=1)
    threshold = c / np.sqrt(n)
    effective = np.flatnonzero(size > threshold)
    irrelevant = int(np.count_nonzero(size == 0))
    return EffectiveCountReport(
        threshold=float(threshold),
        count_effective=int(effective.size),
        count_irrelevant=irrelevant,
        count_below_threshold=int(size.size - effective.size - irrelevant),
        indices_effective=tuple(int(i) for i in effective),
    )


def _verdict(gaps: np.ndarray, scale: float) -> str:
    if gaps.size == 0:
        return "inconclusive"
    third = max(1, int(np.ceil(gaps.size / 3)))
    first, last = gaps[:third].mean(), gaps[-third:].mean()
    if last >= first and last >= EPS_DIVERGING:
        return "diverging"
    slack = 1e-12 * max(1.0, scale)
    shrinking = bool(np.all(np.diff(gaps) <= slack))
    if shrinking and gaps[-1] < EPS_CAUCHY:
        return "cauchy_like"
    return "inconclusive"


def q_sequence(z: np.ndarray, pi, k_grid: Sequence[int]) -> CauchyGapReport:
    """Q_K over ``k_grid`` and Frobenius gaps between successive grid points.

    Verdict: ``diverging`` when the mean of the last third of the gaps is at
    least that of the first third and at least 1e-2; ``cauchy_like`` when
    gaps never increase and the last is below 1e-3; otherwise
    ``inconclusive``.
    """
    z = np.asarray(z, dtype=float)
    pi = _pi_matrix(pi)
    k_max = z.shape[1]
    if pi.shape[0] != k_max:
        raise ParameterError(f"pi has {pi.shape[0]} rows, z has {k_max} columns", field="pi")
    grid = tuple(int(k) for k in k_grid)
    if not grid:
        raise ParameterError("k_grid must be non-empty", field="k_grid")
    if any(k < 1 or k > k_max for k in grid):
        raise ParameterError(f"k_grid values must lie in [1, {k_max}], got {list(grid)}", field="k_grid")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ParameterError("k_grid must be strictly ascending", field="k_grid")

    q_values = _kernels.prefix_signal_gram(z, pi, np.array(grid, dtype=np.int64))
    gaps = np.array([np.linalg.norm(b - a, "fro") for a, b in zip(q_values, q_values[1:])])
    scale = float(np.abs(q_values).max()) if q_values.size else 0.0
    return CauchyGapReport(grid, q_values, gaps, _verdict(gaps, scale))


def covariance_spectrum(z: np.ndarray, weights: Sequence[float] | None = None) -> SpectrumReport:
    """Eigenvalue summary of ``D^{1/2} (Z'Z/n) D^{1/2}`` with ``D = diag(weights)``."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    n, k = z.shape
    cov = z.T @ z / n
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        if w.shape != (k,):
            raise ParameterError(f"expected {k} weights, got {w.size}", field="weights")
        if np.any(w < 0):
            raise ParameterError("weights must be non-negative", field="weights")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ParameterError(f"weights must sum to 1, got {w.sum()!r}", field="weights")
        root = np.sqrt(w)
        cov = cov * np.outer(root, root)
    lam = np.sort(np.linalg.eigvalsh(cov))[::-1]
    lam = np.where(lam < 1e-10 * max(abs(lam[0]), abs(lam[-1])), 0.0, lam)
    total = float(lam.sum())
    tail = {m: (float(lam[m:].sum() / total) if total > 0 else 0.0) for m in TAIL_POINTS}
    flatness = float(lam[-1] / lam[0]) if lam[0] > 0 else 0.0
    positive = lam[lam > 0]
    if positive.size >= 2:
        decay = float((positive[-1] / positive[0]) ** (1.0 / (positive.size - 1)))
    else:
        decay = 0.0 if positive.size == 0 else 1.0
    return SpectrumReport(lam, tail, flatness, decay, total)


def assumption3_checks(data: Dataset, pi) -> dict[str, float]:
    """Sample counterparts of the concentration ratio, leverage and signal conditions."""
    pi = _pi_matrix(pi)
    if pi.shape[0] != data.k:
        raise ParameterError(f"pi has {pi.shape[0]} rows, data has K={data.k}", field="pi")
    n = data.n
    signal = data.z @ pi
    q_mat = signal.T @ signal / n
    return {
        "kappa_hat": data.k / n,
        "max_leverage": float(np.linalg.norm(signal, axis=1).max() / np.sqrt(n)),
        "q_hat": float(np.linalg.eigvalsh(q_mat)[0]),
    }
