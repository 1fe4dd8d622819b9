"""OLS, 2SLS and spectrally regularized 2SLS.

Regularized projections are built from the eigensystem of ``Z'Z`` and a
vector of damping factors ``q_j`` measured relative to the exact projection:

    P^q = Z U diag(q_j / lambda_j) U' Z',   q_j / lambda_j := 0 when lambda_j = 0.

``q_j = 1`` everywhere recovers ``P_Z``. The Tikhonov factor
``lambda^2 / (lambda^2 + alpha)`` reproduces ``Z U' [Lambda^2 + alpha I]^-1 Lambda U Z'``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar, Sequence, Union

import numpy as np

from . import _kernels
from .dgp import Dataset
from .errors import DataError, ParameterError, RankError

RANK_TOL = 1e-10
COND_BOUND = 1e12


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Descending eigenvalues and orthonormal eigenvectors (columns) of ``Z'Z``."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    source_dim: int

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[0]) if self.eigenvalues.size else 0.0

    def inverse_weights(self, q: np.ndarray) -> np.ndarray:
        """``q / lambda`` with zero where lambda is zero."""
        lam = self.eigenvalues
        out = np.zeros_like(lam)
        pos = lam > 0
        out[pos] = q[pos] / lam[pos]
        return out


# --------------------------------------------------------------------------
# Regularization schemes
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Tikhonov:
    alpha: float
    kind: ClassVar[str] = "tikhonov"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ParameterError(f"must be > 0, got {self.alpha}", field="alpha")


@dataclass(frozen=True)
class SpectralCutoff:
    threshold: float
    kind: ClassVar[str] = "spectral_cutoff"

    def __post_init__(self):
        if not self.threshold > 0:
            raise ParameterError(f"must be > 0, got {self.threshold}", field="threshold")


@dataclass(frozen=True)
class PrincipalComponents:
    m: int
    kind: ClassVar[str] = "principal_components"

    def __post_init__(self):
        if self.m < 1:
            raise ParameterError(f"must be >= 1, got {self.m}", field="m")


@dataclass(frozen=True)
class Landweber:
    iterations: int
    step: float
    kind: ClassVar[str] = "landweber"

    def __post_init__(self):
        if self.iterations < 1:
            raise ParameterError(f"must be >= 1, got {self.iterations}", field="iterations")
        if not self.step > 0:
            raise ParameterError(f"must be > 0, got {self.step}", field="step")


RegularizationScheme = Union[Tikhonov, SpectralCutoff, PrincipalComponents, Landweber]
SCHEMES = {cls.kind: cls for cls in (Tikhonov, SpectralCutoff, PrincipalComponents, Landweber)}


@dataclass(eq=False)
class EstimatorResult:
    delta_hat: np.ndarray
    method: str
    scheme: RegularizationScheme | None = None
    first_stage_fitted: np.ndarray | None = None
    diagnostics: dict[str, float] = field(default_factory=dict)


# --------------------------------------------------------------------------
# Linear algebra helpers
# --------------------------------------------------------------------------


def _check_finite(arr: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DataError("contains non-finite entries", field=name)
    return arr


def _as_matrix(arr: np.ndarray) -> np.ndarray:
    return arr[:, None] if arr.ndim == 1 else arr


def _sorted_eigh(sym: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lam, vec = np.linalg.eigh(sym)
    order = np.argsort(lam)[::-1]
    return lam[order], vec[:, order]


def eigensystem_of_gram(z: np.ndarray) -> EigenSystem:
    """Spectral decomposition of ``Z'Z``.

    Works on the smaller of ``Z'Z`` (K x K) and ``ZZ'`` (N x N). In the N x N
    route only the positive eigenpairs are mapped back to instrument space via
    ``U = Z' W Lambda^{-1/2}``. Eigenvalues below ``1e-10 * lambda_max`` are
    clamped to zero.
    """
    z = _as_matrix(_check_finite(z, "z"))
    n, k = z.shape
    if k <= n:
        lam, vec = _sorted_eigh(z.T @ z)
        tol = RANK_TOL * max(abs(lam[0]), abs(lam[-1])) if lam.size else 0.0
        lam = np.where(lam < tol, 0.0, lam)
        return EigenSystem(lam, vec, k)

    mu, w = _sorted_eigh(z @ z.T)
    tol = RANK_TOL * max(abs(mu[0]), abs(mu[-1])) if mu.size else 0.0
    keep = mu > tol
    mu, w = mu[keep], w[:, keep]
    vec = (z.T @ w) / np.sqrt(mu)
    return EigenSystem(mu, vec, k)


def _gram_ratio(z: np.ndarray) -> float:
    lam = np.linalg.eigvalsh(z.T @ z)
    if lam[-1] <= 0:
        return 0.0
    return float(lam[0] / lam[-1])


def projection_apply(z: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``P_Z v`` for full-column-rank ``Z``; shape of ``v`` is preserved."""
    z = _as_matrix(_check_finite(z, "z"))
    v = _check_finite(v, "v")
    if v.shape[0] != z.shape[0]:
        raise DataError(f"v has {v.shape[0]} rows, z has {z.shape[0]}", field="v")
    ratio = _gram_ratio(z)
    if z.shape[1] > z.shape[0] or ratio <= RANK_TOL:
        raise RankError(
            f"instrument matrix is rank deficient: smallest/largest Gram eigenvalue ratio "
            f"{ratio:.3e} <= {RANK_TOL:.0e}; use a regularized projection",
            field="z",
        )
    q, _ = np.linalg.qr(z)
    return q @ (q.T @ v)


def _condition(a: np.ndarray) -> float:
    lam = np.linalg.eigvalsh(a)
    return float(np.inf if lam[0] <= 0 else lam[-1] / lam[0])


# --------------------------------------------------------------------------
# Estimators
# --------------------------------------------------------------------------


def ols(data: Dataset) -> EstimatorResult:
    x, y = data.x, data.y
    xtx = x.T @ x
    cond = _condition(xtx)
    if not cond <= COND_BOUND:
        raise RankError(f"X'X is singular (condition number {cond:.3e} > {COND_BOUND:.0e})", field="x")
    delta = np.linalg.lstsq(x, y, rcond=None)[0]
    return EstimatorResult(delta, "ols", diagnostics={"condition_number": cond})


def tsls(data: Dataset) -> EstimatorResult:
    """Classical two-stage least squares, ``(X'P_Z X)^-1 X'P_Z y``."""
    fitted = projection_apply(data.z, data.x)
    cond = _condition(fitted.T @ fitted)
    if not cond <= COND_BOUND:
        raise RankError(f"X'P_Z X is singular (condition number {cond:.3e} > {COND_BOUND:.0e})")
    # P_Z is symmetric idempotent, so the normal equations are those of y on P_Z X.
    delta = np.linalg.lstsq(fitted, data.y, rcond=None)[0]
    return EstimatorResult(
        delta,
        "tsls",
        first_stage_fitted=fitted,
        diagnostics={"condition_number": cond, "effective_dof": float(data.k)},
    )


def filter_factors(eigs: EigenSystem, scheme: RegularizationScheme) -> np.ndarray:
    """Per-eigenvalue damping relative to the exact projection."""
    lam = eigs.eigenvalues
    if isinstance(scheme, Tikhonov):
        sq = lam * lam
        return sq / (sq + scheme.alpha)
    if isinstance(scheme, SpectralCutoff):
        return (lam >= scheme.threshold).astype(float)
    if isinstance(scheme, PrincipalComponents):
        q = np.zeros_like(lam)
        q[: scheme.m] = 1.0
        return q
    if isinstance(scheme, Landweber):
        bound = 2.0 / eigs.lambda_max if eigs.lambda_max > 0 else np.inf
        if scheme.step >= bound:
            raise ParameterError(
                f"landweber step {scheme.step} must be < 2/lambda_max = {bound:.6g}", field="step"
            )
        return 1.0 - (1.0 - scheme.step * lam) ** scheme.iterations
    raise ParameterError(f"unknown regularization scheme {scheme!r}", field="scheme")


def regularized_projection_apply(
    z: np.ndarray, v: np.ndarray, eigs: EigenSystem, q: np.ndarray
) -> np.ndarray:
    w = eigs.inverse_weights(q)
    u = eigs.eigenvectors
    return z @ (u @ (w[:, None] * (u.T @ (z.T @ _as_matrix(v)))))


def tsls_regularized(
    data: Dataset, scheme: RegularizationScheme, eigs: EigenSystem | None = None
) -> EstimatorResult:
    """2SLS with ``P_Z`` replaced by the filtered projection ``P^q``.

    ``eigs`` may be passed to reuse a decomposition of ``data.z``.
    """
    if eigs is None:
        eigs = eigensystem_of_gram(data.z)
    q = filter_factors(eigs, scheme)
    w = eigs.inverse_weights(q)
    u = eigs.eigenvectors
    zx = u.T @ (data.z.T @ data.x)
    zy = u.T @ (data.z.T @ data.y)
    a = zx.T @ (w[:, None] * zx)
    b = zx.T @ (w * zy)
    cond = _condition(a)
    if not cond <= COND_BOUND:
        raise RankError(
            f"X'P^q X is singular (condition number {cond:.3e} > {COND_BOUND:.0e}); "
            "try a larger regularization parameter"
        )
    delta = np.linalg.solve(a, b)
    fitted = data.z @ (u @ (w[:, None] * zx))
    return EstimatorResult(
        delta,
        "tsls_regularized",
        scheme=scheme,
        first_stage_fitted=fitted,
        diagnostics={"condition_number": cond, "effective_dof": float(q.sum())},
    )


# --------------------------------------------------------------------------
# Data-driven parameter choice
# --------------------------------------------------------------------------


def _scheme_for(kind: str, value: float, eigs: EigenSystem) -> RegularizationScheme:
    if kind == "tikhonov":
        return Tikhonov(float(value))
    if kind == "spectral_cutoff":
        return SpectralCutoff(float(value))
    if kind == "principal_components":
        return PrincipalComponents(_as_count(value, "grid"))
    if kind == "landweber":
        step = 1.0 / eigs.lambda_max if eigs.lambda_max > 0 else 1.0
        return Landweber(_as_count(value, "grid"), step)
    raise ParameterError(f"unknown scheme kind {kind!r}", field="scheme_kind")


def _as_count(value: float, name: str) -> int:
    if float(value) != int(value):
        raise ParameterError(f"grid values must be integers for this scheme, got {value}", field=name)
    return int(value)


def _fold_value(kind: str, value: float, shrink: float) -> float:
    # Gram eigenvalues scale with the number of rows.
    if kind == "tikhonov":
        return value * shrink**2
    if kind == "spectral_cutoff":
        return value * shrink
    return value


def cv_scores(data: Dataset, scheme_kind: str, grid: Sequence[float], folds: int = 5) -> np.ndarray:
    """V-fold cross-validated first-stage prediction error for each grid value."""
    n = data.n
    folds = min(folds, n)
    if folds < 2:
        raise ParameterError(f"cross-validation needs at least 2 observations, got {n}", field="data")
    fold_id = np.arange(n) % folds
    scores = np.zeros(len(grid))
    for f in range(folds):
        train = fold_id != f
        test = ~train
        z_tr, x_tr = data.z[train], data.x[train]
        eigs = eigensystem_of_gram(z_tr)
        shrink = train.sum() / n
        weights = np.empty((len(grid), eigs.eigenvalues.size))
        for i, value in enumerate(grid):
            scheme = _scheme_for(scheme_kind, _fold_value(scheme_kind, value, shrink), eigs)
            weights[i] = eigs.inverse_weights(filter_factors(eigs, scheme))
        a_test = data.z[test] @ eigs.eigenvectors
        coef = eigs.eigenvectors.T @ (z_tr.T @ x_tr)
        scores += _kernels.cv_fold_errors(a_test, coef, weights, data.x[test])
    return scores


def select_alpha(
    data: Dataset, scheme_kind: str, grid: Sequence[float], folds: int = 5
) -> RegularizationScheme:
    """Grid member minimising the cross-validated first-stage error.

    Ties (within 1e-12 relative) go to the larger parameter value.
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise ParameterError("grid must be non-empty", field="grid")
    if any(not g > 0 for g in grid):
        raise ParameterError("grid values must be strictly positive", field="grid")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ParameterError("grid must be sorted strictly ascending", field="grid")
    if scheme_kind not in SCHEMES:
        raise ParameterError(f"unknown scheme kind {scheme_kind!r}", field="scheme_kind")
    full = eigensystem_of_gram(data.z) if scheme_kind == "landweber" else None
    if len(grid) == 1:
        return _scheme_for(scheme_kind, grid[0], full)

    scores = cv_scores(data, scheme_kind, grid, folds)
    best = scores.min()
    tied = np.flatnonzero(scores <= best + 1e-12 * abs(best))
    return _scheme_for(scheme_kind, grid[int(tied[-1])], full)
