"""Replicated experiments over a DGP and a list of estimators.

Replication ``r`` always draws from ``SeedSequence(master_seed, spawn_key=(r,))``
so any single replication can be re-run in isolation, and results are gathered
by index before aggregation; the statistics do not depend on the number of
worker processes.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import estimators as est
from .dgp import Dataset, DgpConfig, simulate_dataset
from .errors import ConfigurationError, ParameterError, RankError

log = logging.getLogger(__name__)

METHODS = ("ols", "tsls", "tsls_regularized")


@dataclass(frozen=True)
class EstimatorSpec:
    """One estimator column of a scenario.

    ``tsls_regularized`` takes either a fixed ``scheme`` or a ``grid`` for
    cross-validated selection of a ``select_kind`` parameter. With
    ``grid_scale="relative"`` the grid is multiplied by ``lambda_max**2`` of
    ``Z'Z`` (Tikhonov) or ``lambda_max`` (spectral cut-off) of each sample.
    """

    label: str
    method: str
    scheme: est.RegularizationScheme | None = None
    grid: tuple[float, ...] | None = None
    select_kind: str = "tikhonov"
    grid_scale: str = "absolute"
    folds: int = 5

    def __post_init__(self):
        if self.grid is not None:
            object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))
        if self.method not in METHODS:
            raise ConfigurationError(f"must be one of {list(METHODS)}, got {self.method!r}", field="method")
        if self.method == "tsls_regularized":
            if (self.scheme is None) == (self.grid is None):
                raise ConfigurationError("tsls_regularized needs exactly one of scheme or grid", field="scheme")
        elif self.scheme is not None or self.grid is not None:
            raise ConfigurationError(f"{self.method} takes no scheme or grid", field="scheme")
        if self.grid is not None:
            if not self.grid:
                raise ConfigurationError("must be non-empty", field="grid")
            if any(not g > 0 for g in self.grid):
                raise ConfigurationError("values must be strictly positive", field="grid")
            if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
                raise ConfigurationError("must be sorted strictly ascending", field="grid")
        if self.select_kind not in est.SCHEMES:
            raise ConfigurationError(
                f"must be one of {list(est.SCHEMES)}, got {self.select_kind!r}", field="select_kind"
            )
        if self.grid_scale not in ("absolute", "relative"):
            raise ConfigurationError(f"must be 'absolute' or 'relative', got {self.grid_scale!r}", field="grid_scale")
        if self.folds < 2:
            raise ConfigurationError(f"must be >= 2, got {self.folds}", field="folds")


@dataclass(frozen=True)
class ScenarioConfig:
    dgp: DgpConfig
    estimators: tuple[EstimatorSpec, ...]
    replications: int = 100
    master_seed: int = 0
    n_grid: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if self.n_grid is not None:
            object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
            if not self.n_grid or any(n < 1 for n in self.n_grid):
                raise ConfigurationError("must be a non-empty list of positive counts", field="n_grid")
        if self.replications < 1:
            raise ConfigurationError(f"must be >= 1, got {self.replications}", field="replications")
        if self.master_seed < 0:
            raise ConfigurationError(f"must be >= 0, got {self.master_seed}", field="master_seed")
        if not self.estimators:
            raise ConfigurationError("at least one estimator is required", field="estimators")
        labels = [e.label for e in self.estimators]
        if len(set(labels)) != len(labels):
            raise ConfigurationError(f"labels must be unique, got {labels}", field="estimators")

    def cells(self) -> tuple[int, ...]:
        return self.n_grid if self.n_grid is not None else (self.dgp.n,)


@dataclass(frozen=True, eq=False)
class EstimatorStats:
    """Per-coordinate summary of one estimator in one cell; arrays have length G."""

    replications: int
    failure_count: int
    mean_bias: np.ndarray
    median_bias: np.ndarray
    mad: np.ndarray
    mse: np.ndarray
    decile_range: np.ndarray


@dataclass(frozen=True, eq=False)
class CellStats:
    n: int
    label: str
    method: str
    stats: EstimatorStats


@dataclass(eq=False)
class ReplicationStats:
    delta_true: tuple[float, ...]
    cells: list[CellStats]
    raw: dict[tuple[int, str], np.ndarray] = field(default_factory=dict, repr=False)

    def get(self, label: str, n: int | None = None) -> EstimatorStats:
        for cell in self.cells:
            if cell.label == label and (n is None or cell.n == n):
                return cell.stats
        raise KeyError((label, n))


def summarize(raw, delta_true) -> EstimatorStats:
    """Bias/MSE summary of a (replications x G) table; NaN rows are failures."""
    table = np.asarray(raw, dtype=float)
    if table.ndim == 1:
        table = table[:, None]
    if table.shape[0] == 0:
        raise ParameterError("replication table is empty", field="raw")
    truth = np.asarray(delta_true, dtype=float).reshape(-1)
    if truth.size != table.shape[1]:
        raise ParameterError(f"delta_true has {truth.size} entries, table has {table.shape[1]} columns", field="delta_true")
    ok = np.all(np.isfinite(table), axis=1)
    err = table[ok] - truth
    failures = int((~ok).sum())
    if err.shape[0] == 0:
        nan = np.full(truth.size, np.nan)
        return EstimatorStats(table.shape[0], failures, nan, nan, nan, nan, nan)
    q10, q90 = np.quantile(table[ok], [0.1, 0.9], axis=0)
    return EstimatorStats(
        replications=table.shape[0],
        failure_count=failures,
        mean_bias=err.mean(axis=0),
        median_bias=np.median(err, axis=0),
        mad=np.median(np.abs(err), axis=0),
        mse=np.mean(err * err, axis=0),
        decile_range=q90 - q10,
    )


def run_estimator(spec: EstimatorSpec, data: Dataset) -> est.EstimatorResult:
    if spec.method == "ols":
        return est.ols(data)
    if spec.method == "tsls":
        return est.tsls(data)
    eigs = est.eigensystem_of_gram(data.z)
    scheme = spec.scheme
    if scheme is None:
        grid = np.array(spec.grid)
        if spec.grid_scale == "relative":
            if spec.select_kind == "tikhonov":
                grid = grid * eigs.lambda_max**2
            elif spec.select_kind == "spectral_cutoff":
                grid = grid * eigs.lambda_max
        scheme = est.select_alpha(data, spec.select_kind, grid, folds=spec.folds)
    return est.tsls_regularized(data, scheme, eigs=eigs)


def run_replication(dgp: DgpConfig, specs: Sequence[EstimatorSpec], seed) -> np.ndarray:
    """Estimates (len(specs) x G) on one simulated dataset; failed estimators give NaN rows."""
    data = simulate_dataset(dgp, seed)
    out = np.full((len(specs), dgp.g), np.nan)
    for i, spec in enumerate(specs):
        try:
            out[i] = run_estimator(spec, data).delta_hat
        except (RankError, ParameterError, np.linalg.LinAlgError) as exc:
            log.debug("replication failure for %s: %s", spec.label, exc)
    return out


def replication_seed(master_seed: int, r: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(r,))


def _task(args):
    dgp, specs, master_seed, r = args
    return run_replication(dgp, specs, replication_seed(master_seed, r))


def run_scenario(config: ScenarioConfig, workers: int = 1) -> ReplicationStats:
    """Simulate every (n, replication) pair and summarise each estimator."""
    cells = config.cells()
    tasks = [
        (replace(config.dgp, n=n), config.estimators, config.master_seed, r)
        for n in cells
        for r in range(config.replications)
    ]
    if workers <= 1:
        results = [_task(t) for t in tasks]
    else:
        chunk = max(1, len(tasks) // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_task, tasks, chunksize=chunk))

    stats = ReplicationStats(delta_true=config.dgp.delta_true, cells=[])
    for ci, n in enumerate(cells):
        block = np.stack(results[ci * config.replications : (ci + 1) * config.replications])
        for ei, spec in enumerate(config.estimators):
            table = block[:, ei, :]
            stats.raw[(n, spec.label)] = table
            stats.cells.append(CellStats(n, spec.label, spec.method, summarize(table, config.dgp.delta_true)))
    return stats
