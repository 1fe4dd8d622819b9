"""Synthetic data for the linear IV model ``y = X delta + u``, ``X = Z pi + V``.

Coefficient regimes (``PiScheme``) and instrument designs (``InstrumentDesign``)
are small frozen dataclasses; ``simulate_dataset`` combines them with the error
covariance in a ``DgpConfig``. Everything is a pure function of
``(config, seed)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import ClassVar, Union

import numpy as np

from . import _kernels
from .errors import ConfigurationError, DataError

SeedLike = Union[int, np.random.SeedSequence]


def as_seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise ConfigurationError(f"seed must be a non-negative integer, got {seed!r}", field="seed")
    if seed < 0:
        raise ConfigurationError(f"seed must be non-negative, got {seed}", field="seed")
    return np.random.SeedSequence(int(seed))


def child_seed(seed: SeedLike, index: int) -> np.random.SeedSequence:
    """Deterministic child stream ``index`` of ``seed``; never mutates the parent."""
    ss = as_seed_sequence(seed)
    return np.random.SeedSequence(entropy=ss.entropy, spawn_key=tuple(ss.spawn_key) + (int(index),))


def _require(cond: bool, field_name: str, message: str) -> None:
    if not cond:
        raise ConfigurationError(message, field=field_name)


# --------------------------------------------------------------------------
# First-stage coefficient schemes
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FixedSupport:
    support_size: int
    value: float = 1.0
    kind: ClassVar[str] = "fixed_support"

    def __post_init__(self):
        _require(self.support_size >= 0, "support_size", f"must be >= 0, got {self.support_size}")

    def coefficients(self, k: int, n: int) -> np.ndarray:
        _require(self.support_size <= k, "support_size", f"exceeds k={k}, got {self.support_size}")
        pi = np.zeros(k)
        pi[: self.support_size] = self.value
        return pi


@dataclass(frozen=True)
class GeometricDecay:
    base: float = 1.0
    ratio: float = 0.5
    kind: ClassVar[str] = "geometric_decay"

    def __post_init__(self):
        _require(0.0 < self.ratio < 1.0, "ratio", f"must lie in (0, 1), got {self.ratio}")

    def coefficients(self, k: int, n: int) -> np.ndarray:
        return self.base * self.ratio ** np.arange(k, dtype=float)


@dataclass(frozen=True)
class Weak:
    """Every coefficient equals ``scale / sqrt(n)``."""

    scale: float = 1.0
    kind: ClassVar[str] = "weak"

    def coefficients(self, k: int, n: int) -> np.ndarray:
        return np.full(k, self.scale / np.sqrt(n))


@dataclass(frozen=True)
class Sparse:
    support_indices: tuple[int, ...]
    values: tuple[float, ...]
    kind: ClassVar[str] = "sparse"

    def __post_init__(self):
        object.__setattr__(self, "support_indices", tuple(int(i) for i in self.support_indices))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        _require(
            len(set(self.support_indices)) == len(self.support_indices),
            "support_indices",
            "indices must be unique",
        )
        _require(
            len(self.values) == len(self.support_indices),
            "values",
            f"length {len(self.values)} does not match support_indices length {len(self.support_indices)}",
        )
        _require(all(i >= 0 for i in self.support_indices), "support_indices", "indices must be >= 0")

    def coefficients(self, k: int, n: int) -> np.ndarray:
        bad = [i for i in self.support_indices if i >= k]
        _require(not bad, "support_indices", f"indices {bad} outside [0, {k})")
        pi = np.zeros(k)
        pi[list(self.support_indices)] = self.values
        return pi


@dataclass(frozen=True)
class Custom:
    values: tuple[float, ...]
    kind: ClassVar[str] = "custom"

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def coefficients(self, k: int, n: int) -> np.ndarray:
        _require(len(self.values) == k, "values", f"length {len(self.values)} does not match k={k}")
        return np.array(self.values, dtype=float)


PiScheme = Union[FixedSupport, GeometricDecay, Weak, Sparse, Custom]
PI_SCHEMES = {cls.kind: cls for cls in (FixedSupport, GeometricDecay, Weak, Sparse, Custom)}


def materialize_pi(scheme: PiScheme, k: int, n: int) -> np.ndarray:
    """First-stage coefficient vector of length ``k`` for sample size ``n``."""
    _require(k >= 1, "k", f"must be >= 1, got {k}")
    _require(n >= 1, "n", f"must be >= 1, got {n}")
    return scheme.coefficients(k, n)


def materialize_pi_matrix(scheme: PiScheme, k: int, n: int, g: int) -> np.ndarray:
    """K x G coefficient matrix; column j is the scheme's vector rolled by j."""
    base = materialize_pi(scheme, k, n)
    return np.column_stack([np.roll(base, j) for j in range(g)])


# --------------------------------------------------------------------------
# Instrument designs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class IidGaussian:
    kind: ClassVar[str] = "iid_gaussian"


@dataclass(frozen=True)
class AR1Correlated:
    """Column j equals ``rho * column(j-1) + sqrt(1 - rho^2) * noise``; rows stay iid."""

    rho: float
    kind: ClassVar[str] = "ar1_correlated"

    def __post_init__(self):
        _require(-1.0 < self.rho < 1.0, "rho", f"must lie in (-1, 1), got {self.rho}")


@dataclass(frozen=True)
class Factor:
    num_factors: int = 1
    loadings_scale: float = 1.0
    kind: ClassVar[str] = "factor"

    def __post_init__(self):
        _require(self.num_factors >= 1, "num_factors", f"must be >= 1, got {self.num_factors}")


@dataclass(frozen=True)
class Orthonormalized:
    kind: ClassVar[str] = "orthonormalized"


def _default_tau_grid() -> tuple[float, ...]:
    return tuple(float(t) for t in np.linspace(-3.0, 3.0, 32))


@dataclass(frozen=True)
class Continuum:
    """Discretised characteristic-function instruments ``exp(i tau' z)``.

    ``quadrature_weights`` default to uniform over ``tau_grid``.
    """

    base_dim: int = 1
    tau_grid: tuple[float, ...] = field(default_factory=_default_tau_grid)
    quadrature_weights: tuple[float, ...] | None = None
    kind: ClassVar[str] = "continuum"

    def __post_init__(self):
        tau = tuple(float(t) for t in self.tau_grid)
        object.__setattr__(self, "tau_grid", tau)
        _require(self.base_dim >= 1, "base_dim", f"must be >= 1, got {self.base_dim}")
        _require(len(tau) >= 1, "tau_grid", "must be non-empty")
        _require(
            all(b > a for a, b in zip(tau, tau[1:])), "tau_grid", "must be strictly increasing"
        )
        if self.quadrature_weights is None:
            weights = tuple(1.0 / len(tau) for _ in tau)
        else:
            weights = tuple(float(w) for w in self.quadrature_weights)
        _require(
            len(weights) == len(tau),
            "quadrature_weights",
            f"length {len(weights)} does not match tau_grid length {len(tau)}",
        )
        _require(all(w > 0 for w in weights), "quadrature_weights", "weights must be positive")
        _require(
            abs(sum(weights) - 1.0) <= 1e-9,
            "quadrature_weights",
            f"weights must sum to 1, got {sum(weights)!r}",
        )
        object.__setattr__(self, "quadrature_weights", weights)

    @property
    def num_columns(self) -> int:
        return 2 * len(self.tau_grid) ** self.base_dim

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Tensor-product nodes (m**b, b) and their product weights."""
        tau = np.array(self.tau_grid)
        w = np.array(self.quadrature_weights)
        nodes = np.array(list(itertools.product(tau, repeat=self.base_dim)))
        weights = np.array([np.prod(c) for c in itertools.product(w, repeat=self.base_dim)])
        return nodes, weights


InstrumentDesign = Union[IidGaussian, AR1Correlated, Factor, Orthonormalized, Continuum]
DESIGNS = {cls.kind: cls for cls in (IidGaussian, AR1Correlated, Factor, Orthonormalized, Continuum)}


def continuum_columns(base: np.ndarray, design: Continuum) -> np.ndarray:
    """Cosine block then sine block of ``tau' z``, each column scaled by sqrt(weight)."""
    nodes, weights = design.nodes()
    phase = base @ nodes.T
    root_w = np.sqrt(weights)
    return np.hstack([np.cos(phase) * root_w, np.sin(phase) * root_w])


def generate_instruments(design: InstrumentDesign, n: int, k: int, seed: SeedLike) -> np.ndarray:
    """Draw an n x k instrument matrix; deterministic given ``seed``."""
    _require(n >= 1, "n", f"must be >= 1, got {n}")
    _require(k >= 1, "k", f"must be >= 1, got {k}")
    rng = np.random.default_rng(as_seed_sequence(seed))

    if isinstance(design, IidGaussian):
        return rng.standard_normal((n, k))
    if isinstance(design, AR1Correlated):
        return _kernels.ar1_columns(rng.standard_normal((n, k)), design.rho)
    if isinstance(design, Factor):
        loadings = design.loadings_scale * rng.standard_normal((k, design.num_factors))
        factors = rng.standard_normal((n, design.num_factors))
        return factors @ loadings.T + rng.standard_normal((n, k))
    if isinstance(design, Orthonormalized):
        _require(n >= k, "k", f"orthonormalized design needs n >= k, got n={n}, k={k}")
        q, _ = np.linalg.qr(rng.standard_normal((n, k)))
        return q * np.sqrt(n)
    if isinstance(design, Continuum):
        _require(
            k == design.num_columns,
            "k",
            f"continuum design needs k = 2 * len(tau_grid)**base_dim = {design.num_columns}, got {k}",
        )
        return continuum_columns(rng.standard_normal((n, design.base_dim)), design)
    raise ConfigurationError(f"unknown instrument design {design!r}", field="design")


# --------------------------------------------------------------------------
# Full data-generating process
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DgpConfig:
    n: int
    k: int
    pi: PiScheme
    design: InstrumentDesign = field(default_factory=IidGaussian)
    g: int = 1
    delta_true: tuple[float, ...] = (1.0,)
    sigma_u: float = 1.0
    sigma_vu: tuple[float, ...] = (0.0,)
    sigma_v: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "delta_true", tuple(float(d) for d in self.delta_true))
        object.__setattr__(self, "sigma_vu", tuple(float(s) for s in self.sigma_vu))
        _require(self.n >= 1, "n", f"must be >= 1, got {self.n}")
        _require(self.k >= 1, "k", f"must be >= 1, got {self.k}")
        _require(self.g >= 1, "g", f"must be >= 1, got {self.g}")
        _require(
            len(self.delta_true) == self.g,
            "delta_true",
            f"length {len(self.delta_true)} does not match g={self.g}",
        )
        _require(
            len(self.sigma_vu) == self.g, "sigma_vu", f"length {len(self.sigma_vu)} does not match g={self.g}"
        )
        _require(self.sigma_u > 0, "sigma_u", f"must be > 0, got {self.sigma_u}")
        _require(self.sigma_v > 0, "sigma_v", f"must be > 0, got {self.sigma_v}")
        bound = self.sigma_u * self.sigma_v
        for j, s in enumerate(self.sigma_vu):
            _require(abs(s) < bound, f"sigma_vu[{j}]", f"|{s}| must be < sigma_u * sigma_v = {bound}")
        # Joint covariance must be non-singular; per-column bounds suffice only for g == 1.
        schur = self.sigma_u**2 - sum(s * s for s in self.sigma_vu) / self.sigma_v**2
        _require(
            schur > 0,
            "sigma_vu",
            "joint covariance of (u, V) is singular: sum(sigma_vu^2) must be < sigma_u^2 * sigma_v^2",
        )

    @property
    def gamma(self) -> np.ndarray:
        """Regression coefficient of V on u, ``sigma_vu / sigma_u^2``."""
        return np.array(self.sigma_vu) / self.sigma_u**2

    def error_covariance(self) -> np.ndarray:
        cov = np.zeros((self.g + 1, self.g + 1))
        cov[0, 0] = self.sigma_u**2
        cov[0, 1:] = cov[1:, 0] = self.sigma_vu
        cov[1:, 1:] = np.eye(self.g) * self.sigma_v**2
        return cov

    def pi_matrix(self, n: int | None = None) -> np.ndarray:
        return materialize_pi_matrix(self.pi, self.k, self.n if n is None else n, self.g)


@dataclass(frozen=True, eq=False)
class Dataset:
    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    truth: DgpConfig | None = None
    u: np.ndarray | None = None
    v: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x, dtype=float)
        z = np.asarray(self.z, dtype=float)
        if y.ndim != 1:
            raise DataError(f"y must be a vector, got shape {y.shape}", field="y")
        if x.ndim == 1:
            x = x[:, None]
        if z.ndim == 1:
            z = z[:, None]
        n = y.shape[0]
        for name, arr in (("x", x), ("z", z)):
            if arr.ndim != 2 or arr.shape[0] != n:
                raise DataError(f"expected {n} rows, got shape {arr.shape}", field=name)
        for name, arr in (("y", y), ("x", x), ("z", z)):
            if not np.all(np.isfinite(arr)):
                raise DataError("contains non-finite entries", field=name)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def k(self) -> int:
        return self.z.shape[1]

    @property
    def g(self) -> int:
        return self.x.shape[1]

    @property
    def v_tilde(self) -> np.ndarray | None:
        """``V - u gamma'``, available for simulated data only."""
        if self.truth is None or self.u is None or self.v is None:
            return None
        return self.v - np.outer(self.u, self.truth.gamma)


def simulate_dataset(config: DgpConfig, seed: SeedLike) -> Dataset:
    """Draw one sample from ``config``; identical (config, seed) give identical arrays."""
    z = generate_instruments(config.design, config.n, config.k, child_seed(seed, 0))
    rng = np.random.default_rng(child_seed(seed, 1))
    chol = np.linalg.cholesky(config.error_covariance())
    errors = rng.standard_normal((config.n, config.g + 1)) @ chol.T
    u = errors[:, 0]
    v = errors[:, 1:]
    x = z @ config.pi_matrix() + v
    y = x @ np.array(config.delta_true) + u
    return Dataset(y=y, x=x, z=z, truth=config, u=u, v=v)
