"""Two-stage least squares, spectrally regularized 2SLS, and many-instrument diagnostics."""

__version__ = "0.1.0"

from .dgp import (  # noqa: E402
    AR1Correlated,
    Continuum,
    Custom,
    Dataset,
    DgpConfig,
    Factor,
    FixedSupport,
    GeometricDecay,
    IidGaussian,
    Orthonormalized,
    Sparse,
    Weak,
    generate_instruments,
    materialize_pi,
    simulate_dataset,
)
from .diagnostics import assumption3_checks, covariance_spectrum, effective_count, q_sequence  # noqa: E402
from .errors import ConfigurationError, DataError, IVSpectralError, ParameterError, RankError  # noqa: E402
from .estimators import (  # noqa: E402
    EigenSystem,
    EstimatorResult,
    Landweber,
    PrincipalComponents,
    SpectralCutoff,
    Tikhonov,
    eigensystem_of_gram,
    filter_factors,
    ols,
    projection_apply,
    select_alpha,
    tsls,
    tsls_regularized,
)
from .montecarlo import EstimatorSpec, ScenarioConfig, run_scenario, summarize  # noqa: E402
