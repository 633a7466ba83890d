"""Matrix-variate factor models with spiked Kronecker noise.

Library layout:

* ``subspace``: eigendecompositions, orthonormal bases, subspace distances.
* ``dgp``: seeded simulation of panels with factor and noise structure.
* ``estimate``: moment matrices, projection iteration, noise mitigation,
  factor recovery and the ``fit`` orchestrator.
* ``wntest``: white-noise tests and the diagonal-path order search.
* ``forecast``: per-entry AR(1) factor forecasting and rolling evaluation.
* ``panel_io``: long-format CSV panels, imputation, JSON serialization.
* ``benchmark``: Monte-Carlo harness over scenario grids.
* ``cli``: command line entry point.
"""

from .config import EstimationConfig, resolve_test
from .dgp import (
    GroundTruth,
    SimScenario,
    common_component,
    make_loading,
    make_noise_mixer,
    noise_covariance,
    simulate_factor_var,
    simulate_panel,
)
from .estimate import (
    FactorFit,
    IterationResult,
    build_m1,
    build_m2,
    build_m_star,
    build_s1,
    build_s2,
    col_autocov,
    fit,
    iterate_loadings,
    ratio_min,
    ratio_orders,
    recover_factors,
    select_mitigation_subspace,
)
from .forecast import (
    Ar1Coefficients,
    ForecastRow,
    chain_ar1,
    fit_ar1,
    forecast_factors,
    forecast_panel,
    rolling_evaluate,
)
from .subspace import (
    EigenDecomposition,
    is_orthonormal,
    orthonormal_distance,
    projection_distance,
    random_orthonormal,
    sym_eigen,
)
from .wntest import (
    TestOutcome,
    TraceStep,
    WhitenessReport,
    cyz_max_test,
    diagonal_path_order,
    ljung_box,
    max_abs_normal_quantile,
    tsay_rank_test,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
