"""mfpi: model-free prediction intervals and predictive inference tools."""

__version__ = "0.1.0"

from .stats import (  # noqa: F401
    KernelSpec,
    check_loss,
    empirical_quantile,
    kernel_weight,
    kolmogorov_pvalue,
    ks_uniform_test,
    smooth_cdf,
    t_quantile,
)
from .cdf import (  # noqa: F401
    BandwidthSelectionError,
    Dataset,
    EstimatorSpec,
    FitError,
    KernelCdf,
    OutOfSupportError,
    ParametricConditionalCdf,
    QuantileRegressionCdf,
    RankVector,
    fit_estimator,
    load_dataset_csv,
    pit_ranks,
    select_bandwidths,
)
from .intervals import (  # noqa: F401
    BootstrapResamplingError,
    ConformalAcceptanceError,
    MethodSpec,
    PredictionInterval,
    PredictorSpec,
    RootSample,
    baseline_ls_interval,
    baseline_t_interval,
    build_interval,
    conformal_pvalue,
    cp_interval,
    mfb_interval,
    point_predict,
    qe_interval,
)
from .conjecture import Decision, NullSpec, acceptance_rate, test_conjecture  # noqa: F401
from .coverage import (  # noqa: F401
    CoverageReport,
    SyntheticConfig,
    config_for_profile,
    estimate_cvp,
    gen_synthetic,
    sweep_sample_sizes,
    true_model,
)
from .var_backtest import (  # noqa: F401
    BacktestReport,
    ReturnsSeries,
    VarPair,
    build_var_pairs,
    gen_hetero_returns,
    load_returns_csv,
    realized_volatility,
    var_backtest,
    worst_cumulative_return,
)
