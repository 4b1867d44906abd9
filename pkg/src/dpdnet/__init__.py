"""Robust feed-forward regression by minimum density power divergence.

The estimator minimizes a density-power objective over the weights of a
feed-forward network and a scale parameter jointly, downweighting
observations the current fit finds implausible. beta in [0, 1] trades
efficiency (beta = 0 recovers maximum likelihood) against robustness.
"""

from .errors import (
    GAUSSIAN,
    LAPLACE,
    LOGISTIC,
    MODELS,
    ErrorModel,
    GaussianModel,
    IntegralConvergenceError,
    LaplaceModel,
    LogisticModel,
    c22_centered,
    get_model,
)
from .loss import (
    DpdConfig,
    EtaPoint,
    grad_sigma_loss,
    grad_theta_loss,
    loss,
    loss_at_residuals,
    v_beta,
)
from .network import (
    GELU,
    IDENTITY,
    KINK_HALF,
    KINK_ZERO,
    RELU,
    SIGMOID,
    TANH,
    Activation,
    CheckpointFormatError,
    NetworkSpec,
    ShapeError,
    forward,
    glorot_init,
    grad_theta,
    jacobian,
    load_checkpoint,
    mlp,
    pack,
    save_checkpoint,
    smooth_network,
    softplus,
    unpack,
)
from .training import (
    DegenerateDenominatorError,
    FitResult,
    NonFiniteLossError,
    TrainConfig,
    fit,
    init_sigma_mad,
    predict,
    sigma_update_fixed_point,
    sigma_update_qn,
    write_trace_csv,
)
from .competitors import (
    CompetitorLoss,
    comp_loss,
    fit_competitor,
    huber,
    lmls,
    lta,
    lts,
    mae,
    mse,
    tukey,
)
from .influence import (
    IfCurve,
    IfLimitReport,
    IfSetup,
    InadmissiblePointError,
    admissible_check,
    curve_predictor,
    curve_sigma,
    curve_theta,
    if_predictor,
    if_relu_limit,
    if_sigma,
    if_theta,
    jacobian_matrix,
    one_node_example_setup,
    write_curve_csv,
)
from .benchmarks import (
    CsvFormatError,
    CvReport,
    Dataset,
    DgpSpec,
    Method,
    MetricReport,
    TabularData,
    breakdown_stress,
    competitor_method,
    default_network,
    dpd_method,
    eval_phi,
    gen_dataset,
    kfold_cv,
    load_csv,
    parse_methods,
    run_replications,
    tmse,
    write_metadata,
    write_results_csv,
)

__version__ = "0.1.0"

__all__ = [
    "GAUSSIAN", "LAPLACE", "LOGISTIC", "MODELS", "ErrorModel", "GaussianModel",
    "LaplaceModel", "LogisticModel", "IntegralConvergenceError", "get_model",
    "c22_centered",
    "DpdConfig", "EtaPoint", "loss", "loss_at_residuals", "v_beta",
    "grad_theta_loss", "grad_sigma_loss",
    "Activation", "NetworkSpec", "ShapeError", "CheckpointFormatError",
    "IDENTITY", "SIGMOID", "TANH", "RELU", "GELU", "softplus",
    "KINK_ZERO", "KINK_HALF", "mlp", "forward", "grad_theta", "jacobian",
    "glorot_init", "pack", "unpack", "smooth_network",
    "save_checkpoint", "load_checkpoint",
    "TrainConfig", "FitResult", "fit", "predict", "init_sigma_mad",
    "sigma_update_qn", "sigma_update_fixed_point", "write_trace_csv",
    "NonFiniteLossError", "DegenerateDenominatorError",
    "CompetitorLoss", "mse", "mae", "lmls", "huber", "tukey", "lts", "lta",
    "comp_loss", "fit_competitor",
    "IfSetup", "IfCurve", "IfLimitReport", "InadmissiblePointError",
    "if_theta", "if_sigma", "if_predictor", "admissible_check",
    "curve_theta", "curve_sigma", "curve_predictor", "if_relu_limit",
    "jacobian_matrix", "one_node_example_setup", "write_curve_csv",
    "DgpSpec", "Dataset", "Method", "MetricReport", "CvReport", "TabularData",
    "CsvFormatError", "eval_phi", "default_network", "gen_dataset", "tmse",
    "dpd_method", "competitor_method", "parse_methods", "run_replications",
    "breakdown_stress", "kfold_cv", "load_csv", "write_results_csv",
    "write_metadata",
    "__version__",
]
