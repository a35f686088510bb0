"""First-order optimization for composite objectives F(x) = g(x) + h(x)
where h is a separable, piecewise convex (possibly nonconvex) regularizer.
"""

from .certificate import CertificateError, StepSizeCertificate, certify_step_size
from .harness import (
    ExperimentConfig,
    IdxFormatError,
    Report,
    SolverSpec,
    build_problem,
    fit_rate,
    load_csv,
    load_idx,
    run_experiment,
    subsample_binary,
    synth,
    write_idx,
)
from .kernels import ProxKernel
from .piecewise import (
    Affine,
    Constant,
    CustomShape,
    Endpoint,
    Piece,
    PieceSpec,
    Quadratic,
    ScaledAbs,
    PiecewiseBuildError,
    PiecewiseFn,
    SurrogateFn,
    build_piecewise,
    capped_l1,
    from_json,
    indicator_penalty,
    l0_penalty,
    l1_penalty,
    leaky_capped_l1,
    to_json,
    zero_penalty,
)
from .prox import ProxError, minimizer_halfwidth, prox_oracle, prox_surrogate, prox_true, prox_vector
from .smooth import Dataset, SmoothLoss, least_squares, logistic_loss, spectral_norm
from .solvers import (
    Problem,
    SolverError,
    Trace,
    apg_monotone,
    default_step_size,
    estimate_G,
    extrapolate,
    nce,
    pgd,
    ppgd,
    project_piecewise,
    stationarity_residual,
    surrogate_objective,
    tk_next,
)

__version__ = "0.1.0"

__all__ = [
    "CertificateError",
    "StepSizeCertificate",
    "certify_step_size",
    "ExperimentConfig",
    "IdxFormatError",
    "Report",
    "SolverSpec",
    "build_problem",
    "fit_rate",
    "load_csv",
    "load_idx",
    "run_experiment",
    "subsample_binary",
    "synth",
    "write_idx",
    "ProxKernel",
    "Affine",
    "Constant",
    "CustomShape",
    "Endpoint",
    "Piece",
    "PieceSpec",
    "Quadratic",
    "ScaledAbs",
    "PiecewiseBuildError",
    "PiecewiseFn",
    "SurrogateFn",
    "build_piecewise",
    "capped_l1",
    "from_json",
    "indicator_penalty",
    "l0_penalty",
    "l1_penalty",
    "leaky_capped_l1",
    "to_json",
    "zero_penalty",
    "ProxError",
    "minimizer_halfwidth",
    "prox_oracle",
    "prox_surrogate",
    "prox_true",
    "prox_vector",
    "Dataset",
    "SmoothLoss",
    "least_squares",
    "logistic_loss",
    "spectral_norm",
    "Problem",
    "SolverError",
    "Trace",
    "apg_monotone",
    "default_step_size",
    "estimate_G",
    "extrapolate",
    "nce",
    "pgd",
    "ppgd",
    "project_piecewise",
    "stationarity_residual",
    "surrogate_objective",
    "tk_next",
]
