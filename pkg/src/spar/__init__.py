"""Sparse projected averaged regression.

Ensembles of L2-penalized GLMs fitted on screened and randomly
projected predictors, with threshold and ensemble-size selection on a
validation set or by cross-validation.
"""

from .api import fit_spar, fit_spar_cv
from .data import (
    Dataset,
    SyntheticSpec,
    generate_synthetic,
    load_csv,
    load_model,
    save_csv,
    save_model,
    serialize_model,
)
from .ensemble import (
    AveragedCoef,
    MarginalModel,
    ModelSpec,
    SparEnsemble,
    StandardizationStats,
    averaged_coef,
    build_nu_grid,
    eval_measure,
    fit_models,
    one_minus_auc,
    predict_glm,
    standardize,
    threshold_beta,
)
from .errors import (
    ConfigError,
    CvError,
    DataError,
    DomainError,
    InsufficientDataError,
    NumericError,
    ParseError,
    SingularError,
    SparError,
    VersionError,
)
from .families import (
    Family,
    GlmFit,
    deviance_eval,
    fit_penalized_glm,
    get_family,
    link_eval,
    linkinv_eval,
    loglik_eval,
    validate_response,
)
from .projection import (
    ProjectionMatrix,
    RpSpec,
    draw_goal_dims,
    gen_cw,
    gen_gaussian,
    gen_haar,
    gen_haar_select,
    gen_sparse,
    jl_min_dim,
    project,
    register_rp_plugin,
)
from .screening import (
    ScreenSpec,
    ScreeningResult,
    compute_screening,
    register_screen_plugin,
    screen_cor,
    screen_marglik,
    screen_ridge,
    select_screened,
    split_for_screening,
)
from .selection import GridCell, SelectionGrid, cross_validate, make_folds

__version__ = "0.1.0"

__all__ = [
    "AveragedCoef",
    "ConfigError",
    "CvError",
    "DataError",
    "Dataset",
    "DomainError",
    "Family",
    "GlmFit",
    "GridCell",
    "InsufficientDataError",
    "MarginalModel",
    "ModelSpec",
    "NumericError",
    "ParseError",
    "ProjectionMatrix",
    "RpSpec",
    "ScreenSpec",
    "ScreeningResult",
    "SelectionGrid",
    "SingularError",
    "SparEnsemble",
    "SparError",
    "StandardizationStats",
    "SyntheticSpec",
    "VersionError",
    "averaged_coef",
    "build_nu_grid",
    "compute_screening",
    "cross_validate",
    "deviance_eval",
    "draw_goal_dims",
    "eval_measure",
    "fit_models",
    "fit_penalized_glm",
    "fit_spar",
    "fit_spar_cv",
    "gen_cw",
    "gen_gaussian",
    "gen_haar",
    "gen_haar_select",
    "gen_sparse",
    "generate_synthetic",
    "get_family",
    "jl_min_dim",
    "link_eval",
    "linkinv_eval",
    "load_csv",
    "load_model",
    "loglik_eval",
    "make_folds",
    "one_minus_auc",
    "predict_glm",
    "project",
    "register_rp_plugin",
    "register_screen_plugin",
    "save_csv",
    "save_model",
    "screen_cor",
    "screen_marglik",
    "screen_ridge",
    "select_screened",
    "serialize_model",
    "split_for_screening",
    "standardize",
    "threshold_beta",
    "validate_response",
]
