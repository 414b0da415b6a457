"""Ensemble of screened, randomly projected marginal GLMs.

The fitting loop per model k: draw an index set of screened predictors,
draw a goal dimension, draw a projection, fit a penalized GLM on the
projected predictors, and map the reduced coefficients back.  Averaging
over the first nummod models after hard thresholding at nu gives the
final coefficient vector on the original predictor scale.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.stats

from .errors import (
    ConfigError,
    DataError,
    DomainError,
    InsufficientDataError,
    NumericError,
    SingularError,
)
from .families import (
    Family,
    deviance_eval,
    fit_penalized_glm,
    get_family,
    link_eval,
    linkinv_eval,
    validate_response,
)
from .projection import ProjectionMatrix, RpSpec, draw_goal_dims, make_projection, project
from .rng import DIM_DRAW, PHI_DRAW, SCREEN_DRAW, model_stream
from .screening import ScreeningResult, ScreenSpec, select_screened

logger = logging.getLogger(__name__)

MEASURES = ("deviance", "mse", "mae", "class", "1-auc")


@dataclass(frozen=True)
class ModelSpec:
    """Penalty and IRLS budget for the marginal GLM fits.

    epsilon=None picks the family default: 0 for gaussian, 1e-4 * n for
    binomial and poisson.
    """

    epsilon: float | None = None
    max_iter: int = 100
    tol: float = 1e-8

    def validated(self) -> "ModelSpec":
        if self.epsilon is not None and self.epsilon < 0:
            raise ConfigError("model epsilon must be >= 0")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if self.tol <= 0:
            raise ConfigError("tol must be > 0")
        return self

    def resolve_epsilon(self, fam: Family, n_rows: int) -> float:
        if self.epsilon is not None:
            return float(self.epsilon)
        return 0.0 if fam.name == "gaussian" else 1e-4 * n_rows


@dataclass
class StandardizationStats:
    x_mean: np.ndarray
    x_sd: np.ndarray  # sample sd (ddof=1); constant columns recorded as 1
    y_mean: float  # 0 for non-gaussian families
    y_sd: float  # 1 for non-gaussian families
    constant_cols: np.ndarray


def standardize(x, y, family):
    """Column-standardize x and, for gaussian, y.

    Returns (x_std, y_std, stats).  Constant columns become exact zero
    columns and are flagged in stats.constant_cols.
    """
    fam = get_family(family)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2:
        raise DataError("x must be a 2-D array")
    n, p = x.shape
    if len(y) != n:
        raise DataError(f"x has {n} rows but y has {len(y)} entries")
    if n < 3:
        raise InsufficientDataError("need at least 3 observations")
    if not np.all(np.isfinite(x)):
        bad = np.argwhere(~np.isfinite(x))[0]
        raise DataError(f"non-finite predictor at row {bad[0]}, column {bad[1]}")
    validate_response(fam, y)

    x_mean = x.mean(axis=0)
    x_sd = x.std(axis=0, ddof=1)
    const = np.flatnonzero(np.ptp(x, axis=0) == 0)
    sd_safe = np.where(x_sd > 0, x_sd, 1.0)
    sd_safe[const] = 1.0
    x_std = (x - x_mean) / sd_safe
    if const.size:
        x_std[:, const] = 0.0

    if fam.name == "gaussian":
        y_mean = float(y.mean())
        y_sd = float(y.std(ddof=1))
        if y_sd == 0:
            y_sd = 1.0
        y_std = (y - y_mean) / y_sd
    else:
        y_mean, y_sd = 0.0, 1.0
        y_std = y.copy()
    stats = StandardizationStats(x_mean, sd_safe, y_mean, y_sd, const)
    return x_std, y_std, stats


@dataclass
class MarginalModel:
    index_set: np.ndarray  # predictor indices this model sees
    phi: ProjectionMatrix
    gamma0: float
    gamma: np.ndarray
    converged: bool
    beta_vals: np.ndarray  # phi.T @ gamma, aligned with index_set
    failed: bool = False  # an exception (not mere non-convergence) hit the fit

    @property
    def m(self) -> int:
        return self.phi.m

    def beta_dense(self, p: int) -> np.ndarray:
        out = np.zeros(p)
        out[self.index_set] = self.beta_vals
        return out


def fit_models(
    x_std,
    y_std,
    fam: Family,
    screen_result: ScreeningResult | None,
    screen_spec: ScreenSpec,
    rp_spec: RpSpec,
    model_spec: ModelSpec,
    n_models: int,
    master_seed: int,
    model_rows=None,
    inds=None,
    rpms=None,
    threads: int = 1,
) -> list[MarginalModel]:
    """Fit the marginal models (algorithm step 4).

    Supplied inds/rpms are honored verbatim; otherwise each model draws
    its own index set, goal dimension and projection from streams keyed
    by (seed, model index, purpose), so results do not depend on the
    thread count.  A model whose solve fails is recorded with zero
    coefficients; only all models failing raises.
    """
    n, p = x_std.shape
    rows = np.arange(n) if model_rows is None else np.asarray(model_rows, dtype=int)
    x_fit = x_std[rows]
    y_fit = y_std[rows]
    eps = model_spec.resolve_epsilon(fam, len(rows))
    if inds is not None and len(inds) < n_models:
        raise ConfigError(f"{len(inds)} index sets supplied for {n_models} models")
    if rpms is not None and len(rpms) < n_models:
        raise ConfigError(f"{len(rpms)} projections supplied for {n_models} models")
    if inds is None and screen_result is None:
        raise ConfigError("screening coefficients required when index sets are not supplied")

    def fit_one(k: int) -> MarginalModel:
        if inds is not None:
            idx = np.asarray(inds[k], dtype=int)
            if idx.size == 0 or idx.min() < 0 or idx.max() >= p:
                raise ConfigError(f"model {k}: supplied index set out of range")
        else:
            idx = select_screened(screen_result, screen_spec, model_stream(master_seed, k, SCREEN_DRAW))
        q = idx.size
        if rpms is not None and rpms[k] is not None:
            phi = rpms[k]
            if phi.q != q:
                raise ConfigError(f"model {k}: projection has q={phi.q}, index set has {q}")
        else:
            m_k = int(draw_goal_dims(1, rp_spec.mslow, rp_spec.msup, model_stream(master_seed, k, DIM_DRAW))[0])
            m_k = max(1, min(m_k, q))  # more goal dims than inputs adds nothing
            omega = screen_result.omega if screen_result is not None else None
            phi = make_projection(
                rp_spec, m_k, idx, model_stream(master_seed, k, PHI_DRAW),
                omega=omega, x=x_fit, y=y_fit, family=fam, model_epsilon=eps,
            )
        z = project(x_fit[:, idx], phi)
        try:
            try:
                fit = fit_penalized_glm(z, y_fit, fam, eps, model_spec.max_iter, model_spec.tol)
            except SingularError:
                if eps > 0:
                    raise
                retry_eps = 1e-4 * len(rows)
                fit = fit_penalized_glm(z, y_fit, fam, retry_eps, model_spec.max_iter, model_spec.tol)
        except (SingularError, NumericError, DomainError, np.linalg.LinAlgError, FloatingPointError) as exc:
            logger.warning("model %d failed (%s); recording zero coefficients", k, exc)
            return MarginalModel(idx, phi, 0.0, np.zeros(phi.m), False, np.zeros(q), failed=True)
        return MarginalModel(idx, phi, fit.gamma0, fit.gamma, fit.converged, phi.backmap(fit.gamma))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            models = list(pool.map(fit_one, range(n_models)))
    else:
        models = [fit_one(k) for k in range(n_models)]
    if all(m.failed for m in models):
        raise NumericError("all marginal models failed to fit")
    return models


def build_nu_grid(models, nnu: int, explicit=None) -> np.ndarray:
    """Threshold grid: {0} plus nnu-1 quantiles of the nonzero |beta|.

    An explicit grid is sorted and deduplicated instead.  If every
    coefficient is zero the grid degenerates to {0} with a warning.
    """
    if explicit is not None:
        nus = np.unique(np.asarray(explicit, dtype=float))
        if nus.size == 0:
            raise ConfigError("explicit nu grid is empty")
        if not np.all(np.isfinite(nus)) or nus[0] < 0:
            raise ConfigError("nu values must be finite and >= 0")
        return nus
    if nnu < 1:
        raise ConfigError("nnu must be >= 1")
    vals = np.concatenate([np.abs(m.beta_vals) for m in models]) if models else np.zeros(0)
    vals = vals[vals > 0]
    if vals.size == 0:
        logger.warning("all marginal coefficients are zero; nu grid degenerates to {0}")
        return np.zeros(1)
    if nnu == 1:
        return np.zeros(1)
    qs = np.quantile(vals, np.arange(1, nnu) / nnu)
    return np.unique(np.concatenate([[0.0], qs]))


def threshold_beta(beta, nu: float) -> np.ndarray:
    """Zero out entries with |beta_j| < nu (strict, so |beta_j| = nu survives)."""
    if nu < 0:
        raise ConfigError("nu must be >= 0")
    out = np.array(beta, dtype=float)
    out[np.abs(out) < nu] = 0.0
    return out


@dataclass
class AveragedCoef:
    """Destandardized ensemble coefficients at one (nu, nummod) pair."""

    intercept: float
    beta: np.ndarray
    nu: float
    nummod: int
    active: int


def averaged_coef(models, stats: StandardizationStats, p: int, nu: float, nummod: int) -> AveragedCoef:
    """Average the first nummod thresholded models and destandardize.

    beta_orig_j = beta_std_j * y_sd / x_sd_j and the intercept absorbs
    the centering:  y_mean + y_sd * mean(gamma0) - sum_j beta_orig_j * x_mean_j.
    The non-gaussian sentinels y_mean=0, y_sd=1 make the same formula
    exact for all families.
    """
    if not 1 <= nummod <= len(models):
        raise ConfigError(f"nummod must lie in [1, {len(models)}], got {nummod}")
    if nu < 0:
        raise ConfigError("nu must be >= 0")
    acc = np.zeros(p)
    g0 = 0.0
    for model in models[:nummod]:
        acc[model.index_set] += threshold_beta(model.beta_vals, nu)
        g0 += model.gamma0
    beta_std = acc / nummod
    g0 /= nummod
    beta = beta_std * stats.y_sd / stats.x_sd
    intercept = stats.y_mean + stats.y_sd * g0 - float(beta @ stats.x_mean)
    return AveragedCoef(intercept, beta, float(nu), int(nummod), int(np.count_nonzero(beta)))


def predict_glm(
    models,
    stats: StandardizationStats,
    fam: Family,
    x_new,
    nu: float,
    nummod: int,
    type: str = "response",
    avg_type: str = "link",
    coef: AveragedCoef | None = None,
) -> np.ndarray:
    """Ensemble predictions on new data.

    avg_type="link" averages coefficients first and pushes the linear
    predictor through the inverse link; "response" averages the
    per-model response-scale predictions (for type="link" the link of
    that mean is returned).  The two coincide for gaussian/identity.
    """
    if type not in ("response", "link"):
        raise ConfigError("type must be 'response' or 'link'")
    if avg_type not in ("link", "response"):
        raise ConfigError("avg_type must be 'link' or 'response'")
    x_new = np.asarray(x_new, dtype=float)
    if x_new.ndim != 2:
        raise DataError("x_new must be a 2-D array")
    p = len(stats.x_mean)
    if x_new.shape[1] != p:
        raise DataError(f"x_new has {x_new.shape[1]} columns, model expects {p}")
    if not np.all(np.isfinite(x_new)):
        raise DataError("non-finite entries in x_new")

    if coef is not None or avg_type == "link":
        c = coef if coef is not None else averaged_coef(models, stats, p, nu, nummod)
        eta = c.intercept + x_new @ c.beta
        return eta if type == "link" else linkinv_eval(fam, eta)

    if not 1 <= nummod <= len(models):
        raise ConfigError(f"nummod must lie in [1, {len(models)}], got {nummod}")
    mu_sum = np.zeros(x_new.shape[0])
    for model in models[:nummod]:
        beta_std = np.zeros(p)
        beta_std[model.index_set] = threshold_beta(model.beta_vals, nu)
        beta = beta_std * stats.y_sd / stats.x_sd
        intercept = stats.y_mean + stats.y_sd * model.gamma0 - float(beta @ stats.x_mean)
        mu_sum += linkinv_eval(fam, intercept + x_new @ beta)
    mu = mu_sum / nummod
    return link_eval(fam, mu) if type == "link" else mu


def eval_measure(measure: str, fam: Family, y, mu) -> float:
    """Evaluate a selection measure on response-scale predictions."""
    if measure not in MEASURES:
        raise ConfigError(f"unknown measure {measure!r}; choose from {MEASURES}")
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if y.shape != mu.shape:
        raise DataError(f"length mismatch: y has {y.shape}, predictions have {mu.shape}")
    if measure in ("class", "1-auc") and fam.name != "binomial":
        raise ConfigError(f"measure {measure!r} requires the binomial family")
    if measure == "deviance":
        return deviance_eval(fam, y, mu)
    if measure == "mse":
        return float(np.mean((y - mu) ** 2))
    if measure == "mae":
        return float(np.mean(np.abs(y - mu)))
    if measure == "class":
        return float(np.mean((mu > 0.5) != (y > 0.5)))
    return one_minus_auc(y, mu)


def one_minus_auc(y, mu) -> float:
    """1 - AUC via the rank form of the Mann-Whitney statistic, ties 1/2."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    pos = y == 1
    n1 = int(pos.sum())
    n0 = len(y) - n1
    if n1 == 0 or n0 == 0:
        raise DataError("AUC needs both classes present")
    ranks = scipy.stats.rankdata(mu)
    auc = (float(ranks[pos].sum()) - n1 * (n1 + 1) / 2.0) / (n1 * n0)
    return 1.0 - auc


@dataclass
class SparEnsemble:
    """A fitted ensemble plus everything needed to reuse it.

    The original data are not stored; predictions only need the
    standardization stats and the per-model (index_set, phi, gamma).
    """

    family: Family
    stats: StandardizationStats
    models: list[MarginalModel]
    nus: np.ndarray
    nummods: tuple[int, ...]
    p: int
    measure: str
    master_seed: int
    config: dict = field(default_factory=dict)
    grid: object = None  # SelectionGrid, attached by the selection step
    best: tuple[float, int] | None = None  # (nu, nummod)
    one_se: tuple[float, int] | None = None
    cv: bool = False

    def _pick(self, nu, nummod, opt_par):
        if opt_par not in ("best", "1se"):
            raise ConfigError("opt_par must be 'best' or '1se'")
        chosen = self.one_se if opt_par == "1se" else self.best
        if (nu is None or nummod is None) and chosen is None:
            raise ConfigError(f"no {opt_par!r} pair available; pass nu and nummod explicitly")
        return (
            float(chosen[0]) if nu is None else float(nu),
            int(chosen[1]) if nummod is None else int(nummod),
        )

    def coef(self, nu=None, nummod=None, opt_par="best") -> AveragedCoef:
        nu, nummod = self._pick(nu, nummod, opt_par)
        return averaged_coef(self.models, self.stats, self.p, nu, nummod)

    def predict(self, x_new, type="response", avg_type="link", nu=None,
                nummod=None, coef=None, opt_par="best") -> np.ndarray:
        if coef is None:
            nu, nummod = self._pick(nu, nummod, opt_par)
        else:
            nu, nummod = coef.nu, coef.nummod
        return predict_glm(self.models, self.stats, self.family, x_new,
                           nu, nummod, type, avg_type, coef)

    def coef_matrix(self) -> np.ndarray:
        """p x M matrix of standardized pre-threshold coefficients."""
        out = np.zeros((self.p, len(self.models)))
        for k, model in enumerate(self.models):
            out[model.index_set, k] = model.beta_vals
        return out
