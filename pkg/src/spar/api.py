"""User-facing fitting entry points."""

from __future__ import annotations

import logging

import numpy as np

from .ensemble import (
    MEASURES,
    ModelSpec,
    SparEnsemble,
    build_nu_grid,
    fit_models,
    get_family,
    standardize,
)
from .errors import ConfigError
from .projection import RpSpec
from .rng import split_stream
from .screening import ScreenSpec, compute_screening, split_for_screening
from .selection import cross_validate, evaluate_validation_grid

logger = logging.getLogger(__name__)


def _check_measure(measure, fam):
    if measure not in MEASURES:
        raise ConfigError(f"unknown measure {measure!r}; choose from {MEASURES}")
    if measure in ("class", "1-auc") and fam.name != "binomial":
        raise ConfigError(f"measure {measure!r} requires the binomial family")


def _check_nummods(nummods):
    nummods = tuple(int(m) for m in nummods)
    if not nummods or any(m < 1 for m in nummods):
        raise ConfigError("nummods must be a non-empty collection of positive ints")
    return nummods


def _config_echo(fam, screen, rp, model, nnu, nus, nummods, measure, seed):
    def plugin_name(obj):
        if obj is None:
            return None
        return obj if isinstance(obj, str) else getattr(obj, "__name__", "plugin")

    return {
        "family": fam.name,
        "link": fam.link,
        "screen": {
            "method": screen.method,
            "nscreen": screen.nscreen,
            "selection_type": screen.selection_type,
            "split_data_prop": screen.split_data_prop,
            "epsilon": screen.epsilon,
            "plugin": plugin_name(screen.plugin),
        },
        "rp": {
            "kind": rp.kind,
            "psi": rp.psi,
            "data_driven": rp.data_driven,
            "mslow": rp.mslow,
            "msup": rp.msup,
            "b2": rp.b2,
            "holdout_frac": rp.holdout_frac,
            "plugin": plugin_name(rp.plugin),
        },
        "model": {"epsilon": model.epsilon, "max_iter": model.max_iter, "tol": model.tol},
        "nnu": nnu,
        "nus": None if nus is None else [float(v) for v in np.atleast_1d(nus)],
        "nummods": list(nummods),
        "measure": measure,
        "seed": int(seed),
        # the worker count is an execution knob, not part of the model:
        # serialized output must not depend on it
    }


def _fit_ensemble_only(x, y, fam, screen, rp, model, nnu, nus, nummods,
                       measure, inds, rpms, seed, threads):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x_std, y_std, stats = standardize(x, y, fam)
    n, p = x.shape
    screen = screen.resolved(n)
    screen_rows, model_rows = split_for_screening(
        n, screen.split_data_prop, split_stream(seed, 0)
    )
    rp = rp.resolved(len(model_rows), p)

    rp_needs_omega = rp.kind == "cw" and rp.data_driven and rpms is None
    need_omega = inds is None or rp_needs_omega
    screen_result = None
    if need_omega:
        screen_result = compute_screening(x_std[screen_rows], y_std[screen_rows], fam, screen)

    models = fit_models(
        x_std, y_std, fam, screen_result, screen, rp, model,
        max(nummods), seed, model_rows=model_rows, inds=inds, rpms=rpms,
        threads=threads,
    )
    nu_grid = build_nu_grid(models, nnu, nus)
    config = _config_echo(fam, screen, rp, model, nnu, nus, nummods, measure, seed)
    ens = SparEnsemble(
        family=fam, stats=stats, models=models, nus=nu_grid, nummods=nummods,
        p=p, measure=measure, master_seed=int(seed), config=config,
    )
    return ens, screen, rp


def fit_spar(
    x,
    y,
    family="gaussian",
    screen: ScreenSpec | None = None,
    rp: RpSpec | None = None,
    model: ModelSpec | None = None,
    xval=None,
    yval=None,
    nnu: int = 20,
    nus=None,
    nummods=(20,),
    measure: str = "deviance",
    inds=None,
    rpms=None,
    seed: int = 0,
    threads: int = 1,
) -> SparEnsemble:
    """Fit the ensemble and select (nu, nummod) on a validation set.

    Without xval/yval the training data double as validation data,
    which biases the selection toward denser models; a warning is
    logged.  Returns a SparEnsemble with the selection grid attached
    and best = (nu_best, nummod_best).
    """
    fam = get_family(family)
    _check_measure(measure, fam)
    nummods = _check_nummods(nummods)
    screen = (screen or ScreenSpec()).validated()
    rp = (rp or RpSpec()).validated()
    model = (model or ModelSpec()).validated()
    ens, _, _ = _fit_ensemble_only(
        x, y, fam, screen, rp, model, nnu, nus, nummods, measure, inds, rpms, seed, threads
    )
    if xval is None or yval is None:
        logger.warning("no validation data supplied; selecting on the training data")
        xval, yval = x, y
    grid = evaluate_validation_grid(ens, np.asarray(xval, dtype=float),
                                    np.asarray(yval, dtype=float), measure)
    ens.grid = grid
    ens.best = grid.best_pair()
    return ens


def fit_spar_cv(
    x,
    y,
    family="gaussian",
    screen: ScreenSpec | None = None,
    rp: RpSpec | None = None,
    model: ModelSpec | None = None,
    nfolds: int = 10,
    nnu: int = 20,
    nus=None,
    nummods=(20,),
    measure: str = "deviance",
    seed: int = 0,
    threads: int = 1,
) -> SparEnsemble:
    """Fit on the full data, then select (nu, nummod) by k-fold CV.

    The full-data fit freezes the index sets, projections and nu grid;
    folds only refit the marginal GLMs (and refresh data-driven cw
    diagonals).  Returns a SparEnsemble with best and the one-standard-
    error pair one_se.
    """
    fam = get_family(family)
    _check_measure(measure, fam)
    nummods = _check_nummods(nummods)
    screen = (screen or ScreenSpec()).validated()
    rp = (rp or RpSpec()).validated()
    model = (model or ModelSpec()).validated()
    ens, screen_r, rp_r = _fit_ensemble_only(
        x, y, fam, screen, rp, model, nnu, nus, nummods, measure, None, None, seed, threads
    )
    ens.config["nfolds"] = int(nfolds)
    grid = cross_validate(ens, x, y, screen_r, rp_r, model, nfolds, measure, seed, threads)
    ens.grid = grid
    ens.best = grid.best_pair()
    ens.one_se = grid.one_se_pair()
    ens.cv = True
    return ens
