"""Threshold and ensemble-size selection on a validation set or by CV.

Both paths score every (nu, nummod) pair with the chosen measure and
take the argmin, breaking ties toward the sparser model: larger nu
first, then smaller nummod.  Cross-validation refits the marginal
models per fold with the index sets and projections frozen from the
full-data fit; only the data-driven diagonal of cw projections is
refreshed from fold-level screening coefficients.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .ensemble import (
    ModelSpec,
    SparEnsemble,
    averaged_coef,
    eval_measure,
    fit_models,
    predict_glm,
    standardize,
)
from .errors import ConfigError, CvError, NumericError
from .rng import fold_stream, split_stream
from .screening import ScreenSpec, compute_screening, split_for_screening

logger = logging.getLogger(__name__)


@dataclass
class GridCell:
    nu: float
    nummod: int
    value: float  # validation measure, or CV mean across folds
    se: float  # 0 for validation grids
    active: int
    fold_values: list = field(default_factory=list)


@dataclass
class SelectionGrid:
    cells: list[GridCell]
    measure: str
    kind: str  # "validation" or "cv"

    def best_cell(self) -> GridCell:
        finite = [c for c in self.cells if np.isfinite(c.value)]
        if not finite:
            raise NumericError("no finite measure values on the selection grid")
        return min(finite, key=lambda c: (c.value, -c.nu, c.nummod))

    def best_pair(self):
        c = self.best_cell()
        return (c.nu, c.nummod)

    def one_se_cell(self) -> GridCell:
        """Fewest active coefficients among cells within one se of the best."""
        best = self.best_cell()
        thr = best.value + best.se
        eligible = [c for c in self.cells if np.isfinite(c.value) and c.value <= thr]
        return min(eligible, key=lambda c: (c.active, -c.nu, c.nummod))

    def one_se_pair(self):
        c = self.one_se_cell()
        return (c.nu, c.nummod)

    def write_csv(self, f) -> None:
        """Header nu,nummod,mean,se,active; one row per grid cell."""
        f.write("nu,nummod,mean,se,active\n")
        for c in self.cells:
            f.write(f"{c.nu!r},{c.nummod},{c.value!r},{c.se!r},{c.active}\n")


def evaluate_validation_grid(ens: SparEnsemble, x_val, y_val, measure: str) -> SelectionGrid:
    """Score every (nu, nummod) pair on held-out data (avg_type='link')."""
    cells = []
    for nummod in ens.nummods:
        for nu in ens.nus:
            c = averaged_coef(ens.models, ens.stats, ens.p, nu, nummod)
            mu = predict_glm(ens.models, ens.stats, ens.family, x_val, nu, nummod,
                             "response", "link", coef=c)
            value = eval_measure(measure, ens.family, y_val, mu)
            cells.append(GridCell(float(nu), int(nummod), value, 0.0, c.active))
    return SelectionGrid(cells, measure, "validation")


def make_folds(y, fam, nfolds: int, rng) -> list[np.ndarray]:
    """Permute into nfolds near-equal blocks, class-stratified for binomial."""
    n = len(y)
    if nfolds < 2:
        raise ConfigError("nfolds must be >= 2")
    if nfolds > n:
        raise ConfigError(f"nfolds={nfolds} exceeds the {n} observations")
    y = np.asarray(y)
    if fam.name == "binomial" and np.isin(y, (0.0, 1.0)).all():
        groups = [np.flatnonzero(y == 0), np.flatnonzero(y == 1)]
        groups = [g for g in groups if g.size]
    else:
        groups = [np.arange(n)]
    folds = [[] for _ in range(nfolds)]
    for g in groups:
        for i, part in enumerate(np.array_split(rng.permutation(g), nfolds)):
            folds[i].append(part)
    out = []
    for parts in folds:
        fold = np.sort(np.concatenate(parts)) if parts else np.zeros(0, dtype=int)
        if fold.size == 0:
            logger.warning("a cross-validation fold came up empty and is skipped")
            continue
        out.append(fold.astype(int))
    return out


def cross_validate(
    ens: SparEnsemble,
    x,
    y,
    screen_spec: ScreenSpec,
    rp_spec,
    model_spec: ModelSpec,
    nfolds: int,
    measure: str,
    master_seed: int,
    threads: int = 1,
) -> SelectionGrid:
    """K-fold CV over the frozen (nu, nummod) grid of a fitted ensemble.

    Per fold: restandardize the training part, recompute screening
    coefficients only if a data-driven cw diagonal must be refreshed,
    refit the marginal GLMs with frozen structure, and score the
    held-out part.  Cell means and standard errors (sd / sqrt(#folds))
    aggregate over the usable folds; active counts come from the
    full-data ensemble.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    fam = ens.family
    folds = make_folds(y, fam, nfolds, fold_stream(master_seed))
    inds = [m.index_set for m in ens.models]
    refresh = [m.phi.kind == "cw" and m.phi.data_driven for m in ens.models]
    need_omega = any(refresh)

    fold_measures = []  # one (n_cells,) array per usable fold
    n_all = np.arange(len(y))
    for i, test in enumerate(folds):
        train = np.setdiff1d(n_all, test)
        if fam.name == "binomial" and np.unique(y[train]).size < 2:
            logger.warning("fold %d: training response is constant; fold skipped", i)
            continue
        if measure == "1-auc" and np.unique(y[test]).size < 2:
            logger.warning("fold %d: held-out response is one-class; fold skipped", i)
            continue
        x_std, y_std, stats = standardize(x[train], y[train], fam)
        screen_rows, model_rows = split_for_screening(
            len(train), screen_spec.split_data_prop, split_stream(master_seed, i + 1)
        )
        rpms = [m.phi for m in ens.models]
        if need_omega:
            sr = compute_screening(x_std[screen_rows], y_std[screen_rows], fam,
                                   screen_spec.resolved(len(train)))
            rpms = [
                phi.with_column_values(sr.omega[idx]) if r else phi
                for phi, idx, r in zip(rpms, inds, refresh)
            ]
        models = fit_models(
            x_std, y_std, fam, None, screen_spec, rp_spec, model_spec,
            len(ens.models), master_seed, model_rows=model_rows,
            inds=inds, rpms=rpms, threads=threads,
        )
        vals = []
        for nummod in ens.nummods:
            for nu in ens.nus:
                mu = predict_glm(models, stats, fam, x[test], nu, nummod, "response", "link")
                vals.append(eval_measure(measure, fam, y[test], mu))
        fold_measures.append(np.asarray(vals))

    if len(fold_measures) < 2:
        raise CvError(
            f"only {len(fold_measures)} usable folds out of {len(folds)}; need at least 2"
        )
    stacked = np.vstack(fold_measures)  # (usable folds, cells)
    means = stacked.mean(axis=0)
    ses = stacked.std(axis=0, ddof=1) / np.sqrt(stacked.shape[0])

    cells = []
    pos = 0
    for nummod in ens.nummods:
        for nu in ens.nus:
            active = averaged_coef(ens.models, ens.stats, ens.p, nu, nummod).active
            cells.append(
                GridCell(float(nu), int(nummod), float(means[pos]), float(ses[pos]),
                         active, stacked[:, pos].tolist())
            )
            pos += 1
    return SelectionGrid(cells, measure, "cv")
