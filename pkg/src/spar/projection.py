"""Random projection matrices mapping q screened predictors to m << q dims.

Generators: dense gaussian, sparse +-1/sqrt(psi) entries, a one-nonzero-
per-column sketch whose diagonal can carry screening coefficients, and
orthonormal-row (Haar) matrices with an optional best-of-B2 holdout
selection.  All generators leave scaling to the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse

from .errors import ConfigError, DataError
from .families import fit_penalized_glm, linkinv_eval

_KINDS = ("gaussian", "sparse", "cw", "haar_select", "plugin")
_PLUGINS: dict = {}


def register_rp_plugin(name: str, fn) -> None:
    """Register a callable (m, index_set, snapshot, controls) -> matrix."""
    if not callable(fn):
        raise ConfigError("projection plugin must be callable")
    _PLUGINS[str(name)] = fn


def rp_plugin_names():
    return sorted(_PLUGINS)


@dataclass(frozen=True)
class RpSpec:
    """Projection family and its goal-dimension range.

    mslow defaults to ceil(log p) and msup to floor(n/2), resolved when
    the data size is known.  data_driven only affects the cw kind.
    """

    kind: str = "cw"
    psi: float = 1.0
    data_driven: bool = True
    mslow: int | None = None
    msup: int | None = None
    b2: int = 50
    holdout_frac: float = 0.25
    plugin: object = None
    controls: dict = field(default_factory=dict)

    def validated(self) -> "RpSpec":
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown projection kind {self.kind!r}; choose from {_KINDS}")
        if not 0.0 < self.psi <= 1.0:
            raise ConfigError("psi must lie in (0, 1]")
        if self.mslow is not None and self.mslow < 1:
            raise ConfigError("mslow must be >= 1")
        if self.msup is not None and self.mslow is not None and self.mslow > self.msup:
            raise ConfigError("mslow must not exceed msup")
        if self.b2 < 1:
            raise ConfigError("b2 must be >= 1")
        if not 0.0 < self.holdout_frac < 1.0:
            raise ConfigError("holdout_frac must lie strictly between 0 and 1")
        if self.kind == "plugin" and self.plugin is None:
            raise ConfigError("kind 'plugin' needs a plugin callable or name")
        return self

    def resolved(self, n: int, p: int) -> "RpSpec":
        """Fill mslow/msup defaults for n model rows and p predictors."""
        msup = self.msup if self.msup is not None else max(1, n // 2)
        mslow = self.mslow if self.mslow is not None else math.ceil(math.log(p))
        if self.mslow is None:
            # defaults must stay usable on tiny data
            mslow = max(1, min(mslow, msup))
        if mslow > msup:
            raise ConfigError(f"mslow={mslow} exceeds msup={msup}")
        return replace(self, mslow=int(mslow), msup=int(msup))


@dataclass
class ProjectionMatrix:
    """An m x q projection, stored dense or as one-entry-per-column triplets."""

    m: int
    q: int
    kind: str
    dense: np.ndarray | None = None
    rows: np.ndarray | None = None
    cols: np.ndarray | None = None
    vals: np.ndarray | None = None
    data_driven: bool = False

    @property
    def is_sparse(self) -> bool:
        return self.dense is None

    def to_dense(self) -> np.ndarray:
        if self.dense is not None:
            return np.array(self.dense, dtype=float)
        out = np.zeros((self.m, self.q))
        np.add.at(out, (self.rows, self.cols), self.vals)
        return out

    def triplets(self):
        """(rows, cols, vals) of the nonzero entries, row-major order."""
        if self.dense is None:
            return (
                np.asarray(self.rows, dtype=int),
                np.asarray(self.cols, dtype=int),
                np.asarray(self.vals, dtype=float),
            )
        rows, cols = np.nonzero(self.dense)
        return rows, cols, self.dense[rows, cols]

    def matmul(self, x_sub) -> np.ndarray:
        """Z = x_sub @ phi.T, using the sparse structure when present."""
        x_sub = np.asarray(x_sub, dtype=float)
        if x_sub.ndim != 2 or x_sub.shape[1] != self.q:
            raise DataError(
                f"projection expects {self.q} columns, got "
                f"{x_sub.shape[1] if x_sub.ndim == 2 else x_sub.shape}"
            )
        if self.dense is not None:
            return x_sub @ self.dense.T
        phi = scipy.sparse.csr_matrix(
            (self.vals, (self.rows, self.cols)), shape=(self.m, self.q)
        )
        return np.asarray((phi @ x_sub.T).T)

    def backmap(self, gamma) -> np.ndarray:
        """phi.T @ gamma, mapping reduced coefficients back to the q predictors."""
        gamma = np.asarray(gamma, dtype=float)
        if gamma.shape != (self.m,):
            raise DataError(f"gamma must have shape ({self.m},), got {gamma.shape}")
        if self.dense is not None:
            return self.dense.T @ gamma
        out = np.zeros(self.q)
        np.add.at(out, self.cols, self.vals * gamma[self.rows])
        return out

    def with_column_values(self, values) -> "ProjectionMatrix":
        """Copy with fresh per-column values; keeps the sparse structure.

        Only meaningful for the cw kind, where it refreshes the
        data-driven diagonal between cross-validation folds.
        """
        if self.dense is not None or self.kind != "cw":
            raise ConfigError("with_column_values applies to sparse cw matrices only")
        values = np.asarray(values, dtype=float)
        if values.shape != (self.q,):
            raise DataError(f"need {self.q} column values, got {values.shape}")
        return ProjectionMatrix(
            self.m,
            self.q,
            self.kind,
            rows=self.rows.copy(),
            cols=self.cols.copy(),
            vals=values.copy(),
            data_driven=self.data_driven,
        )


def jl_min_dim(n: int, eps: float, tau: float) -> int:
    """Smallest dimension preserving pairwise distances of n points.

    ceil(log(n) * (4 + 2 tau) / (eps^2/2 - eps^3/3)); the guarantee is
    (1 +- eps) distortion with probability 1 - n^(-tau) for a scaled
    gaussian projection.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    if not 0.0 < eps < 1.0:
        raise ConfigError("eps must lie strictly between 0 and 1")
    if tau <= 0:
        raise ConfigError("tau must be > 0")
    return int(math.ceil(math.log(n) * (4.0 + 2.0 * tau) / (eps**2 / 2.0 - eps**3 / 3.0)))


def draw_goal_dims(n_models: int, mslow: int, msup: int, rng) -> np.ndarray:
    """n_models iid draws from the uniform integers {mslow, ..., msup}."""
    if mslow < 1 or mslow > msup:
        raise ConfigError(f"need 1 <= mslow <= msup, got [{mslow}, {msup}]")
    return rng.integers(mslow, msup + 1, size=n_models)


def gen_gaussian(m: int, q: int, rng) -> ProjectionMatrix:
    """Dense iid N(0, 1) matrix; apply 1/sqrt(m) yourself for JL scaling."""
    _check_dims(m, q)
    return ProjectionMatrix(m, q, "gaussian", dense=rng.standard_normal((m, q)))


def gen_sparse(m: int, q: int, psi: float, rng) -> ProjectionMatrix:
    """Entries +-1/sqrt(psi) with probability psi/2 each, else 0."""
    _check_dims(m, q)
    if not 0.0 < psi <= 1.0:
        raise ConfigError("psi must lie in (0, 1]")
    u = rng.random((m, q))
    v = 1.0 / math.sqrt(psi)
    dense = np.where(u < psi / 2.0, v, np.where(u < psi, -v, 0.0))
    return ProjectionMatrix(m, q, "sparse", dense=dense)


def gen_cw(m: int, q: int, data_driven: bool, diag_values, rng) -> ProjectionMatrix:
    """One nonzero per column: a uniform target row times a diagonal value.

    Data-agnostic columns carry Rademacher signs; data-driven columns
    carry the supplied values (screening coefficients of the selected
    predictors).
    """
    _check_dims(m, q)
    rows = rng.integers(0, m, size=q)
    if data_driven:
        if diag_values is None:
            raise ConfigError("data-driven cw projection needs diagonal values")
        vals = np.asarray(diag_values, dtype=float)
        if vals.shape != (q,):
            raise DataError(f"need {q} diagonal values, got {vals.shape}")
        vals = vals.copy()
    else:
        vals = rng.integers(0, 2, size=q) * 2.0 - 1.0
    return ProjectionMatrix(
        m, q, "cw", rows=rows, cols=np.arange(q), vals=vals, data_driven=data_driven
    )


def gen_haar(m: int, q: int, rng) -> ProjectionMatrix:
    """Orthonormal rows from orthogonalizing a q x m standard normal draw."""
    _check_dims(m, q)
    if m > q:
        raise ConfigError(f"haar projection needs m <= q, got m={m}, q={q}")
    g = rng.standard_normal((q, m))
    qmat, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0  # sign fix keeps the distribution Haar
    return ProjectionMatrix(m, q, "haar", dense=(qmat * signs).T)


def gen_haar_select(
    m: int, q: int, x_sub, y, family, b2, holdout_frac, epsilon, rng
) -> ProjectionMatrix:
    """Best of b2 Haar candidates by holdout error.

    All candidates are drawn first, so b2 = 1 consumes exactly the same
    stream as gen_haar.  Each candidate is scored by refitting a
    penalized GLM on the projected training part and evaluating
    misclassification (binomial) or MSE (otherwise) on the holdout;
    ties keep the earliest candidate.
    """
    from .families import get_family

    fam = get_family(family)
    x_sub = np.asarray(x_sub, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x_sub.shape[0]
    if x_sub.shape[1] != q:
        raise DataError(f"x_sub has {x_sub.shape[1]} columns, expected {q}")
    if b2 < 1:
        raise ConfigError("b2 must be >= 1")
    candidates = [gen_haar(m, q, rng) for _ in range(b2)]
    if b2 == 1:
        return candidates[0]
    n_test = int(round(holdout_frac * n))
    if n_test < 2 or n - n_test < 3:
        raise ConfigError(
            f"holdout_frac={holdout_frac} leaves {n_test} holdout and "
            f"{n - n_test} training rows; need at least 2 and 3"
        )
    test = np.sort(rng.choice(n, size=n_test, replace=False))
    train = np.setdiff1d(np.arange(n), test)
    best_err = np.inf
    best = candidates[0]
    for cand in candidates:
        z_tr = cand.matmul(x_sub[train])
        try:
            fit = fit_penalized_glm(z_tr, y[train], fam, epsilon)
        except Exception:  # a failed candidate just drops out of the race
            continue
        mu = linkinv_eval(fam, fit.gamma0 + cand.matmul(x_sub[test]) @ fit.gamma)
        if fam.name == "binomial":
            err = float(np.mean((mu > 0.5) != (y[test] > 0.5)))
        else:
            err = float(np.mean((y[test] - mu) ** 2))
        if err < best_err:
            best_err = err
            best = cand
    return best


def project(x_sub, phi: ProjectionMatrix) -> np.ndarray:
    """Z = x_sub @ phi.T."""
    return phi.matmul(x_sub)


def make_projection(
    spec: RpSpec, m: int, index_set, rng, omega=None, x=None, y=None,
    family=None, model_epsilon=0.0,
) -> ProjectionMatrix:
    """Generate one projection for the given model's index set."""
    q = len(index_set)
    if spec.kind == "gaussian":
        return gen_gaussian(m, q, rng)
    if spec.kind == "sparse":
        return gen_sparse(m, q, spec.psi, rng)
    if spec.kind == "cw":
        diag = None
        if spec.data_driven:
            if omega is None:
                raise ConfigError("data-driven cw projection needs screening coefficients")
            diag = np.asarray(omega, dtype=float)[np.asarray(index_set, dtype=int)]
        return gen_cw(m, q, spec.data_driven, diag, rng)
    if spec.kind == "haar_select":
        if x is None or y is None:
            raise ConfigError("haar_select needs the model-fitting data")
        x_sub = np.asarray(x, dtype=float)[:, np.asarray(index_set, dtype=int)]
        return gen_haar_select(
            m, q, x_sub, y, family, spec.b2, spec.holdout_frac, model_epsilon, rng
        )
    fn = spec.plugin
    if not callable(fn):
        try:
            fn = _PLUGINS[fn]
        except KeyError:
            raise ConfigError(f"no projection plugin registered as {fn!r}") from None
    snapshot = {"x": x, "y": y, "rng": rng} if x is not None else None
    out = fn(m, np.asarray(index_set, dtype=int), snapshot, dict(spec.controls))
    return _normalize_plugin_output(out, m, q)


def _normalize_plugin_output(out, m, q):
    if isinstance(out, ProjectionMatrix):
        mat = out
    elif isinstance(out, tuple) and len(out) == 3:
        rows, cols, vals = (np.asarray(a) for a in out)
        mat = ProjectionMatrix(
            m, q, "plugin",
            rows=rows.astype(int), cols=cols.astype(int), vals=vals.astype(float),
        )
    else:
        dense = np.asarray(out, dtype=float)
        if dense.shape != (m, q):
            raise DataError(f"projection plugin returned shape {dense.shape}, expected {(m, q)}")
        mat = ProjectionMatrix(m, q, "plugin", dense=dense)
    if mat.m != m or mat.q != q:
        raise DataError(f"projection plugin returned {mat.m} x {mat.q}, expected {m} x {q}")
    if mat.dense is not None and not np.all(np.isfinite(mat.dense)):
        raise DataError("projection plugin returned non-finite entries")
    if mat.dense is None and not np.all(np.isfinite(mat.vals)):
        raise DataError("projection plugin returned non-finite entries")
    return mat


def _check_dims(m, q):
    if m < 1 or q < 1:
        raise ConfigError(f"projection dimensions must be positive, got m={m}, q={q}")
