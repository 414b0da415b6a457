"""Data generation, CSV handling and model persistence.

CSV parsing is strict: every cell must be a finite number and every row
must have the same width, otherwise a ParseError points at the row and
column.  Models persist as versioned JSON; floats round-trip exactly
through repr, so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .ensemble import (
    MarginalModel,
    SparEnsemble,
    StandardizationStats,
)
from .errors import ConfigError, DataError, ParseError, VersionError
from .families import get_family, linkinv_eval
from .projection import ProjectionMatrix
from .selection import GridCell, SelectionGrid

MODEL_FORMAT_VERSION = "1.0"


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray | None = None
    colnames: list[str] | None = None
    x_test: np.ndarray | None = None
    y_test: np.ndarray | None = None


@dataclass
class SyntheticSpec:
    """Recipe for a dense-noise regression problem with sparse truth.

    Defaults reproduce the reference setup: n=200, p=2000, the first
    100 coefficients drawn from {-3,-2,-1,1,2,3}, intercept 1 and noise
    variance 83.
    """

    n: int = 200
    p: int = 2000
    n_active: int = 100
    mu: float = 1.0
    sigma2: float = 83.0
    coef_pool: tuple = (-3.0, -2.0, -1.0, 1.0, 2.0, 3.0)
    active_positions: str = "first"  # or "random"
    family: str = "gaussian"
    rho: float = 0.0  # AR(1) correlation between neighboring predictors
    n_test: int = 0

    def validated(self) -> "SyntheticSpec":
        if self.n < 1 or self.p < 1:
            raise ConfigError("n and p must be positive")
        if not 0 <= self.n_active <= self.p:
            raise ConfigError("n_active must lie in [0, p]")
        if self.sigma2 <= 0:
            raise ConfigError("sigma2 must be > 0")
        if not self.coef_pool or any(v == 0 for v in self.coef_pool):
            raise ConfigError("coef_pool must be non-empty and exclude 0")
        if self.active_positions not in ("first", "random"):
            raise ConfigError("active_positions must be 'first' or 'random'")
        if not 0.0 <= self.rho < 1.0:
            raise ConfigError("rho must lie in [0, 1)")
        if self.n_test < 0:
            raise ConfigError("n_test must be >= 0")
        get_family(self.family)
        return self


def generate_synthetic(spec: SyntheticSpec, seed: int):
    """Draw a data set from the recipe.

    Returns (Dataset, truth) where truth records mu, sigma2, the full
    coefficient vector and the active positions.  Draw order: active
    positions, coefficient values, predictors, then noise.
    """
    spec = spec.validated()
    fam = get_family(spec.family)
    rng = np.random.default_rng(int(seed))
    beta = np.zeros(spec.p)
    if spec.active_positions == "first":
        active = np.arange(spec.n_active)
    else:
        active = np.sort(rng.choice(spec.p, size=spec.n_active, replace=False))
    beta[active] = rng.choice(np.asarray(spec.coef_pool, dtype=float), size=spec.n_active)

    n_all = spec.n + spec.n_test
    x = rng.standard_normal((n_all, spec.p))
    if spec.rho > 0:
        # AR(1) across columns, unit marginal variance
        scale = math.sqrt(1.0 - spec.rho**2)
        for j in range(1, spec.p):
            x[:, j] = spec.rho * x[:, j - 1] + scale * x[:, j]
    eta = spec.mu + x @ beta
    if fam.name == "gaussian":
        y = eta + rng.normal(0.0, math.sqrt(spec.sigma2), size=n_all)
    elif fam.name == "binomial":
        y = rng.binomial(1, linkinv_eval(fam, eta)).astype(float)
    else:
        y = rng.poisson(linkinv_eval(fam, eta)).astype(float)

    ds = Dataset(
        x=x[: spec.n],
        y=y[: spec.n],
        colnames=["y"] + [f"x{j + 1}" for j in range(spec.p)],
        x_test=x[spec.n :] if spec.n_test else None,
        y_test=y[spec.n :] if spec.n_test else None,
    )
    truth = {
        "mu": float(spec.mu),
        "sigma2": float(spec.sigma2),
        "beta": [float(b) for b in beta],
        "active": [int(j) for j in active],
    }
    return ds, truth


# ---- CSV ----


def load_csv(path, has_header=True, response=None) -> Dataset:
    """Read a strictly numeric CSV.

    response picks the response column by name (requires a header) or
    0-based integer position; None loads predictors only.
    """
    try:
        with open(path, newline="") as f:
            reader = csv.reader(f)
            rows = [(reader.line_num, r) for r in reader if r]
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path}: file is empty")
    names = None
    if has_header:
        names = [c.strip() for c in rows[0][1]]
        rows = rows[1:]
        if not rows:
            raise ParseError(f"{path}: no data rows below the header")
    width = len(rows[0][1])
    data = np.empty((len(rows), width))
    for i, (lineno, row) in enumerate(rows):
        # lineno is the physical file line, so it matches what an editor shows
        if len(row) != width:
            raise ParseError(f"{path}: row {lineno} has {len(row)} cells, expected {width}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(
                    f"{path}: non-numeric cell {cell.strip()!r} at row {lineno}, column {j + 1}"
                ) from None
            if not math.isfinite(v):
                raise ParseError(
                    f"{path}: non-finite value {cell.strip()!r} at row {lineno}, column {j + 1}"
                )
            data[i, j] = v

    if response is None:
        return Dataset(x=data, colnames=names)
    if isinstance(response, str):
        if names is None:
            raise ConfigError("selecting the response by name needs a header row")
        try:
            col = names.index(response)
        except ValueError:
            raise ParseError(f"{path}: no column named {response!r}") from None
    else:
        col = int(response)
        if not 0 <= col < width:
            raise ParseError(f"{path}: response column {col} out of range")
    keep = [j for j in range(width) if j != col]
    xnames = [names[j] for j in keep] if names else None
    return Dataset(x=data[:, keep], y=data[:, col], colnames=xnames)


def save_csv(path, x, y=None, colnames=None) -> None:
    """Write predictors (and optionally a leading response column).

    Floats are written with repr so a reload reproduces them exactly.
    """
    x = np.asarray(x, dtype=float)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        if colnames is None:
            colnames = [f"x{j + 1}" for j in range(x.shape[1])]
            if y is not None:
                colnames = ["y"] + colnames
        w.writerow(colnames)
        for i in range(x.shape[0]):
            row = [repr(float(v)) for v in x[i]]
            if y is not None:
                row = [repr(float(y[i]))] + row
            w.writerow(row)


# ---- model persistence ----


def _phi_payload(phi: ProjectionMatrix) -> dict:
    rows, cols, vals = phi.triplets()
    return {
        "m": int(phi.m),
        "q": int(phi.q),
        "kind": phi.kind,
        "storage": "sparse" if phi.is_sparse else "dense",
        "data_driven": bool(phi.data_driven),
        "rows": [int(v) for v in rows],
        "cols": [int(v) for v in cols],
        "vals": [float(v) for v in vals],
    }


def _phi_restore(d: dict) -> ProjectionMatrix:
    m, q = int(d["m"]), int(d["q"])
    rows = np.asarray(d["rows"], dtype=int)
    cols = np.asarray(d["cols"], dtype=int)
    vals = np.asarray(d["vals"], dtype=float)
    if d["storage"] == "dense":
        dense = np.zeros((m, q))
        dense[rows, cols] = vals
        return ProjectionMatrix(m, q, d["kind"], dense=dense, data_driven=bool(d["data_driven"]))
    return ProjectionMatrix(m, q, d["kind"], rows=rows, cols=cols, vals=vals,
                            data_driven=bool(d["data_driven"]))


def model_to_dict(ens: SparEnsemble) -> dict:
    grid = None
    if ens.grid is not None:
        grid = {
            "kind": ens.grid.kind,
            "measure": ens.grid.measure,
            "cells": [
                {
                    "nu": float(c.nu),
                    "nummod": int(c.nummod),
                    "value": float(c.value),
                    "se": float(c.se),
                    "active": int(c.active),
                    "fold_values": [float(v) for v in c.fold_values],
                }
                for c in ens.grid.cells
            ],
        }
    return {
        "version": MODEL_FORMAT_VERSION,
        "family": ens.family.name,
        "p": int(ens.p),
        "measure": ens.measure,
        "master_seed": int(ens.master_seed),
        "cv": bool(ens.cv),
        "config": ens.config,
        "stats": {
            "x_mean": [float(v) for v in ens.stats.x_mean],
            "x_sd": [float(v) for v in ens.stats.x_sd],
            "y_mean": float(ens.stats.y_mean),
            "y_sd": float(ens.stats.y_sd),
            "constant_cols": [int(v) for v in ens.stats.constant_cols],
        },
        "nus": [float(v) for v in ens.nus],
        "nummods": [int(v) for v in ens.nummods],
        "models": [
            {
                "index_set": [int(v) for v in m.index_set],
                "gamma0": float(m.gamma0),
                "gamma": [float(v) for v in m.gamma],
                "converged": bool(m.converged),
                "failed": bool(m.failed),
                "phi": _phi_payload(m.phi),
            }
            for m in ens.models
        ],
        "selection": grid,
        "best": None if ens.best is None else {"nu": float(ens.best[0]), "nummod": int(ens.best[1])},
        "one_se": None if ens.one_se is None else {"nu": float(ens.one_se[0]), "nummod": int(ens.one_se[1])},
    }


def serialize_model(ens: SparEnsemble) -> str:
    return json.dumps(model_to_dict(ens), indent=1)


def save_model(ens: SparEnsemble, path) -> None:
    with open(path, "w") as f:
        f.write(serialize_model(ens))


def model_from_dict(doc: dict) -> SparEnsemble:
    try:
        version = str(doc["version"])
        major = version.split(".")[0]
        if major != MODEL_FORMAT_VERSION.split(".")[0]:
            raise VersionError(
                f"model format {version} not readable by a "
                f"{MODEL_FORMAT_VERSION.split('.')[0]}.x reader"
            )
        fam = get_family(doc["family"])
        stats = StandardizationStats(
            x_mean=np.asarray(doc["stats"]["x_mean"], dtype=float),
            x_sd=np.asarray(doc["stats"]["x_sd"], dtype=float),
            y_mean=float(doc["stats"]["y_mean"]),
            y_sd=float(doc["stats"]["y_sd"]),
            constant_cols=np.asarray(doc["stats"]["constant_cols"], dtype=int),
        )
        models = []
        for md in doc["models"]:
            phi = _phi_restore(md["phi"])
            gamma = np.asarray(md["gamma"], dtype=float)
            models.append(
                MarginalModel(
                    index_set=np.asarray(md["index_set"], dtype=int),
                    phi=phi,
                    gamma0=float(md["gamma0"]),
                    gamma=gamma,
                    converged=bool(md["converged"]),
                    beta_vals=phi.backmap(gamma),
                    failed=bool(md["failed"]),
                )
            )
        grid = None
        if doc["selection"] is not None:
            grid = SelectionGrid(
                cells=[
                    GridCell(
                        nu=float(c["nu"]),
                        nummod=int(c["nummod"]),
                        value=float(c["value"]),
                        se=float(c["se"]),
                        active=int(c["active"]),
                        fold_values=[float(v) for v in c["fold_values"]],
                    )
                    for c in doc["selection"]["cells"]
                ],
                measure=doc["selection"]["measure"],
                kind=doc["selection"]["kind"],
            )
        best = doc["best"]
        one_se = doc["one_se"]
        return SparEnsemble(
            family=fam,
            stats=stats,
            models=models,
            nus=np.asarray(doc["nus"], dtype=float),
            nummods=tuple(int(v) for v in doc["nummods"]),
            p=int(doc["p"]),
            measure=doc["measure"],
            master_seed=int(doc["master_seed"]),
            config=doc["config"],
            grid=grid,
            best=None if best is None else (float(best["nu"]), int(best["nummod"])),
            one_se=None if one_se is None else (float(one_se["nu"]), int(one_se["nummod"])),
            cv=bool(doc["cv"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed model document: {exc}") from exc


def load_model(path) -> SparEnsemble:
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict) or "version" not in doc:
        raise ParseError(f"{path}: not a model document")
    return model_from_dict(doc)


def loads_model(text: str) -> SparEnsemble:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "version" not in doc:
        raise ParseError("not a model document")
    return model_from_dict(doc)


def write_grid_csv(grid: SelectionGrid, path) -> None:
    with open(path, "w") as f:
        grid.write_csv(f)


def grid_csv_text(grid: SelectionGrid) -> str:
    buf = io.StringIO()
    grid.write_csv(buf)
    return buf.getvalue()
