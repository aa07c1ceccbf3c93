"""Serialization and file I/O: fitted models, result tables, life tables.

Fitted models and experiment results round-trip through versioned JSON
documents. CSV emission mirrors the reference result tables: one row per
(model, method, n, p, metric) with mean and standard-error columns, preceded
by provenance comment lines (the timestamp is isolated on its own line so
everything else reproduces byte-identically from the embedded config).

Life tables are delimited text with one row per unit: covariate columns plus
death counts per age bin. Bin columns are header-declared as ``bin_LO_HI``;
a column named id/name/label/unit/country is ignored. Each unit's binned
histogram is converted to quantile values on the midpoint grid by linear
interpolation within bins.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
from datetime import datetime, timezone

import numpy as np

from . import spaces, weights as wts
from .errors import DataError, ValidationError
from .estimators import (
    Dataset,
    FitDiagnostics,
    FittedModel,
    MomentEstimates,
)
from .evaluate import ExperimentResult
from .spaces import WASSERSTEIN, QuantileFunction, SpaceSpec, grid_points

MODEL_FORMAT = "metricreg-model"
RESULT_FORMAT = "metricreg-result"
FORMAT_VERSION = 1

_BIN_RE = re.compile(r"^bin_([-+0-9.eE]+)_([-+0-9.eE]+)$")
_ID_COLUMNS = {"id", "name", "label", "unit", "country"}

__all__ = [
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
    "ingest_life_table",
    "config_hash",
    "emit_results",
    "experiment_rows",
]


# ---------------------------------------------------------------------------
# Fitted-model documents
# ---------------------------------------------------------------------------

def _flavor_to_dict(flavor) -> dict:
    if isinstance(flavor, wts.LinearFlavor):
        return {"kind": "linear"}
    if isinstance(flavor, wts.NonlinearFlavor):
        return {"kind": "nonlinear", "beta": flavor.beta.tolist()}
    if isinstance(flavor, wts.SeparableFlavor):
        return {"kind": "separable", "c_h": flavor.c_h, "h_id": flavor.h_id}
    raise ValidationError(f"unknown flavor {flavor!r}")


def _flavor_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "linear":
        return wts.LinearFlavor()
    if kind == "nonlinear":
        return wts.NonlinearFlavor(np.asarray(d["beta"], dtype=float))
    if kind == "separable":
        return wts.SeparableFlavor(float(d["c_h"]), str(d["h_id"]))
    raise ValidationError(f"unknown flavor kind {kind!r}")


def model_to_dict(model: FittedModel) -> dict:
    """Versioned JSON-able document for a fitted model."""
    if model.links is not None and model.links.descriptor is None:
        raise ValidationError(
            "model links carry no descriptor; only registry-built links serialize"
        )
    m = model.moments
    return {
        "format": MODEL_FORMAT,
        "version": FORMAT_VERSION,
        "space": {"kind": model.space.kind, "dims": model.space.dims, "eps": model.space.eps},
        "flavor": _flavor_to_dict(model.flavor),
        "links": model.links.descriptor if model.links is not None else None,
        "moments": {
            "mu_hat": m.mu_hat.tolist(),
            "sigma_mat_hat": m.sigma_mat_hat.tolist(),
            "sigma_mat_inv": m.sigma_mat_inv.tolist(),
            "beta0_coords": spaces.to_coords(model.space, m.beta0_hat).tolist(),
            "sigma_obj_coords": [r.payload.tolist() for r in m.sigma_obj_hat],
            "sigma_h_hat": None if m.sigma_h_hat is None else m.sigma_h_hat.tolist(),
        },
        "diagnostics": {
            "final_objective": model.fit_diagnostics.final_objective,
            "status": model.fit_diagnostics.status,
            "iterations": model.fit_diagnostics.iterations,
            "message": model.fit_diagnostics.message,
        },
    }


def model_from_dict(doc: dict) -> FittedModel:
    if doc.get("format") != MODEL_FORMAT:
        raise ValidationError(f"not a model document: format={doc.get('format')!r}")
    if doc.get("version") != FORMAT_VERSION:
        raise ValidationError(f"unsupported model document version {doc.get('version')!r}")
    space = SpaceSpec(**doc["space"])
    md = doc["moments"]
    beta0 = spaces.coords_to_object(space, np.asarray(md["beta0_coords"], dtype=float))
    sigma_obj = [spaces.RawObject(space.kind, np.asarray(c, dtype=float))
                 for c in md["sigma_obj_coords"]]
    moments = MomentEstimates(
        mu_hat=np.asarray(md["mu_hat"], dtype=float),
        sigma_mat_hat=np.asarray(md["sigma_mat_hat"], dtype=float),
        sigma_mat_inv=np.asarray(md["sigma_mat_inv"], dtype=float),
        beta0_hat=beta0,
        sigma_obj_hat=sigma_obj,
        sigma_h_hat=(None if md["sigma_h_hat"] is None
                     else np.asarray(md["sigma_h_hat"], dtype=float)),
    )
    links = None if doc["links"] is None else wts.link_spec_from_descriptor(doc["links"])
    dd = doc["diagnostics"]
    diag = FitDiagnostics(dd["final_objective"], dd["status"], dd["iterations"], dd["message"])
    return FittedModel(space, links, moments, _flavor_from_dict(doc["flavor"]), diag)


def save_model(model: FittedModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")


def load_model(path) -> FittedModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Life tables
# ---------------------------------------------------------------------------

def _sniff_rows(path) -> list[list[str]]:
    with open(path, newline="") as fh:
        sample = fh.read(4096)
        fh.seek(0)
        try:
            dialect = csv.Sniffer().sniff(sample, delimiters=",;\t")
        except csv.Error:
            dialect = csv.excel
        return [row for row in csv.reader(fh, dialect) if row and any(c.strip() for c in row)]


def ingest_life_table(path, standardize: bool = False, grid_size: int = 20) -> Dataset:
    """Read a delimited life table into a quantile-function dataset.

    Count columns are declared in the header as ``bin_LO_HI`` (age bin
    [LO, HI)); every other column except an identifier column is a numeric
    covariate. Each row's histogram becomes quantile values on the midpoint
    grid via linear interpolation within bins.
    """
    rows = _sniff_rows(path)
    if len(rows) < 2:
        raise DataError(f"{path}: need a header row and at least one data row")
    header = [h.strip() for h in rows[0]]

    bin_cols, cov_cols = [], []
    for k, name in enumerate(header):
        match = _BIN_RE.match(name)
        if match:
            lo, hi = float(match.group(1)), float(match.group(2))
            if not hi > lo:
                raise DataError(f"{path}: bin column {name!r} has hi <= lo")
            bin_cols.append((k, lo, hi))
        elif name.lower() not in _ID_COLUMNS:
            cov_cols.append((k, name))
    if not bin_cols:
        raise DataError(f"{path}: no bin_LO_HI count columns in the header")
    if not cov_cols:
        raise DataError(f"{path}: no covariate columns in the header")
    bin_cols.sort(key=lambda item: item[1])

    grid = grid_points(grid_size)
    X_rows, Y = [], []
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise DataError(f"{path} row {i}: expected {len(header)} fields, got {len(row)}")
        try:
            covs = [float(row[k]) for k, _ in cov_cols]
            counts = np.asarray([float(row[k]) for k, _, _ in bin_cols])
        except ValueError as exc:
            raise DataError(f"{path} row {i}: non-numeric field ({exc})") from exc
        if np.any(counts < 0):
            raise DataError(f"{path} row {i}: negative count")
        total = counts.sum()
        if total <= 0:
            raise DataError(f"{path} row {i}: empty histogram")
        frac = counts / total
        cum = np.cumsum(frac)
        los = np.asarray([lo for _, lo, _ in bin_cols])
        his = np.asarray([hi for _, _, hi in bin_cols])
        idx = np.searchsorted(cum, grid, side="left")
        idx = np.minimum(idx, len(bin_cols) - 1)
        prev = np.where(idx > 0, cum[idx - 1], 0.0)
        q = los[idx] + (grid - prev) / frac[idx] * (his[idx] - los[idx])
        X_rows.append(covs)
        Y.append(QuantileFunction(q))

    X = np.asarray(X_rows, dtype=float)
    if standardize:
        sd = X.std(axis=0)
        sd[sd == 0] = 1.0
        X = (X - X.mean(axis=0)) / sd
    return Dataset(X, Y, SpaceSpec(WASSERSTEIN, grid_size))


# ---------------------------------------------------------------------------
# Result emission
# ---------------------------------------------------------------------------

def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _provenance_lines(provenance: dict) -> list[str]:
    """Comment lines for CSV artifacts; the timestamp is a single isolated line."""
    seed = provenance.get("seed")
    cfg = provenance.get("config", {})
    lines = [
        f"# seed: {seed}",
        f"# config_hash: {config_hash(cfg)}",
        f"# config: {json.dumps(cfg, sort_keys=True)}",
        f"# generated_at: {provenance.get('timestamp', datetime.now(timezone.utc).isoformat())}",
    ]
    return lines


EXPERIMENT_COLUMNS = ["model", "method", "n", "p", "MSE_Y", "se_Y", "MSE_m", "se_m",
                      "sd_Y", "sd_m", "metric", "ase_beta", "replications"]


def experiment_rows(result: ExperimentResult) -> list[list]:
    """Table rows for an experiment, one per (method, metric)."""
    spec = result.spec
    rows = []
    for kind in result.space_kinds:
        for method in result.methods:
            if method in result.absent:
                rows.append([spec.model_id, method, spec.n, spec.p,
                             "--", "--", "--", "--", "--", "--", kind, "--", 0])
                continue
            sc = result.scores.get((method, kind))
            if sc is None:
                continue
            ym, ysd, yse = sc.mse_y_stats
            mm, msd, mse = sc.mse_m_stats
            ase = "" if sc.ase_beta is None else repr(sc.ase_beta)
            rows.append([spec.model_id, method, spec.n, spec.p,
                         repr(ym), repr(yse), repr(mm), repr(mse),
                         repr(ysd), repr(msd), kind, ase, sc.count])
    return rows


def _write_csv(path, header: list[str], rows: list[list], provenance: dict | None):
    with open(path, "w", newline="") as fh:
        if provenance:
            for line in _provenance_lines(provenance):
                fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _predictions_rows(predictions: list) -> tuple[list[str], list[list]]:
    first = predictions[0]
    if isinstance(first, QuantileFunction):
        m = first.grid_size
        header = [f"q{k + 1}" for k in range(m)]
        rows = [[repr(v) for v in obj.values] for obj in predictions]
    else:
        m = first.dim
        header = [f"m_{i + 1}_{j + 1}" for i in range(m) for j in range(m)]
        rows = [[repr(v) for v in obj.entries.ravel()] for obj in predictions]
    return header, rows


def emit_results(obj, fmt: str, path, provenance: dict | None = None) -> None:
    """Write an experiment result, fitted model, or prediction list to disk."""
    provenance = provenance or {}
    if isinstance(obj, ExperimentResult):
        if fmt == "csv":
            _write_csv(path, EXPERIMENT_COLUMNS, experiment_rows(obj), provenance)
            return
        doc = {
            "format": RESULT_FORMAT,
            "version": FORMAT_VERSION,
            "provenance": {**provenance, "config_hash": config_hash(provenance.get("config", {}))},
            "columns": EXPERIMENT_COLUMNS,
            "rows": experiment_rows(obj),
            "absent": obj.absent,
            "failures": [list(f) for f in obj.failures],
            "wall_time": obj.wall_time,
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        return
    if isinstance(obj, FittedModel):
        save_model(obj, path)
        return
    if isinstance(obj, list):
        header, rows = _predictions_rows(obj)
        _write_csv(path, header, rows, provenance)
        return
    raise ValidationError(f"emit_results: cannot emit object of type {type(obj).__name__}")
