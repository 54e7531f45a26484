"""Dataset, model, and manifest persistence.

CSV with a header row is the only dataset format: a binary ``y`` column plus
non-negative numeric covariate columns.  Missing or non-numeric cells are
rejected outright (the model has no missing-data semantics).  Models and
scenario truths serialize to JSON with shortest round-trip float formatting,
so identical inputs reproduce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time

import numpy as np

from . import __version__
from .classify import ClassifierModel, PosteriorRule
from .errors import DataValidationError
from .latentcorr import LatentCorrelation, ThresholdVector
from .transform import MarginalTransform

__all__ = [
    "read_dataset",
    "write_dataset",
    "write_csv",
    "save_model",
    "load_model",
    "save_coda_model",
    "load_coda_model",
    "model_format",
    "sha256_file",
    "write_manifest",
]

MODEL_FORMAT = "zilda-model-v1"
CODA_MODEL_FORMAT = "zilda-coda-model-v1"


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, header, rows):
    """Write rows with deterministic shortest round-trip float formatting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_dataset(path, x, y, column_names=None):
    x = np.asarray(x)
    y = np.asarray(y)
    p = x.shape[1]
    names = list(column_names) if column_names is not None else [f"x{j+1}" for j in range(p)]
    header = ["y"] + names
    rows = ([int(yi)] + list(xi) for yi, xi in zip(y, x))
    write_csv(path, header, rows)


def read_dataset(path, require_label=True):
    """Parse a dataset CSV into (x, y, column_names).

    Raises :class:`DataValidationError` naming the offending line for any
    malformed, missing, negative, or non-finite cell.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if require_label:
            if "y" not in header:
                raise DataValidationError(f"{path}: header must contain a 'y' column")
            y_col = header.index("y")
        else:
            y_col = header.index("y") if "y" in header else None
        names = [h for i, h in enumerate(header) if i != y_col]
        xs, ys = [], []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataValidationError(
                    f"{path}: line {line_no}: expected {len(header)} cells, got {len(row)}")
            vals = []
            for i, cell in enumerate(row):
                cell = cell.strip()
                if cell == "":
                    raise DataValidationError(f"{path}: line {line_no}: missing value")
                try:
                    v = float(cell)
                except ValueError:
                    raise DataValidationError(
                        f"{path}: line {line_no}: non-numeric cell {cell!r}") from None
                if not np.isfinite(v):
                    raise DataValidationError(f"{path}: line {line_no}: non-finite value")
                vals.append(v)
            if y_col is not None:
                yv = vals.pop(y_col)
                if yv not in (0.0, 1.0):
                    raise DataValidationError(
                        f"{path}: line {line_no}: label must be 0 or 1, got {yv}")
                ys.append(int(yv))
            if any(v < 0.0 for v in vals):
                raise DataValidationError(f"{path}: line {line_no}: negative covariate")
            xs.append(vals)
    if not xs:
        raise DataValidationError(f"{path}: no data rows")
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=int) if y_col is not None else None
    return x, y, names


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    raise TypeError(f"not serializable: {type(o)}")


def dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, default=_json_default)
        fh.write("\n")


def save_model(path, model):
    payload = {
        "format": MODEL_FORMAT,
        "version": __version__,
        "lam": model.lam,
        "delta_y": model.delta_y,
        "v_hat": model.v_hat,
        "beta": model.beta,
        "rule": {"kind": model.rule.kind, "n_samples": model.rule.n_samples},
        "columns": list(model.column_names),
        "latent": {
            "sigma": model.latent.sigma,
            "nu": model.latent.nu,
            "label_threshold": model.latent.label_threshold,
            "delta": model.latent.thresholds.delta,
            "pi_hat": model.latent.thresholds.pi_hat,
            "n_clamped": model.latent.n_clamped,
        },
        "transforms": [
            {"values": t.sorted_values, "pi_hat": t.pi_hat,
             "delta_n": t.delta_n, "n": t.n}
            for t in model.transforms
        ],
    }
    dump_json(path, payload)


def save_coda_model(path, model):
    payload = {
        "format": CODA_MODEL_FORMAT,
        "version": __version__,
        "lam": model.lam,
        "beta": model.beta,
        "intercept": model.intercept,
        "class_means": model.class_means,
        "pooled_s": model.pooled_s,
        "nu_coda": model.nu_coda,
        "col_mean": model.col_mean,
        "col_sd": model.col_sd,
        "sorted_columns": [c for c in model.sorted_columns],
        "delta_n": model.delta_n,
        "n0": model.n0,
        "n1": model.n1,
        "degenerate_intercept": model.degenerate_intercept,
    }
    dump_json(path, payload)


def load_coda_model(path):
    from .coda import CodaModel

    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != CODA_MODEL_FORMAT:
        raise DataValidationError(f"{path}: not a recognized baseline model file")
    return CodaModel(
        beta=np.asarray(payload["beta"], dtype=float),
        intercept=float(payload["intercept"]),
        class_means=np.asarray(payload["class_means"], dtype=float),
        pooled_s=np.asarray(payload["pooled_s"], dtype=float),
        nu_coda=float(payload["nu_coda"]),
        lam=float(payload["lam"]),
        col_mean=np.asarray(payload["col_mean"], dtype=float),
        col_sd=np.asarray(payload["col_sd"], dtype=float),
        sorted_columns=tuple(np.asarray(c, dtype=float)
                             for c in payload["sorted_columns"]),
        delta_n=float(payload["delta_n"]),
        n0=int(payload["n0"]),
        n1=int(payload["n1"]),
        degenerate_intercept=bool(payload["degenerate_intercept"]),
    )


def model_format(path):
    with open(path) as fh:
        return json.load(fh).get("format")


def load_model(path):
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != MODEL_FORMAT:
        raise DataValidationError(f"{path}: not a recognized model file")
    lat = payload["latent"]
    latent = LatentCorrelation(
        sigma=np.asarray(lat["sigma"], dtype=float),
        nu=float(lat["nu"]),
        thresholds=ThresholdVector(
            delta=np.asarray(lat["delta"], dtype=float),
            pi_hat=np.asarray(lat["pi_hat"], dtype=float)),
        label_threshold=(None if lat["label_threshold"] is None
                         else float(lat["label_threshold"])),
        n_clamped=int(lat["n_clamped"]),
    )
    transforms = tuple(
        MarginalTransform(sorted_values=np.asarray(t["values"], dtype=float),
                          pi_hat=float(t["pi_hat"]), delta_n=float(t["delta_n"]),
                          n=int(t["n"]))
        for t in payload["transforms"])
    return ClassifierModel(
        beta=np.asarray(payload["beta"], dtype=float),
        delta_y=float(payload["delta_y"]),
        v_hat=float(payload["v_hat"]),
        latent=latent,
        transforms=transforms,
        rule=PosteriorRule(payload["rule"]["kind"], int(payload["rule"]["n_samples"])),
        lam=float(payload["lam"]),
        column_names=tuple(payload["columns"]),
    )


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def write_manifest(path, command, config, seed, inputs, outputs, started):
    """One manifest per output directory; timing is the only volatile field."""
    payload = {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "inputs": {name: sha256_file(p) for name, p in inputs.items()},
        "outputs": sorted(outputs),
        "timing_seconds": round(time.time() - started, 3),
    }
    dump_json(path, payload)
