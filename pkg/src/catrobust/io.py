"""File formats: dataset CSV, cost-config JSON, embedding / checkpoint / tree JSON."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .cost_model import (
    Binner,
    CostMatrix,
    CostModel,
    Dataset,
    FeatureSpec,
    InvalidInputError,
    apply_bins,
    fit_bins,
    per_unit_matrix,
)
from .net import EmbeddingSet, NetParams


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"missing file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def save_json(obj, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def validate_cost_config(config: dict) -> dict:
    if not isinstance(config, dict):
        raise ConfigError("cost config must be a JSON object")
    for key in ("features", "label_column"):
        if key not in config:
            raise ConfigError(f"cost config lacks {key!r}")
    if config.get("target_class", 1) not in (0, 1):
        raise ConfigError("target_class must be 0 or 1")
    names = set()
    for feat in config["features"]:
        name = feat.get("name")
        if not name or name in names:
            raise ConfigError(f"feature names must be unique and non-empty ({name!r})")
        names.add(name)
        kind = feat.get("type")
        if kind == "categorical":
            if "values" not in feat or "cost_matrix" not in feat:
                raise ConfigError(f"categorical feature {name!r} needs values and cost_matrix")
            t = len(feat["values"])
            mat = feat["cost_matrix"]
            if len(mat) != t or any(len(r) != t for r in mat):
                raise ConfigError(f"cost_matrix of {name!r} must be {t}x{t}")
        elif kind == "numeric":
            if "per_unit_cost" not in feat and "cost_matrix" not in feat:
                raise ConfigError(f"numeric feature {name!r} needs per_unit_cost or cost_matrix")
        else:
            raise ConfigError(f"feature {name!r}: type must be categorical or numeric")
    return config


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            return header, [r for r in reader if r]
    except FileNotFoundError as exc:
        raise ConfigError(f"missing file: {path}") from exc
    except StopIteration as exc:
        raise ConfigError(f"{path}: empty CSV") from exc


def write_csv(path, header, records) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(records)


def table_to_dataset(header, records, config: dict, binners: dict | None = None
                     ) -> tuple[Dataset, CostModel, dict]:
    """Encode a string table under a cost config.

    Numeric columns are binned with ``binners`` when given (e.g. fitted on the
    training split) and otherwise fitted here.  Returns the dataset, the cost
    model and the binners used.
    """
    config = validate_cost_config(config)
    col = {name: i for i, name in enumerate(header)}
    label_col = config["label_column"]
    if label_col not in col:
        raise ConfigError(f"label column {label_col!r} not in CSV header")
    try:
        labels = np.array([int(float(r[col[label_col]])) for r in records], dtype=np.int64)
    except ValueError as exc:
        raise ConfigError(f"non-numeric label: {exc}") from exc
    binners = dict(binners or {})
    specs, mats, columns = [], [], []
    for feat in config["features"]:
        name = feat["name"]
        if name not in col:
            raise ConfigError(f"feature {name!r} not in CSV header")
        raw = [r[col[name]] for r in records]
        if feat["type"] == "categorical":
            values = [str(v) for v in feat["values"]]
            lookup = {v: k for k, v in enumerate(values)}
            try:
                columns.append(np.array([lookup[v] for v in raw], dtype=np.int64))
            except KeyError as exc:
                raise ConfigError(f"feature {name!r}: unknown value {exc}") from exc
            spec = FeatureSpec(name, len(values), tuple(values))
            matrix = CostMatrix.from_raw(feat["cost_matrix"])
        else:
            vals = np.array([float(v) for v in raw])
            if name not in binners:
                binners[name] = fit_bins(vals, int(feat.get("n_bins", 10)))
            b: Binner = binners[name]
            columns.append(apply_bins(vals, b))
            labels_ = tuple(f"bin{k}" for k in range(b.n_bins))
            spec = FeatureSpec(name, b.n_bins, labels_)
            if "cost_matrix" in feat:
                matrix = CostMatrix.from_raw(feat["cost_matrix"])
            else:
                matrix = CostMatrix(per_unit_matrix(b.midpoints(), float(feat["per_unit_cost"])))
            if matrix.size != b.n_bins:
                raise ConfigError(f"numeric feature {name!r}: matrix size != bin count")
        specs.append(spec)
        mats.append(matrix)
    rows = np.stack(columns, axis=1) if columns else np.zeros((len(records), 0), dtype=np.int64)
    try:
        cm = CostModel(tuple(specs), tuple(mats), int(config.get("target_class", 1)))
        ds = Dataset(rows, labels, tuple(specs))
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from exc
    return ds, cm, binners


def load_dataset(csv_path, config: dict, binners: dict | None = None):
    header, records = read_csv(csv_path)
    return table_to_dataset(header, records, config, binners)


def binners_to_dict(binners: dict) -> dict:
    return {k: {"edges": b.edges.tolist(), "lo": b.lo, "hi": b.hi} for k, b in binners.items()}


def binners_from_dict(d: dict) -> dict:
    return {k: Binner(np.asarray(v["edges"]), len(v["edges"]) + 1, v["lo"], v["hi"])
            for k, v in d.items()}


def embeddings_to_dict(Q: EmbeddingSet, config: dict | None = None, extra: dict | None = None) -> dict:
    out = {
        "d": Q.width,
        "matrices": [Qi.tolist() for Qi in Q.matrices],
        "cluster_maps": None if Q.cluster_maps is None else [c.tolist() for c in Q.cluster_maps],
        "cost_config_hash": None if config is None else config_hash(config),
    }
    if extra:
        out.update(extra)
    return out


def embeddings_from_dict(d: dict) -> EmbeddingSet:
    try:
        mats = [np.asarray(m, dtype=np.float64).reshape(d["d"], -1) for m in d["matrices"]]
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"malformed embedding file: {exc}") from exc
    maps = d.get("cluster_maps")
    return EmbeddingSet(mats, None if maps is None else [np.asarray(c) for c in maps])


def net_to_dict(theta: NetParams, extra: dict | None = None) -> dict:
    out = {
        "sizes": theta.sizes,
        "weights": [W.tolist() for W in theta.weights],
        "biases": [b.tolist() for b in theta.biases],
    }
    if extra:
        out.update(extra)
    return out


def net_from_dict(d: dict) -> NetParams:
    sizes = d["sizes"]
    weights = [np.asarray(W, dtype=np.float64).reshape(a, b)
               for W, a, b in zip(d["weights"], sizes[:-1], sizes[1:])]
    biases = [np.asarray(b, dtype=np.float64) for b in d["biases"]]
    return NetParams(weights, biases)
