"""File formats: dataset CSV, sidecar metadata, results documents, atomic writes."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .core import LabeledDataset, ParameterError, SchemaError, TransitionMatrix

RESULTS_SCHEMA = "lrtcorrect.results"
RESULTS_SCHEMA_VERSION = "1.0"
LABEL_COLUMNS = ("noisy_label", "clean_label", "bayes_label")


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def dumps_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_json(path, doc) -> None:
    atomic_write_text(path, dumps_json(doc))


def read_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def dataset_to_csv(data: LabeledDataset) -> str:
    buf = io.StringIO()
    header = [f"f{k}" for k in range(data.d)] + ["noisy_label"]
    extras = [a for a in (data.clean_labels, data.bayes_labels) if a is not None]
    if data.clean_labels is not None:
        header.append("clean_label")
    if data.bayes_labels is not None:
        header.append("bayes_label")
    buf.write(",".join(header) + "\n")
    labels = np.column_stack([data.noisy_labels] + extras)
    for row, lab in zip(data.features, labels):
        buf.write(",".join(format(v, ".17g") for v in row))
        buf.write("," + ",".join(str(int(v)) for v in lab) + "\n")
    return buf.getvalue()


def write_dataset(path, data: LabeledDataset) -> None:
    atomic_write_text(path, dataset_to_csv(data))


def read_dataset(path, n_classes: Optional[int] = None) -> LabeledDataset:
    """Load the CSV dataset format.  ``n_classes`` defaults to the sidecar value,
    else to one more than the largest label seen.  Sample ids start at the sidecar's
    ``first_id`` (0 without a sidecar)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty dataset file") from None
        rows = list(reader)
    feat_cols = [i for i, h in enumerate(header) if h.startswith("f") and h[1:].isdigit()]
    if [header[i] for i in feat_cols] != [f"f{k}" for k in range(len(feat_cols))]:
        raise SchemaError(f"{path}: feature columns must be f0..f{{d-1}} in order")
    if "noisy_label" not in header:
        raise SchemaError(f"{path}: missing column 'noisy_label'")
    unknown = [h for i, h in enumerate(header) if i not in feat_cols and h not in LABEL_COLUMNS]
    if unknown:
        raise SchemaError(f"{path}: unknown column {unknown[0]!r}")
    X = np.array([[float(r[i]) for i in feat_cols] for r in rows], dtype=np.float64).reshape(len(rows), len(feat_cols))
    cols = {}
    for name in LABEL_COLUMNS:
        if name in header:
            j = header.index(name)
            cols[name] = np.array([int(r[j]) for r in rows], dtype=np.int64)
    meta = read_sidecar(path)
    first_id = int(meta.get("first_id", 0)) if meta is not None else 0
    if n_classes is None:
        if meta is not None and "n_classes" in meta:
            n_classes = int(meta["n_classes"])
        else:
            n_classes = max(2, 1 + max((int(a.max()) for a in cols.values() if a.size), default=1))
    return LabeledDataset(
        X,
        cols["noisy_label"],
        n_classes,
        clean_labels=cols.get("clean_label"),
        bayes_labels=cols.get("bayes_label"),
        sample_ids=np.arange(first_id, first_id + len(rows), dtype=np.int64),
    )


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def write_sidecar(path, meta: dict) -> None:
    write_json(sidecar_path(path), meta)


def read_sidecar(path) -> Optional[dict]:
    p = sidecar_path(path)
    return read_json(p) if p.exists() else None


def tau_to_text(tau: TransitionMatrix) -> str:
    return dumps_json(tau.to_dict())


def tau_from_text(text: str) -> TransitionMatrix:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"transition matrix document is not valid JSON: {exc}") from None
    return TransitionMatrix.from_dict(doc)


def results_document(kind: str, config: dict, seeds: dict, payload: dict) -> dict:
    """Wrap a payload with the versioned header every output document carries."""
    return {
        "schema": RESULTS_SCHEMA,
        "schema_version": RESULTS_SCHEMA_VERSION,
        "tool_version": __version__,
        "kind": kind,
        "config": config,
        "seeds": seeds,
        **payload,
    }


def check_results_document(doc: dict) -> dict:
    for key in ("schema", "schema_version", "kind"):
        if key not in doc:
            raise SchemaError(f"results document missing field {key!r}")
    if doc["schema"] != RESULTS_SCHEMA:
        raise SchemaError(f"field 'schema' is {doc['schema']!r}, expected {RESULTS_SCHEMA!r}")
    major = str(doc["schema_version"]).split(".")[0]
    if major != RESULTS_SCHEMA_VERSION.split(".")[0]:
        raise SchemaError(f"field 'schema_version' has unsupported major version {doc['schema_version']!r}")
    return doc


def write_plot_data(path, x, y, header: tuple[str, str]) -> None:
    lines = [f"# {header[0]} {header[1]}"]
    lines += [f"{format(float(a), '.17g')} {format(float(b), '.17g')}" for a, b in zip(x, y)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_config(path) -> dict:
    """Read a TOML (or JSON) experiment config."""
    path = Path(path)
    if path.suffix == ".json":
        return read_json(path)
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ParameterError(f"{path}: invalid TOML: {exc}") from None
