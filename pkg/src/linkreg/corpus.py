"""Corpus container and its file formats.

Corpus CSV: ``db_id, rec_id, <feature columns>, [y], [x1..xq], [entity_id]``
with 0-based category codes and empty cells for missing regression values.
Schema JSON::

    {"features": [{"name": "f1", "support": 1000, "theta": [...]}, ...],
     "response": "y", "covariates": ["x1"]}

``theta`` is optional; without it the pooled empirical frequencies are used.
Truth CSV: ``db_id, rec_id, entity_id``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .hitmiss import FeatureSpec
from .partition import RecordId
from .regression import RegressionData


class CorpusError(ValueError):
    pass


def fmt_real(x: float) -> str:
    """Locale-independent real with 17 significant digits; empty for NaN."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return format(float(x), ".17g")


@dataclass
class Corpus:
    db: np.ndarray
    rec: np.ndarray
    codes: np.ndarray
    features: FeatureSpec
    regression: RegressionData | None = None
    entity: np.ndarray | None = None

    def __post_init__(self):
        self.db = np.ascontiguousarray(self.db, dtype=np.int32)
        self.rec = np.asarray(self.rec, dtype=np.int64)
        self.codes = np.ascontiguousarray(self.codes, dtype=np.int32)
        n = self.db.shape[0]
        if self.rec.shape != (n,) or self.codes.shape[0] != n:
            raise CorpusError("db, rec and codes must have one row per record")
        if n:
            order = np.lexsort((self.rec, self.db))
            if not np.array_equal(order, np.arange(n)):
                raise CorpusError("records must be sorted by (db_id, rec_id)")
            keys = set(zip(self.db.tolist(), self.rec.tolist()))
            if len(keys) != n:
                raise CorpusError("duplicate (db_id, rec_id) pair")
            if self.db.min() < 1:
                raise CorpusError("db_id starts at 1")
        self.features.check_codes(self.codes)
        if self.regression is not None and self.regression.n_records != n:
            raise CorpusError("regression columns must have one row per record")

    @property
    def n_records(self) -> int:
        return self.db.shape[0]

    @property
    def n_databases(self) -> int:
        return int(self.db.max()) if self.n_records else 0

    @property
    def record_ids(self) -> list[RecordId]:
        return [RecordId(int(d), int(r)) for d, r in zip(self.db, self.rec)]

    def has_regression(self) -> bool:
        return self.regression is not None and self.regression.any_observed()

    def without_regression(self) -> "Corpus":
        return Corpus(self.db, self.rec, self.codes, self.features, None, self.entity)


def sort_records(db, rec, *columns):
    order = np.lexsort((np.asarray(rec), np.asarray(db)))
    return [np.asarray(c)[order] for c in (db, rec, *columns)]


def write_schema(path, features: FeatureSpec, response=None, covariates=(), include_theta=True) -> None:
    entries = []
    for l, name in enumerate(features.names):
        m = int(features.supports[l])
        entry = {"name": name, "support": m}
        if include_theta:
            entry["theta"] = [float(t) for t in features.theta[l, :m]]
        entries.append(entry)
    doc = {"features": entries, "response": response, "covariates": list(covariates)}
    Path(path).write_text(json.dumps(doc, indent=1))


def read_schema(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CorpusError(f"cannot read schema {path}: {exc}") from None
    feats = doc.get("features")
    if not feats:
        raise CorpusError("schema lists no features")
    for f in feats:
        if "name" not in f or int(f.get("support", 0)) < 2:
            raise CorpusError(f"bad feature entry {f!r}")
        if "theta" in f and len(f["theta"]) != int(f["support"]):
            raise CorpusError(f"theta of {f['name']} does not match its support")
    return doc


def write_corpus(path, corpus: Corpus, response="y", covariates=None, with_entity=True) -> None:
    names = corpus.features.names
    reg = corpus.regression
    if reg is not None and covariates is None:
        covariates = [f"x{i + 1}" for i in range(reg.p)]
    header = ["db_id", "rec_id", *names]
    if reg is not None:
        header += [response, *covariates]
    with_entity = with_entity and corpus.entity is not None
    if with_entity:
        header.append("entity_id")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(corpus.n_records):
            row = [int(corpus.db[i]), int(corpus.rec[i]), *(int(c) for c in corpus.codes[i])]
            if reg is not None:
                row += [fmt_real(reg.y[i]), *(fmt_real(v) for v in reg.x[i])]
            if with_entity:
                row.append(int(corpus.entity[i]))
            w.writerow(row)


def _parse_real(text: str) -> float:
    text = text.strip()
    return float(text) if text else math.nan


def read_corpus(csv_path, schema_path) -> tuple[Corpus, list[str]]:
    """Load a corpus; returns it with a list of validation warnings."""
    schema = read_schema(schema_path)
    warnings: list[str] = []
    names = [f["name"] for f in schema["features"]]
    supports = [int(f["support"]) for f in schema["features"]]
    response = schema.get("response")
    covariates = list(schema.get("covariates") or [])
    try:
        with open(csv_path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise CorpusError(f"cannot read corpus {csv_path}: {exc}") from None
    if not rows:
        raise CorpusError("corpus has no records")
    cols = set(rows[0].keys())
    missing = {"db_id", "rec_id", *names} - cols
    if missing:
        raise CorpusError(f"corpus lacks columns {sorted(missing)}")
    reg_cols = [c for c in [response, *covariates] if c]
    for c in reg_cols:
        if c not in cols:
            raise CorpusError(f"corpus lacks regression column {c!r}")
    known = {"db_id", "rec_id", "entity_id", *names, *reg_cols}
    for c in sorted(cols - known):
        warnings.append(f"ignoring unknown column {c!r}")
    try:
        db = np.array([int(r["db_id"]) for r in rows])
        rec = np.array([int(r["rec_id"]) for r in rows])
        codes = np.array([[int(r[n]) for n in names] for r in rows], dtype=np.int64)
    except ValueError as exc:
        raise CorpusError(f"non-integer id or category code: {exc}") from None
    has_entity = "entity_id" in cols and all(r["entity_id"].strip() for r in rows)
    entity = np.array([int(r["entity_id"]) for r in rows]) if has_entity else np.zeros(len(rows), int)
    if covariates:
        y = np.array([_parse_real(r[response]) if response else math.nan for r in rows])
        x = np.array([[_parse_real(r[c]) for c in covariates] for r in rows])
    else:
        y = x = None
    if y is not None:
        db, rec, codes, entity, y, x = sort_records(db, rec, codes, entity, y, x)
    else:
        db, rec, codes, entity = sort_records(db, rec, codes, entity)
    for l, m in enumerate(supports):
        if codes.size and (codes[:, l].min() < 0 or codes[:, l].max() >= m):
            raise CorpusError(f"codes of {names[l]} fall outside 0..{m - 1}")
    if all("theta" in f for f in schema["features"]):
        features = FeatureSpec.from_rows([f["theta"] for f in schema["features"]], names)
    else:
        if any("theta" in f for f in schema["features"]):
            warnings.append("theta given for only some features; using empirical frequencies for all")
        features = FeatureSpec.empirical(codes, supports, names)
    regression = RegressionData(y, x) if y is not None else None
    corpus = Corpus(db, rec, codes, features, regression, entity if has_entity else None)
    return corpus, warnings


def write_truth(path, corpus: Corpus, entity) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["db_id", "rec_id", "entity_id"])
        for d, r, e in zip(corpus.db, corpus.rec, entity):
            w.writerow([int(d), int(r), int(e)])


def read_truth(path, corpus: Corpus) -> np.ndarray:
    """Entity id of every corpus record, in corpus order."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise CorpusError(f"cannot read truth {path}: {exc}") from None
    table = {}
    for r in rows:
        table[(int(r["db_id"]), int(r["rec_id"]))] = int(r["entity_id"])
    out = []
    for d, r in zip(corpus.db.tolist(), corpus.rec.tolist()):
        if (d, r) not in table:
            raise CorpusError(f"truth has no entry for record {d}:{r}")
        out.append(table[(d, r)])
    if len(table) != corpus.n_records:
        raise CorpusError("truth and corpus list different records")
    return np.array(out, dtype=np.int64)
