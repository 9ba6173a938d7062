"""Exact nearest-neighbor retrieval and top-k accuracy.

A query scores at k when any of its k nearest index items shares its
product. The pool spans every vertical present in the split, so
cross-vertical confusions count as misses. Distance ties are broken by
ascending item id.
"""

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from uniembed.errors import ComparisonError, ShapeError, UsageError

REPORT_VERSION = 1


@dataclass
class EvalSplit:
    query_ids: list
    index_ids: list

    def __post_init__(self):
        self.query_ids = sorted(int(i) for i in self.query_ids)
        self.index_ids = sorted(int(i) for i in self.index_ids)
        if not self.query_ids or not self.index_ids:
            raise UsageError("evaluation split needs non-empty query and index sets")
        if set(self.query_ids) & set(self.index_ids):
            raise UsageError("query and index sets overlap")

    @classmethod
    def from_dataset(cls, dataset, verticals=None):
        """Query items vs index items, optionally restricted to ``verticals``."""
        return cls(dataset.indices(verticals, "query"), dataset.indices(verticals, "index"))


@dataclass
class RetrievalReport:
    ks: list
    accuracies: dict  # vertical -> {k: accuracy}
    counts: dict  # vertical -> number of queries
    label: str = ""

    @property
    def verticals(self):
        return sorted(self.accuracies)

    def accuracy(self, vertical, k):
        return self.accuracies[vertical][k]

    def mean(self, k):
        return float(np.mean([self.accuracies[v][k] for v in self.verticals]))

    def to_dict(self):
        return {
            "format_version": REPORT_VERSION,
            "label": self.label,
            "ks": list(self.ks),
            "verticals": {
                v: {"n_queries": self.counts[v], "accuracy": {str(k): self.accuracies[v][k] for k in self.ks}}
                for v in self.verticals
            },
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("format_version") != REPORT_VERSION:
            raise UsageError(f"unsupported report format_version {doc.get('format_version')!r}")
        ks = [int(k) for k in doc["ks"]]
        acc = {v: {int(k): float(a) for k, a in body["accuracy"].items()} for v, body in doc["verticals"].items()}
        counts = {v: int(body["n_queries"]) for v, body in doc["verticals"].items()}
        return cls(ks, acc, counts, doc.get("label", ""))

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["vertical", "k", "accuracy", "n_queries"])
        for v in self.verticals:
            for k in self.ks:
                w.writerow([v, k, repr(self.accuracies[v][k]), self.counts[v]])
        return buf.getvalue()

    def save(self, path, csv_path=None):
        Path(path).write_text(self.to_json())
        if csv_path:
            Path(csv_path).write_text(self.to_csv())


def load_report(path):
    return RetrievalReport.from_dict(json.loads(Path(path).read_text()))


def _rank(query, index_emb, index_ids, k):
    diff = index_emb - query
    dists = np.sum(diff * diff, axis=1)
    order = np.lexsort((index_ids, dists))
    return [index_ids[i].item() for i in order[:k]]


def knn(query, index, k):
    """Ids of the k nearest entries of ``index`` (a list of (id, vector))."""
    if k < 1:
        raise UsageError("k must be >= 1")
    if not index:
        raise UsageError("cannot search an empty index")
    ids = np.array([i for i, _ in index])
    emb = np.array([np.asarray(e, dtype=np.float64) for _, e in index])
    q = np.asarray(query, dtype=np.float64)
    if emb.shape[1] != q.shape[-1]:
        raise ShapeError("query and index dimensions differ")
    return _rank(q, emb, ids, k)


def top_k_accuracy(model, dataset, split, ks, label=""):
    ks = sorted({int(k) for k in ks})
    if not ks or ks[0] < 1:
        raise UsageError("ks must be a non-empty list of counts >= 1")
    q_ids = np.array(split.query_ids)
    i_ids = np.array(split.index_ids)
    q_emb = model.embed(dataset.features(q_ids))
    i_emb = model.embed(dataset.features(i_ids))
    return score_rankings(dataset, q_ids, i_ids, q_emb, i_emb, ks, label)


def score_rankings(dataset, q_ids, i_ids, q_emb, i_emb, ks, label=""):
    kmax = max(ks)
    neighbors = _exact_neighbors(q_emb, i_emb, i_ids, kmax)
    products = dataset.product_labels
    verticals = dataset.vertical_labels
    hits = {}
    counts = {}
    for qi, row in zip(q_ids, neighbors):
        v = verticals[qi]
        match = products[row] == products[qi]
        first = int(np.argmax(match)) if match.any() else None
        counts[v] = counts.get(v, 0) + 1
        tally = hits.setdefault(v, {k: 0 for k in ks})
        for k in ks:
            if first is not None and first < k:
                tally[k] += 1
    acc = {v: {k: hits[v][k] / counts[v] for k in ks} for v in sorted(counts)}
    return RetrievalReport(ks, acc, dict(sorted(counts.items())), label)


def _exact_neighbors(q_emb, i_emb, i_ids, k):
    # Per-pair differences rather than the expanded dot-product form, so
    # ties in embedding space stay exact ties.
    i_ids = np.asarray(i_ids)
    return [np.array(_rank(q, i_emb, i_ids, k)) for q in q_emb]


def compare_reports(a, b):
    """Elementwise a - b, plus the mean delta per k."""
    if a.verticals != b.verticals:
        raise ComparisonError(f"vertical sets differ: {a.verticals} vs {b.verticals}")
    if list(a.ks) != list(b.ks):
        raise ComparisonError(f"k lists differ: {a.ks} vs {b.ks}")
    deltas = {v: {k: a.accuracies[v][k] - b.accuracies[v][k] for k in a.ks} for v in a.verticals}
    mean = {k: float(np.mean([deltas[v][k] for v in a.verticals])) for k in a.ks}
    return ReportDelta(list(a.ks), deltas, mean, a.label, b.label)


@dataclass
class ReportDelta:
    ks: list
    deltas: dict
    mean: dict
    label_a: str = ""
    label_b: str = ""

    def to_dict(self):
        return {
            "format_version": REPORT_VERSION,
            "a": self.label_a,
            "b": self.label_b,
            "ks": self.ks,
            "deltas": {v: {str(k): d for k, d in row.items()} for v, row in self.deltas.items()},
            "mean": {str(k): d for k, d in self.mean.items()},
        }

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["vertical", *(f"top{k}" for k in self.ks)])
        for v in sorted(self.deltas):
            w.writerow([v, *(repr(self.deltas[v][k]) for k in self.ks)])
        w.writerow(["mean", *(repr(self.mean[k]) for k in self.ks)])
        return buf.getvalue()
