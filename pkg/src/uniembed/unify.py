"""Vertical combination and specialist-to-unified distillation.

``greedy_combine`` grows groups of verticals whose training data can be
merged without any member losing more than ``epsilon`` top-1 points against
its individually trained model. ``train_unified`` regresses one network onto
the embeddings each item receives from its own group's specialist.
"""

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from uniembed.errors import ParseError, RoutingError, ShapeError, SpecError, TrainingError, UsageError
from uniembed.netcore import EmbeddingNet, SGDState, backward, forward, load_model, save_model, sgd_step
from uniembed.retrieval import EvalSplit, top_k_accuracy
from uniembed.rng import Xoshiro256
from uniembed.tripletlearn import TrainHistory, train_specialist

REPORT_VERSION = 1


@dataclass
class VerticalPartition:
    groups: list  # list of tuples of vertical names

    def __post_init__(self):
        self.groups = [tuple(g) for g in self.groups]
        seen = set()
        for g in self.groups:
            if not g:
                raise SpecError("partition groups must be non-empty")
            if seen & set(g):
                raise SpecError(f"vertical(s) {sorted(seen & set(g))} appear in more than one group")
            seen |= set(g)

    @property
    def verticals(self):
        return sorted(v for g in self.groups for v in g)

    def check_covers(self, verticals):
        if self.verticals != sorted(verticals):
            raise SpecError(f"partition covers {self.verticals}, dataset has {sorted(verticals)}")

    def group_of(self, vertical):
        for i, g in enumerate(self.groups):
            if vertical in g:
                return i
        raise RoutingError(f"vertical {vertical!r} is not in any group")

    def to_dict(self):
        return {"format_version": REPORT_VERSION, "groups": [list(g) for g in self.groups]}

    @classmethod
    def from_dict(cls, doc):
        return cls([tuple(g) for g in doc["groups"]])


@dataclass
class CombineStep:
    group: int
    candidate: str
    accepted: bool
    before: dict  # vertical -> individually trained top-1
    after: dict  # vertical -> top-1 of the tentative group model
    degradation: float  # worst drop in top-1 points across the tentative group


@dataclass
class CombineReport:
    epsilon: float
    order: list
    baselines: dict
    steps: list = field(default_factory=list)

    def to_dict(self):
        return {
            "format_version": REPORT_VERSION,
            "epsilon": self.epsilon if math.isfinite(self.epsilon) else "inf",
            "order": list(self.order),
            "baselines": self.baselines,
            "steps": [
                {
                    "group": s.group,
                    "candidate": s.candidate,
                    "accepted": s.accepted,
                    "before": s.before,
                    "after": s.after,
                    "degradation": s.degradation,
                }
                for s in self.steps
            ],
        }


def greedy_partition(order, epsilon, score_group):
    """Greedy grouping driven by ``score_group(verticals) -> {vertical: top1}``.

    Baselines are the single-vertical scores. A candidate joins the open
    group iff no member of the tentative group drops by more than
    ``epsilon`` points (top-1 in [0, 1], so a point is 0.01). Rejected
    candidates stay available for later groups.
    """
    if epsilon < 0:
        raise SpecError("epsilon must be >= 0")
    if len(set(order)) != len(order):
        raise SpecError("vertical order contains duplicates")
    baselines = {v: score_group((v,))[v] for v in order}
    report = CombineReport(epsilon, list(order), baselines)
    uncovered = list(order)
    groups = []
    while uncovered:
        group = [uncovered.pop(0)]
        for cand in list(uncovered):
            tentative = group + [cand]
            scores = score_group(tuple(tentative))
            drops = {v: 100.0 * (baselines[v] - scores[v]) for v in tentative}
            worst = max(drops.values())
            ok = worst <= epsilon
            report.steps.append(
                CombineStep(
                    len(groups),
                    cand,
                    ok,
                    {v: baselines[v] for v in tentative},
                    {v: scores[v] for v in tentative},
                    worst,
                )
            )
            if ok:
                group = tentative
                uncovered.remove(cand)
        groups.append(tuple(group))
    return VerticalPartition(groups), report


def group_top1(dataset, verticals, net_config, triplet_config):
    """Train a specialist on ``verticals`` and score it on their own pool."""
    net, _ = train_specialist(dataset, verticals, net_config, triplet_config)
    report = top_k_accuracy(net, dataset, EvalSplit.from_dataset(dataset, verticals), [1])
    return net, {v: report.accuracy(v, 1) for v in verticals}


def greedy_combine(dataset, vertical_order, epsilon, net_config, triplet_config, *, threads=1, models=None):
    """Returns (VerticalPartition, CombineReport).

    ``models``, if a dict, collects the trained network of every scored
    group keyed by its vertical tuple. With ``threads > 1`` the individual
    baselines train concurrently; decisions are still made in order.
    """
    if sorted(vertical_order) != dataset.verticals:
        raise SpecError("vertical_order must be a permutation of the dataset's verticals")
    cache = {}

    def score(group):
        key = tuple(group)
        if key not in cache:
            net, scores = group_top1(dataset, key, net_config, triplet_config)
            cache[key] = scores
            if models is not None:
                models[key] = net
        return cache[key]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda v: score((v,)), vertical_order))
    return greedy_partition(list(vertical_order), epsilon, score)


@dataclass
class SpecialistRegistry:
    entries: list  # list of (tuple of verticals, EmbeddingNet)

    def __post_init__(self):
        self.entries = [(tuple(vs), net) for vs, net in self.entries]
        VerticalPartition([vs for vs, _ in self.entries])
        dims = {net.config.embedding_dim for _, net in self.entries}
        if len(dims) > 1:
            raise SpecError(f"specialists disagree on embedding_dim: {sorted(dims)}")

    @property
    def partition(self):
        return VerticalPartition([vs for vs, _ in self.entries])

    @property
    def embedding_dim(self):
        return self.entries[0][1].config.embedding_dim

    def model_for(self, vertical):
        for vs, net in self.entries:
            if vertical in vs:
                return net
        raise RoutingError(f"vertical {vertical!r} has no registered specialist")


def save_registry(registry, path, model_dir=None):
    """Write each specialist next to ``path`` and an index JSON at ``path``."""
    path = Path(path)
    model_dir = Path(model_dir) if model_dir else path.parent
    model_dir.mkdir(parents=True, exist_ok=True)
    groups = []
    for i, (vs, net) in enumerate(registry.entries):
        model_path = model_dir / f"specialist_{i}.json"
        save_model(net, model_path)
        groups.append({"verticals": list(vs), "model": os.path.relpath(model_path, path.parent)})
    path.write_text(json.dumps({"format_version": REPORT_VERSION, "groups": groups}, indent=2) + "\n")


def load_registry(path):
    path = Path(path)
    doc = json.loads(path.read_text())
    if doc.get("format_version") != REPORT_VERSION:
        raise UsageError(f"unsupported registry format_version {doc.get('format_version')!r}")
    entries = []
    for g in doc["groups"]:
        model_path = Path(g["model"])
        if not model_path.is_absolute():
            model_path = path.parent / model_path
        entries.append((tuple(g["verticals"]), load_model(model_path)))
    return SpecialistRegistry(entries)


@dataclass
class TargetEmbeddingSet:
    dim: int
    targets: dict  # item id -> np.ndarray

    def __post_init__(self):
        for i, t in self.targets.items():
            if len(t) != self.dim:
                raise ShapeError(f"target for item {i} has length {len(t)}, expected {self.dim}")

    @property
    def item_ids(self):
        return sorted(self.targets)

    def matrix(self, ids):
        try:
            return np.array([self.targets[int(i)] for i in ids])
        except KeyError as exc:
            raise RoutingError(f"no distillation target for item {exc.args[0]}") from None

    def checksum(self):
        h = hashlib.sha256()
        for i in self.item_ids:
            h.update(str(i).encode())
            h.update(np.asarray(self.targets[i], dtype=np.float64).tobytes())
        return h.hexdigest()

    def to_csv(self):
        buf = io.StringIO()
        buf.write(f"# uniembed-targets v1 dim={self.dim}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["item_id", *(f"t{i}" for i in range(self.dim))])
        for i in self.item_ids:
            w.writerow([i, *(format(float(x), ".17g") for x in self.targets[i])])
        return buf.getvalue()

    def save(self, path):
        Path(path).write_text(self.to_csv())


def load_targets(path):
    lines = Path(path).read_text().splitlines()
    prefix = "# uniembed-targets v1 dim="
    if not lines or not lines[0].startswith(prefix):
        raise ParseError("missing targets header", line=1)
    dim = int(lines[0][len(prefix):])
    targets = {}
    for lineno, row in enumerate(csv.reader(lines[2:]), start=3):
        if len(row) != dim + 1:
            raise ParseError(f"expected {dim + 1} columns, got {len(row)}", line=lineno)
        try:
            targets[int(row[0])] = np.array([float(x) for x in row[1:]])
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
    return TargetEmbeddingSet(dim, targets)


def compute_targets(registry, dataset, split="index"):
    """Each item's target is its own group's specialist output, nothing else."""
    ids = dataset.indices(split=split)
    by_group = {}
    for i in ids:
        v = dataset.items[i].vertical
        try:
            net = registry.model_for(v)
        except RoutingError:
            raise RoutingError(f"item {i}: vertical {v!r} has no registered specialist") from None
        by_group.setdefault(id(net), (net, []))[1].append(i)
    targets = {}
    for net, members in by_group.values():
        emb = net.embed(dataset.features(members))
        targets.update({i: row.copy() for i, row in zip(members, emb)})
    return TargetEmbeddingSet(registry.embedding_dim, dict(sorted(targets.items())))


def distill_loss(f_u, f_s):
    """Sum of squared L2 distances and its gradient wrt ``f_u``; ``f_s`` is constant."""
    f_u = np.asarray(f_u, dtype=np.float64)
    f_s = np.asarray(f_s, dtype=np.float64)
    if f_u.shape != f_s.shape:
        raise ShapeError(f"shape mismatch: {f_u.shape} vs {f_s.shape}")
    diff = f_u - f_s
    return float(np.sum(diff * diff)), 2.0 * diff


def train_unified(dataset, targets, net_config, steps, lr=0.05, momentum=0.9, batch_size=32, seed=0,
                  *, eval_every=100, split="index"):
    """Regress a single network onto ``targets`` with shuffled mini-batches.

    The loss per step is the batch-mean of squared distances; the history
    records that mean averaged over each checkpoint window.
    """
    if net_config.embedding_dim != targets.dim:
        raise SpecError(f"unified embedding_dim {net_config.embedding_dim} != target dim {targets.dim}")
    if steps < 0 or batch_size < 1:
        raise SpecError("steps must be >= 0 and batch_size >= 1")
    ids = dataset.indices(split=split)
    if not ids:
        raise SpecError("no training items")
    net = EmbeddingNet.init(net_config)
    history = TrainHistory()
    rng = Xoshiro256(seed)
    state = SGDState(net)
    order, pos = [], 0
    window = []
    for step in range(1, steps + 1):
        batch = []
        while len(batch) < batch_size:
            if pos == len(order):
                order, pos = rng.shuffle(list(ids)), 0
            take = order[pos : pos + batch_size - len(batch)]
            batch.extend(take)
            pos += len(take)
        goal = targets.matrix(batch)
        out, cache = forward(net, dataset.features(batch))
        loss, grad = distill_loss(out, goal)
        loss /= len(batch)
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite loss at step {step}", step=step)
        sgd_step(net, backward(net, cache, grad / len(batch)), lr, momentum, state)
        window.append(loss)
        if step % eval_every == 0 or step == steps:
            history.append(step, float(np.mean(window)))
            window = []
    return net, history


def mean_target_distance(net, dataset, targets):
    """Mean per-item squared distance between ``net`` outputs and targets."""
    ids = targets.item_ids
    out = net.embed(dataset.features(ids))
    return float(np.mean(np.sum((out - targets.matrix(ids)) ** 2, axis=1)))
