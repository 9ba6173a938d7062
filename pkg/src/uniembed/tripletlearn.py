"""Triplet-loss training of specialist embedding models.

The distance is squared Euclidean. Negatives are always drawn from a
different product of the anchor's own vertical, even when the training
scope spans several verticals.
"""

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from uniembed.errors import SamplingError, ShapeError, SpecError, TrainingError
from uniembed.netcore import EmbeddingNet, SGDState, backward, forward, sgd_step
from uniembed.retrieval import top_k_accuracy
from uniembed.rng import Xoshiro256


@dataclass
class TripletConfig:
    alpha: float = 0.2
    batch_products: int = 8
    images_per_product: int = 4
    steps: int = 2000
    lr: float = 0.05
    momentum: float = 0.9
    seed: int = 0
    eval_every: int = 100

    def validate(self):
        if not self.alpha > 0:
            raise SpecError("alpha must be > 0")
        if self.batch_products < 2 or self.images_per_product < 2:
            raise SpecError("batch_products and images_per_product must be >= 2")
        if self.steps < 0:
            raise SpecError("steps must be >= 0")
        if self.eval_every < 1:
            raise SpecError("eval_every must be >= 1")


@dataclass(frozen=True)
class Triplet:
    anchor: int
    positive: int
    negative: int


@dataclass
class Checkpoint:
    step: int
    mean_loss: float
    top1: float | None = None


@dataclass
class TrainHistory:
    checkpoints: list = field(default_factory=list)

    def append(self, step, mean_loss, top1=None):
        if self.checkpoints and step <= self.checkpoints[-1].step:
            raise ValueError("history steps must be strictly increasing")
        self.checkpoints.append(Checkpoint(step, mean_loss, top1))

    @property
    def steps(self):
        return [c.step for c in self.checkpoints]

    @property
    def losses(self):
        return [c.mean_loss for c in self.checkpoints]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "mean_loss", "top1"])
        for c in self.checkpoints:
            w.writerow([c.step, repr(c.mean_loss), "" if c.top1 is None else repr(c.top1)])
        return buf.getvalue()

    def save_csv(self, path):
        Path(path).write_text(self.to_csv())


def distance(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"dimension mismatch: {x.shape} vs {y.shape}")
    d = x - y
    return float(np.sum(d * d))


def triplet_loss(fa, fp, fn, alpha):
    """Hinge loss max(0, alpha + D(a,p) - D(a,n)) and its gradients wrt
    (fa, fp, fn). At the hinge boundary the gradient is zero."""
    fa, fp, fn = (np.asarray(v, dtype=np.float64) for v in (fa, fp, fn))
    if not fa.shape == fp.shape == fn.shape:
        raise ShapeError("anchor, positive and negative must share a shape")
    value = alpha + distance(fa, fp) - distance(fa, fn)
    if value <= 0:
        z = np.zeros_like(fa)
        return 0.0, (z, z.copy(), z.copy())
    return value, (2.0 * (fn - fp), 2.0 * (fp - fa), 2.0 * (fa - fn))


def pairwise_sq_distances(emb):
    # Same reduction as ``distance`` so each entry matches it bit for bit.
    diff = emb[:, None, :] - emb[None, :, :]
    return np.sum(diff * diff, axis=2)


def batch_triplet_loss(emb, triplets, alpha):
    """Mean hinge loss over ``triplets`` and its gradient wrt ``emb``."""
    grad = np.zeros_like(emb)
    if not triplets:
        return 0.0, grad
    a = np.array([t.anchor for t in triplets])
    p = np.array([t.positive for t in triplets])
    n = np.array([t.negative for t in triplets])
    ea, ep, en = emb[a], emb[p], emb[n]
    dap = np.sum((ea - ep) ** 2, axis=1)
    dan = np.sum((ea - en) ** 2, axis=1)
    hinge = alpha + dap - dan
    active = hinge > 0
    count = len(triplets)
    loss = float(np.sum(np.where(active, hinge, 0.0)) / count)
    w = (active / count)[:, None]
    np.add.at(grad, a, w * 2.0 * (en - ep))
    np.add.at(grad, p, w * 2.0 * (ep - ea))
    np.add.at(grad, n, w * 2.0 * (ea - en))
    return loss, grad


def sample_batch(dataset, vertical_scope, P, K, rng, split="index"):
    """P distinct products from the scope, K distinct items of each."""
    members = dataset.product_members(vertical_scope, split)
    eligible = [pid for pid, ids in members.items() if len(ids) >= K]
    if len(eligible) < P:
        raise SamplingError(
            f"scope {sorted(vertical_scope)} has {len(eligible)} products with >= {K} items; need {P}"
        )
    batch = []
    for pid in rng.sample(eligible, P):
        batch.extend(rng.sample(members[pid], K))
    return batch


def mine_semi_hard(embeddings, product_labels, vertical_labels, alpha):
    """One triplet per ordered (anchor, positive) pair.

    Prefers the closest negative with D(a,p) < D(a,n) <= D(a,p) + alpha; falls
    back to the farthest negative. Ties go to the lowest index.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    prod = np.asarray(product_labels, dtype=object)
    vert = np.asarray(vertical_labels, dtype=object)
    n = len(emb)
    if n == 0:
        return []
    dist = pairwise_sq_distances(emb)
    same_prod = prod[:, None] == prod[None, :]
    neg_mask = (~same_prod) & (vert[:, None] == vert[None, :])
    pair_mask = same_prod & ~np.eye(n, dtype=bool)
    anchors, positives = np.nonzero(pair_mask)  # row-major: anchor, then positive
    cand = neg_mask[anchors]
    keep = cand.any(axis=1)
    anchors, positives, cand = anchors[keep], positives[keep], cand[keep]
    rows = dist[anchors]
    dap = dist[anchors, positives][:, None]
    band = cand & (rows > dap) & (rows <= dap + alpha)
    closest = np.argmin(np.where(band, rows, np.inf), axis=1)
    farthest = np.argmax(np.where(cand, rows, -np.inf), axis=1)
    negatives = np.where(band.any(axis=1), closest, farthest)
    return [Triplet(int(a), int(p), int(q)) for a, p, q in zip(anchors, positives, negatives)]


def train_specialist(
    dataset,
    vertical_scope,
    net_config,
    triplet_config,
    *,
    init_net=None,
    eval_split=None,
    split="index",
):
    """Train on ``split`` items of ``vertical_scope``; returns (net, history).

    With ``init_net`` training continues from a copy of that network (used
    for the clean-label fine-tuning phase). ``eval_split`` adds a top-1
    measurement to each checkpoint.
    """
    cfg = triplet_config
    cfg.validate()
    net = init_net.copy() if init_net is not None else EmbeddingNet.init(net_config)
    history = TrainHistory()
    rng = Xoshiro256(cfg.seed)
    state = SGDState(net)
    scope = sorted(vertical_scope)
    window = []
    for step in range(1, cfg.steps + 1):
        batch = sample_batch(dataset, scope, cfg.batch_products, cfg.images_per_product, rng, split)
        emb, cache = forward(net, dataset.features(batch))
        triplets = mine_semi_hard(emb, dataset.product_labels[batch], dataset.vertical_labels[batch], cfg.alpha)
        loss, grad = batch_triplet_loss(emb, triplets, cfg.alpha)
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite loss at step {step}", step=step)
        if triplets:
            try:
                sgd_step(net, backward(net, cache, grad), cfg.lr, cfg.momentum, state)
            except TrainingError as exc:
                exc.step = step
                raise
        window.append(loss)
        if step % cfg.eval_every == 0 or step == cfg.steps:
            top1 = None
            if eval_split is not None:
                top1 = mean_top1(top_k_accuracy(net, dataset, eval_split, [1]))
            history.append(step, float(np.mean(window)), top1)
            window = []
    return net, history


def mean_top1(report):
    return float(np.mean([report.accuracy(v, 1) for v in report.verticals]))
