"""Finite-difference verification of the analytic gradients.

The relative error of one parameter is ``|a - n| / max(|a|, |n|, floor)``
with ``floor = 1e-6``, so parameters whose true gradient is below roughly
the finite-difference noise level are compared absolutely.
"""

from dataclasses import dataclass, field

import numpy as np

from uniembed.netcore import EmbeddingNet, GradSet, Layer, backward, forward
from uniembed.rng import Xoshiro256
from uniembed.tripletlearn import batch_triplet_loss, mine_semi_hard
from uniembed.unify import distill_loss

FD_STEP = 1e-5
GRAD_FLOOR = 1e-6
KINK_BAND = 1e-6
KINK_NUDGE = 1e-3
LOSS_KINDS = ("triplet", "distill")


@dataclass
class GradCheckReport:
    loss_kind: str
    tol: float
    layer_errors: list  # max relative error per layer (weights and bias together)
    failing_layers: list = field(default_factory=list)

    @property
    def max_error(self):
        return max(self.layer_errors) if self.layer_errors else 0.0

    @property
    def passed(self):
        return not self.failing_layers

    def to_dict(self):
        return {
            "format_version": 1,
            "loss": self.loss_kind,
            "tol": self.tol,
            "max_relative_error": self.max_error,
            "layer_max_relative_error": self.layer_errors,
            "failing_layers": self.failing_layers,
            "passed": self.passed,
        }


def seeded_random_net(config, bias_scale=0.1):
    """Glorot weights plus uniform biases in [-bias_scale, bias_scale].

    Zero biases make exact-zero pre-activations common (a sample whose
    upstream units are all off), which no input nudge can move.
    """
    net = EmbeddingNet.init(config)
    rng = Xoshiro256(config.seed ^ 0x5EED)
    for layer in net.layers:
        layer.bias[:] = [rng.uniform(-bias_scale, bias_scale) for _ in range(layer.bias.size)]
    return net


def relative_error(a, n, floor=GRAD_FLOOR):
    a = np.asarray(a, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def numeric_gradients(net, loss_fn, h=FD_STEP):
    """Central differences of ``loss_fn(net)`` for every parameter."""
    out = []
    for layer in net.layers:
        grads = []
        for param in (layer.weight, layer.bias):
            g = np.zeros_like(param)
            flat, gflat = param.reshape(-1), g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = loss_fn(net)
                flat[i] = orig - h
                down = loss_fn(net)
                flat[i] = orig
                gflat[i] = (up - down) / (2.0 * h)
            grads.append(g)
        out.append(Layer(*grads))
    net.bump()
    return GradSet(out)


def compare_gradients(analytic, numeric, tol, loss_kind=""):
    errors, failing = [], []
    for i, (a, n) in enumerate(zip(analytic, numeric)):
        err = max(float(relative_error(a.weight, n.weight).max()), float(relative_error(a.bias, n.bias).max()))
        errors.append(err)
        if not err < tol:
            failing.append(i)
    return GradCheckReport(loss_kind, tol, errors, failing)


def nudge_off_kinks(net, inputs, band=KINK_BAND, nudge=KINK_NUDGE, max_rounds=100):
    """Shift input rows whose hidden pre-activations sit within ``band`` of 0."""
    x = np.array(inputs, dtype=np.float64)
    if net.config.activation != "relu":
        return x
    last = len(net.layers) - 1
    for _ in range(max_rounds):
        _, cache = forward(net, x)
        near = np.zeros(len(x), dtype=bool)
        for i, z in enumerate(cache.pre):
            if i < last or net.config.activate_output:
                near |= np.any(np.abs(z) < band, axis=1)
        if not near.any():
            break
        x[near] += nudge
    return x


def make_problem(net, loss_kind, *, batch_size=16, products=4, alpha=0.2, seed=0):
    """Seeded inputs plus a closure computing the scalar loss and its
    embedding gradient for ``loss_kind``."""
    if loss_kind not in LOSS_KINDS:
        raise ValueError(f"loss_kind must be one of {LOSS_KINDS}")
    rng = Xoshiro256(seed)
    d = net.config.input_dim
    x = np.array(rng.normals(batch_size * d)).reshape(batch_size, d)
    x = nudge_off_kinks(net, x)
    if loss_kind == "triplet":
        prods = [f"p{i % products}" for i in range(batch_size)]
        verts = ["v0"] * batch_size
        emb, _ = forward(net, x)
        triplets = mine_semi_hard(emb, prods, verts, alpha)

        def loss_and_grad(e):
            return batch_triplet_loss(e, triplets, alpha)

    else:
        goal = np.array(rng.normals(batch_size * net.config.embedding_dim)).reshape(batch_size, -1)
        if net.config.normalize_output:
            goal /= np.linalg.norm(goal, axis=1, keepdims=True)

        def loss_and_grad(e):
            return distill_loss(e, goal)

    return x, loss_and_grad


def analytic_gradients(net, inputs, loss_and_grad):
    emb, cache = forward(net, inputs)
    _, g = loss_and_grad(emb)
    return backward(net, cache, g)


def grad_check(net, loss_kind, tol=1e-4, *, seed=0, batch_size=16, alpha=0.2, h=FD_STEP):
    """Compare backprop against central differences on a seeded batch.

    Triplets are mined once at the starting parameters and then held fixed,
    so the checked function is smooth away from hinge and relu kinks.
    """
    net = net.copy()
    x, loss_and_grad = make_problem(net, loss_kind, batch_size=batch_size, alpha=alpha, seed=seed)
    analytic = analytic_gradients(net, x, loss_and_grad)
    numeric = numeric_gradients(net, lambda m: loss_and_grad(forward(m, x)[0])[0], h)
    return compare_gradients(analytic, numeric, tol, loss_kind)
