"""Small MLP embedding network with exact manual backpropagation.

Weights are stored as (out_dim, in_dim) arrays, so a layer computes
``z = a @ W.T + b``. Hidden layers apply the configured activation; the
output layer is linear unless ``activate_output`` is set, and is then
optionally L2-normalized row by row.
"""

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from uniembed.errors import FormatVersionError, ParseError, ShapeError, SpecError, TrainingError, UsageError
from uniembed.rng import Xoshiro256

FORMAT_VERSION = 1
NORM_EPS = 1e-12
ACTIVATIONS = ("relu", "identity")


@dataclass
class NetConfig:
    input_dim: int = 32
    hidden_dims: tuple = (64, 32)
    embedding_dim: int = 16
    activation: str = "relu"
    normalize_output: bool = True
    activate_output: bool = False
    seed: int = 0

    def __post_init__(self):
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        if self.input_dim < 1:
            raise SpecError("input_dim must be >= 1")
        if self.embedding_dim < 2:
            raise SpecError("embedding_dim must be >= 2")
        if any(h < 1 for h in self.hidden_dims):
            raise SpecError("hidden dims must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise SpecError(f"unknown activation {self.activation!r}")

    @property
    def dims(self):
        return (self.input_dim, *self.hidden_dims, self.embedding_dim)


@dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray


@dataclass
class GradSet:
    layers: list  # list of Layer holding gradients

    def __iter__(self):
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)


@dataclass
class ForwardCache:
    net_token: int
    version: int
    inputs: np.ndarray
    pre: list  # pre-activations per layer
    post: list  # layer outputs (after activation) per layer
    raw_output: np.ndarray
    norms: np.ndarray | None = None
    normalized: np.ndarray | None = None


@dataclass(eq=False)
class EmbeddingNet:
    config: NetConfig
    layers: list = field(default_factory=list)
    _version: int = field(default=0, repr=False)

    @classmethod
    def init(cls, config):
        """Glorot-uniform weights from the config seed, zero biases."""
        rng = Xoshiro256(config.seed)
        layers = []
        dims = config.dims
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            s = math.sqrt(6.0 / (fan_in + fan_out))
            w = np.array([rng.uniform(-s, s) for _ in range(fan_in * fan_out)], dtype=np.float64)
            layers.append(Layer(w.reshape(fan_out, fan_in), np.zeros(fan_out)))
        return cls(config, layers)

    def copy(self):
        layers = [Layer(l.weight.copy(), l.bias.copy()) for l in self.layers]
        cfg = NetConfig(**asdict(self.config))
        return EmbeddingNet(cfg, layers)

    def embed(self, inputs):
        return forward(self, inputs)[0]

    def zero_grads(self):
        return GradSet([Layer(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in self.layers])

    def same_parameters(self, other):
        return len(self.layers) == len(other.layers) and all(
            np.array_equal(a.weight, b.weight) and np.array_equal(a.bias, b.bias)
            for a, b in zip(self.layers, other.layers)
        )

    def bump(self):
        self._version += 1


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z


def _activate_grad(z, kind):
    if kind == "relu":
        return (z > 0).astype(np.float64)
    return np.ones_like(z)


def forward(net, inputs):
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.config.input_dim:
        raise ShapeError(f"expected inputs with {net.config.input_dim} columns, got shape {x.shape}")
    cfg = net.config
    pre, post = [], []
    a = x
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        z = a @ layer.weight.T + layer.bias
        pre.append(z)
        if i < last or cfg.activate_output:
            a = _activate(z, cfg.activation)
        else:
            a = z
        post.append(a)
    cache = ForwardCache(id(net), net._version, x, pre, post, a)
    if not cfg.normalize_output:
        return a, cache
    norms = np.sqrt(np.sum(a * a, axis=1))
    safe = np.where(norms > NORM_EPS, norms, 1.0)
    y = np.where((norms > NORM_EPS)[:, None], a / safe[:, None], a)
    cache.norms = norms
    cache.normalized = y
    return y, cache


def backward(net, cache, grad_embeddings):
    if cache.net_token != id(net) or cache.version != net._version:
        raise UsageError("forward cache does not belong to the current network parameters")
    g = np.asarray(grad_embeddings, dtype=np.float64)
    if g.shape != cache.raw_output.shape:
        raise ShapeError(f"gradient shape {g.shape} != embedding shape {cache.raw_output.shape}")
    cfg = net.config
    if cfg.normalize_output:
        y, norms = cache.normalized, cache.norms
        live = norms > NORM_EPS
        safe = np.where(live, norms, 1.0)
        proj = g - y * np.sum(y * g, axis=1, keepdims=True)
        g = np.where(live[:, None], proj / safe[:, None], g)
    grads = [None] * len(net.layers)
    last = len(net.layers) - 1
    for i in range(last, -1, -1):
        z = cache.pre[i]
        if i < last or cfg.activate_output:
            g = g * _activate_grad(z, cfg.activation)
        a_prev = cache.post[i - 1] if i > 0 else cache.inputs
        grads[i] = Layer(g.T @ a_prev, g.sum(axis=0))
        if i > 0:
            g = g @ net.layers[i].weight
    return GradSet(grads)


class SGDState:
    """Momentum buffers mirroring the network's parameter shapes."""

    def __init__(self, net):
        self.velocity = net.zero_grads()


def sgd_step(net, grads, lr, momentum=0.0, state=None):
    """v <- momentum*v + g; w <- w - lr*v. Mutates ``net``; returns the state."""
    if not lr > 0:
        raise SpecError("lr must be > 0")
    if not 0.0 <= momentum < 1.0:
        raise SpecError("momentum must be in [0, 1)")
    for i, g in enumerate(grads):
        if not (np.all(np.isfinite(g.weight)) and np.all(np.isfinite(g.bias))):
            raise TrainingError(f"non-finite gradient in layer {i}", layer=i)
    if state is None:
        state = SGDState(net)
    for layer, g, v in zip(net.layers, grads, state.velocity):
        v.weight *= momentum
        v.weight += g.weight
        v.bias *= momentum
        v.bias += g.bias
        layer.weight -= lr * v.weight
        layer.bias -= lr * v.bias
    net.bump()
    return state


def _fmt(x):
    return format(float(x), ".17g")


def _dump_reals(values):
    return "[" + ", ".join(_fmt(v) for v in values) + "]"


def dumps_model(net):
    cfg = asdict(net.config)
    cfg["hidden_dims"] = list(cfg["hidden_dims"])
    parts = []
    for layer in net.layers:
        rows, cols = layer.weight.shape
        parts.append(
            f'{{"rows": {rows}, "cols": {cols}, '
            f'"weights": {_dump_reals(layer.weight.ravel())}, '
            f'"bias": {_dump_reals(layer.bias)}}}'
        )
    return (
        f'{{"format_version": {FORMAT_VERSION}, '
        f'"config": {json.dumps(cfg, sort_keys=True)}, '
        f'"layers": [{", ".join(parts)}]}}\n'
    )


def save_model(net, path):
    Path(path).write_text(dumps_model(net))


def loads_model(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"model file is not valid JSON: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ParseError("model file lacks format_version")
    if str(doc["format_version"]) != str(FORMAT_VERSION):
        raise FormatVersionError(f"unsupported model format_version {doc['format_version']!r}")
    try:
        cfg = NetConfig(**doc["config"])
        layers = []
        for spec in doc["layers"]:
            w = np.array(spec["weights"], dtype=np.float64)
            if w.size != spec["rows"] * spec["cols"]:
                raise ParseError("weight count does not match rows*cols")
            layers.append(Layer(w.reshape(spec["rows"], spec["cols"]), np.array(spec["bias"], dtype=np.float64)))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed model file: {exc}") from exc
    dims = cfg.dims
    if [l.weight.shape for l in layers] != list(zip(dims[1:], dims[:-1])):
        raise ParseError("layer shapes do not chain the configured dims")
    return EmbeddingNet(cfg, layers)


def load_model(path):
    return loads_model(Path(path).read_text())
