"""Line-oriented ``key = value`` run configuration.

``#`` starts a comment. Unknown keys are rejected; keys left unset keep the
defaults below. Lists are comma-separated and may be empty.
"""

import typing
from dataclasses import dataclass, fields, replace
from pathlib import Path

from uniembed.errors import ConfigError
from uniembed.netcore import NetConfig
from uniembed.synthdata import GenSpec
from uniembed.tripletlearn import TripletConfig

IntList = tuple[int, ...]
StrList = tuple[str, ...]


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42
    threads: int = 1
    # synthetic data
    verticals: int = 4
    products_per_vertical: int = 20
    items_per_product: int = 12
    input_dim: int = 32
    vertical_spread: float = 10.0
    product_spread: float = 2.0
    sample_noise: float = 0.3
    query_fraction: float = 0.25
    conflict_verticals: IntList = ()
    noise_rate: float = 0.2
    # specialist networks and triplet training
    hidden_dims: IntList = (64, 32)
    embedding_dim: int = 16
    activation: str = "relu"
    normalize_output: bool = True
    alpha: float = 0.2
    batch_products: int = 8
    images_per_product: int = 4
    steps: int = 2000
    lr: float = 0.05
    momentum: float = 0.9
    eval_every: int = 100
    finetune_steps: int = 500
    # vertical combination and distillation
    epsilon: float = 1.0
    vertical_order: StrList = ()
    unified_hidden_dims: IntList = (64, 32)
    distill_steps: int = 4000
    distill_lr: float = 0.05
    distill_momentum: float = 0.9
    distill_batch_size: int = 32
    # evaluation
    ks: IntList = (1, 5, 20)
    # default paths, used when the matching flag is absent
    data: str = ""
    out_dir: str = ""

    def gen_spec(self):
        return GenSpec(
            verticals=self.verticals,
            products_per_vertical=self.products_per_vertical,
            items_per_product=self.items_per_product,
            input_dim=self.input_dim,
            vertical_spread=self.vertical_spread,
            product_spread=self.product_spread,
            sample_noise=self.sample_noise,
            query_fraction=self.query_fraction,
            conflict_verticals=tuple(self.conflict_verticals),
            seed=self.seed,
        )

    def net_config(self, input_dim=None):
        return NetConfig(
            input_dim=input_dim or self.input_dim,
            hidden_dims=self.hidden_dims,
            embedding_dim=self.embedding_dim,
            activation=self.activation,
            normalize_output=self.normalize_output,
            seed=self.seed,
        )

    def unified_net_config(self, input_dim=None):
        return replace(self.net_config(input_dim), hidden_dims=self.unified_hidden_dims)

    def triplet_config(self, steps=None):
        return TripletConfig(
            alpha=self.alpha,
            batch_products=self.batch_products,
            images_per_product=self.images_per_product,
            steps=self.steps if steps is None else steps,
            lr=self.lr,
            momentum=self.momentum,
            seed=self.seed,
            eval_every=self.eval_every,
        )


_TYPES = typing.get_type_hints(RunConfig)
KEYS = tuple(f.name for f in fields(RunConfig))


def _convert(key, raw):
    kind = _TYPES[key]
    raw = raw.strip()
    if kind is bool:
        low = raw.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    if kind is str:
        return raw
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if kind == IntList:
        return tuple(int(p) for p in parts)
    return tuple(parts)


def coerce(key, raw, line=None):
    if key not in _TYPES:
        raise ConfigError(f"unknown config key {key!r}", line=line, key=key)
    try:
        return _convert(key, raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}", line=line, key=key) from None


def parse_config_text(text):
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", line=lineno)
        key, raw = (s.strip() for s in body.split("=", 1))
        values[key] = coerce(key, raw, lineno)
    return RunConfig(**values)


def parse_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text)


def with_overrides(cfg, pairs):
    """Apply ``key=value`` strings on top of ``cfg``."""
    updates = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override must look like key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        key = key.strip()
        updates[key] = coerce(key, raw)
    return replace(cfg, **updates)
