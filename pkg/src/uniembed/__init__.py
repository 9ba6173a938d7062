"""Per-vertical triplet specialists, greedy vertical combination and
distillation into one unified embedding model, on synthetic feature data."""

from uniembed.errors import UniEmbedError
from uniembed.netcore import EmbeddingNet, NetConfig, load_model, save_model
from uniembed.rng import Xoshiro256

__version__ = "0.1.0"

__all__ = [
    "EmbeddingNet",
    "NetConfig",
    "UniEmbedError",
    "Xoshiro256",
    "load_model",
    "save_model",
]
