"""Seeded multi-vertical synthetic data standing in for image features.

Layout of one generated vertical:

* the vertical center sits at ``vertical_spread * u_v`` for orthonormal
  directions ``u_v``, so normal verticals are ``sqrt(2) * vertical_spread``
  apart;
* input dimensions are split into a *signal* half and a *nuisance* half.
  Product centers move only along the signal half (RMS radius
  ``product_spread``); every item redraws the nuisance half at the same
  radius, then adds isotropic noise of RMS radius ``sample_noise``;
* a conflict vertical reuses the center of the first normal vertical but
  swaps the roles of the two halves, so the metric that identifies products
  for one vertical is pure noise for the other.

Features are rounded to float32 so the 9-digit CSV form is lossless.
"""

import csv
import io
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from uniembed.errors import ParseError, SpecError
from uniembed.rng import Xoshiro256

SPLITS = ("index", "query")
HEADER_RE = re.compile(r"^# uniembed-dataset v1 dim=(\d+)\s*$")


@dataclass(frozen=True)
class Item:
    item_id: int
    vertical: str
    product_id: str
    split: str
    features: tuple


@dataclass(eq=False)
class Dataset:
    input_dim: int
    items: list

    def __post_init__(self):
        for pos, item in enumerate(self.items):
            if item.item_id != pos:
                raise SpecError(f"item ids must be dense 0..N-1 (position {pos} has id {item.item_id})")
            if item.split not in SPLITS:
                raise SpecError(f"item {pos}: unknown split {item.split!r}")
            if len(item.features) != self.input_dim:
                raise SpecError(f"item {pos}: expected {self.input_dim} features")

    def __eq__(self, other):
        return isinstance(other, Dataset) and self.input_dim == other.input_dim and self.items == other.items

    def __len__(self):
        return len(self.items)

    @cached_property
    def _matrix(self):
        m = np.array([it.features for it in self.items], dtype=np.float64).reshape(len(self.items), self.input_dim)
        if not np.all(np.isfinite(m)):
            raise SpecError("features must be finite")
        return m

    @cached_property
    def vertical_labels(self):
        return np.array([it.vertical for it in self.items], dtype=object)

    @cached_property
    def product_labels(self):
        return np.array([it.product_id for it in self.items], dtype=object)

    @cached_property
    def verticals(self):
        return sorted({it.vertical for it in self.items})

    def features(self, indices):
        """Feature rows for the given item ids; the single read path for inputs."""
        return self._matrix[np.asarray(indices, dtype=np.int64)]

    def indices(self, verticals=None, split=None):
        keep = set(verticals) if verticals is not None else None
        return [
            it.item_id
            for it in self.items
            if (keep is None or it.vertical in keep) and (split is None or it.split == split)
        ]

    def products_by_vertical(self):
        out = {}
        for it in self.items:
            out.setdefault(it.vertical, set()).add(it.product_id)
        return {v: sorted(ps) for v, ps in sorted(out.items())}

    def product_members(self, verticals, split=None):
        """product id -> sorted item ids, for products inside ``verticals``."""
        cache = self.__dict__.setdefault("_members_cache", {})
        key = (frozenset(verticals), split)
        if key not in cache:
            members = {}
            for i in self.indices(verticals, split):
                members.setdefault(self.items[i].product_id, []).append(i)
            cache[key] = dict(sorted(members.items()))
        return cache[key]

    def vertical_sizes(self, split="index"):
        sizes = {v: 0 for v in self.verticals}
        for it in self.items:
            if split is None or it.split == split:
                sizes[it.vertical] += 1
        return sizes

    def default_order(self, split="index"):
        """Verticals by descending training-set size, ties by name."""
        sizes = self.vertical_sizes(split)
        return sorted(sizes, key=lambda v: (-sizes[v], v))


@dataclass
class GenSpec:
    verticals: int = 4
    products_per_vertical: int = 20
    items_per_product: int = 12
    input_dim: int = 32
    vertical_spread: float = 10.0
    product_spread: float = 2.0
    sample_noise: float = 0.3
    query_fraction: float = 0.25
    conflict_verticals: tuple = field(default_factory=tuple)
    seed: int = 42

    def validate(self):
        for name in ("verticals", "products_per_vertical", "items_per_product", "input_dim"):
            if int(getattr(self, name)) < 1:
                raise SpecError(f"{name} must be >= 1")
        for name in ("vertical_spread", "product_spread", "sample_noise"):
            if not getattr(self, name) > 0:
                raise SpecError(f"{name} must be > 0")
        if not 0.0 < self.query_fraction < 1.0:
            raise SpecError("query_fraction must lie in (0, 1)")
        if self.input_dim < 2:
            raise SpecError("input_dim must be >= 2 to hold signal and nuisance halves")
        conflicts = set(self.conflict_verticals)
        if any(c < 0 or c >= self.verticals for c in conflicts):
            raise SpecError(f"conflict vertical indices out of range: {sorted(conflicts)}")
        if len(conflicts) >= self.verticals:
            raise SpecError("at least one vertical must be non-conflicting")
        if self.verticals - len(conflicts) > self.input_dim:
            raise SpecError("more normal verticals than input dimensions")


def vertical_name(v):
    return f"v{v}"


def _orthonormal(rng, count, dim):
    basis = []
    while len(basis) < count:
        vec = np.array(rng.normals(dim))
        for b in basis:
            vec -= (vec @ b) * b
        norm = np.linalg.norm(vec)
        if norm > 1e-8:
            basis.append(vec / norm)
    return basis


def generate(spec):
    spec.validate()
    rng = Xoshiro256(spec.seed)
    d = spec.input_dim
    conflicts = set(spec.conflict_verticals)
    normal = [v for v in range(spec.verticals) if v not in conflicts]
    dirs = dict(zip(normal, _orthonormal(rng, len(normal), d)))
    centers = {v: spec.vertical_spread * dirs[v] for v in normal}
    for v in conflicts:
        centers[v] = centers[normal[0]]

    perm = rng.shuffle(list(range(d)))
    half = d // 2
    family = (np.array(sorted(perm[:half])), np.array(sorted(perm[half:])))
    swapped = (family[1], family[0])

    n_query = min(int(round(spec.query_fraction * spec.items_per_product)), spec.items_per_product - 1)
    noise_sd = spec.sample_noise / math.sqrt(d)
    items = []
    for v in range(spec.verticals):
        signal, nuisance = swapped if v in conflicts else family
        sig_sd = spec.product_spread / math.sqrt(len(signal))
        nui_sd = spec.product_spread / math.sqrt(len(nuisance))
        for p in range(spec.products_per_vertical):
            pcenter = centers[v].copy()
            pcenter[signal] += rng.normals(len(signal), sig_sd)
            order = rng.shuffle(list(range(spec.items_per_product)))
            query_slots = set(order[:n_query])
            for k in range(spec.items_per_product):
                x = pcenter.copy()
                x[nuisance] += rng.normals(len(nuisance), nui_sd)
                x += rng.normals(d, noise_sd)
                feats = tuple(float(f) for f in x.astype(np.float32))
                items.append(
                    Item(
                        item_id=len(items),
                        vertical=vertical_name(v),
                        product_id=f"{vertical_name(v)}_p{p:03d}",
                        split="query" if k in query_slots else "index",
                        features=feats,
                    )
                )
    return Dataset(d, items)


def add_label_noise(dataset, rate, rng):
    """Reassign each item's product, with probability ``rate``, to another
    product of the same vertical. Returns a new dataset."""
    if not 0.0 <= rate <= 1.0:
        raise SpecError(f"noise rate must lie in [0, 1], got {rate}")
    products = dataset.products_by_vertical()
    out = []
    for it in dataset.items:
        if rng.random() < rate:
            others = [p for p in products[it.vertical] if p != it.product_id]
            if not others:
                raise SpecError(f"vertical {it.vertical} has fewer than 2 products")
            it = Item(it.item_id, it.vertical, others[rng.below(len(others))], it.split, it.features)
        out.append(it)
    return Dataset(dataset.input_dim, out)


def count_relabelled(original, noisy):
    return sum(a.product_id != b.product_id for a, b in zip(original.items, noisy.items))


def dumps_dataset(dataset):
    buf = io.StringIO()
    buf.write(f"# uniembed-dataset v1 dim={dataset.input_dim}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["item_id", "vertical", "product_id", "split", *(f"f{i}" for i in range(dataset.input_dim))])
    for it in dataset.items:
        w.writerow([it.item_id, it.vertical, it.product_id, it.split, *(format(f, ".9g") for f in it.features)])
    return buf.getvalue()


def save_dataset(dataset, path):
    Path(path).write_text(dumps_dataset(dataset))


def loads_dataset(text):
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty dataset file", line=1)
    m = HEADER_RE.match(lines[0])
    if not m:
        raise ParseError("missing '# uniembed-dataset v1 dim=<d>' header", line=1)
    dim = int(m.group(1))
    rows = csv.reader(lines[1:])
    try:
        header = next(rows)
    except StopIteration:
        raise ParseError("missing column header", line=2) from None
    expected = ["item_id", "vertical", "product_id", "split", *(f"f{i}" for i in range(dim))]
    if header != expected:
        raise ParseError(f"column header does not match dim={dim}", line=2)
    items = []
    for lineno, row in enumerate(rows, start=3):
        if not row:
            continue
        if len(row) != 4 + dim:
            raise ParseError(f"expected {4 + dim} columns, got {len(row)}", line=lineno)
        try:
            item_id = int(row[0])
            feats = tuple(float(np.float32(float(f))) for f in row[4:])
        except ValueError as exc:
            raise ParseError(f"non-numeric field: {exc}", line=lineno) from None
        if not all(math.isfinite(f) for f in feats):
            raise ParseError("non-finite feature", line=lineno)
        if row[3] not in SPLITS:
            raise ParseError(f"unknown split {row[3]!r}", line=lineno)
        items.append(Item(item_id, row[1], row[2], row[3], feats))
    try:
        return Dataset(dim, items)
    except SpecError as exc:
        raise ParseError(str(exc)) from exc


def load_dataset(path):
    return loads_dataset(Path(path).read_text())
