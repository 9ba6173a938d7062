import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uniembed.errors import ComparisonError, UsageError
from uniembed.netcore import EmbeddingNet, NetConfig
from uniembed.retrieval import (
    EvalSplit,
    RetrievalReport,
    compare_reports,
    knn,
    load_report,
    top_k_accuracy,
)
from uniembed.rng import Xoshiro256
from uniembed.synthdata import Dataset, GenSpec, Item, generate


class Identity:
    def embed(self, x):
        return np.asarray(x, dtype=np.float64)


class Scaled:
    def __init__(self, c):
        self.c = c

    def embed(self, x):
        return self.c * np.asarray(x, dtype=np.float64)


def make_dataset(rows):
    """rows: (vertical, product, split, features)"""
    items = [Item(i, v, p, s, tuple(map(float, f))) for i, (v, p, s, f) in enumerate(rows)]
    return Dataset(len(rows[0][3]), items)


def test_knn_examples():
    assert knn([0, 0.9], [("A", [0, 1]), ("B", [1, 0])], 1) == ["A"]
    assert knn([0, 0], [(7, [1, 0]), (3, [0, 1])], 2) == [3, 7]
    assert knn([0, 0], [(1, [1, 0]), (2, [2, 0]), (3, [3, 0])], 10) == [1, 2, 3]
    with pytest.raises(UsageError):
        knn([0, 0], [], 1)


def test_two_of_three_queries_hit():
    ds = make_dataset([
        ("v", "a", "index", [0, 0]),
        ("v", "b", "index", [5, 0]),
        ("v", "c", "index", [0, 5]),
        ("v", "a", "query", [0.5, 0]),   # nearest is a: hit
        ("v", "b", "query", [4.5, 0]),   # nearest is b: hit
        ("v", "c", "query", [0.2, 0.2]),  # nearest is a: miss
    ])
    report = top_k_accuracy(Identity(), ds, EvalSplit.from_dataset(ds), [1, 3])
    assert report.accuracy("v", 1) == pytest.approx(2 / 3)
    assert report.accuracy("v", 3) == 1.0
    assert report.counts == {"v": 3}


def test_full_k_gives_perfect_accuracy(small_data):
    split = EvalSplit.from_dataset(small_data)
    net = EmbeddingNet.init(NetConfig(input_dim=16, hidden_dims=(8,), embedding_dim=4))
    report = top_k_accuracy(net, small_data, split, [len(split.index_ids)])
    assert all(report.accuracy(v, len(split.index_ids)) == 1.0 for v in report.verticals)


def brute_force_accuracy(dataset, emb_of, split, ks):
    hits, counts = {}, {}
    for q in split.query_ids:
        dists = []
        for i in split.index_ids:
            d = sum((a - b) ** 2 for a, b in zip(emb_of[q], emb_of[i]))
            dists.append((d, i))
        dists.sort()
        v = dataset.items[q].vertical
        counts[v] = counts.get(v, 0) + 1
        ranked = [dataset.items[i].product_id for _, i in dists]
        for k in ks:
            hit = dataset.items[q].product_id in ranked[:k]
            hits.setdefault(v, {}).setdefault(k, 0)
            hits[v][k] += hit
    return {v: {k: hits[v][k] / counts[v] for k in ks} for v in counts}


@st.composite
def grid_datasets(draw):
    seed = draw(st.integers(0, 2**31))
    n = draw(st.integers(4, 200))
    rng = Xoshiro256(seed)
    rows = []
    for i in range(n):
        v = f"v{rng.below(3)}"
        rows.append((v, f"{v}_p{rng.below(4)}", "index" if i < 3 or rng.random() < 0.6 else "query",
                     [rng.below(4) * 0.5 for _ in range(3)]))
    rows.append(("v0", "v0_p0", "query", [0.0, 0.5, 1.0]))
    return make_dataset(rows)


@given(grid_datasets())
def test_matches_brute_force_with_ties(ds):
    split = EvalSplit.from_dataset(ds)
    ks = [1, 2, 5, 20]
    report = top_k_accuracy(Identity(), ds, split, ks)
    emb = {it.item_id: it.features for it in ds.items}
    assert report.accuracies == brute_force_accuracy(ds, emb, split, ks)


def test_matches_brute_force_random_net():
    ds = generate(GenSpec(verticals=2, products_per_vertical=5, items_per_product=8, input_dim=8, seed=1))
    net = EmbeddingNet.init(NetConfig(input_dim=8, hidden_dims=(6,), embedding_dim=3, seed=2))
    split = EvalSplit.from_dataset(ds)
    ks = [1, 5, 20]
    emb = dict(zip(range(len(ds)), net.embed(ds.features(range(len(ds)))).tolist()))
    assert top_k_accuracy(net, ds, split, ks).accuracies == brute_force_accuracy(ds, emb, split, ks)


@given(grid_datasets(), st.integers(0, 2**31))
def test_monotone_in_k_and_permutation_invariant(ds, seed):
    split = EvalSplit.from_dataset(ds)
    report = top_k_accuracy(Identity(), ds, split, [1, 5, 20])
    for v in report.verticals:
        accs = [report.accuracy(v, k) for k in report.ks]
        assert accs == sorted(accs)
    shuffled = EvalSplit(split.query_ids, Xoshiro256(seed).shuffle(list(split.index_ids)))
    assert top_k_accuracy(Identity(), ds, shuffled, [1, 5, 20]).accuracies == report.accuracies


@given(st.integers(0, 2**31), st.sampled_from([0.25, 2.0, 8.0]))
def test_scale_invariant_ranking(seed, c):
    rng = Xoshiro256(seed)
    index = [(i, [rng.below(6) * 0.5 for _ in range(3)]) for i in range(15)]
    q = [rng.below(6) * 0.5 for _ in range(3)]
    scaled = [(i, [c * x for x in e]) for i, e in index]
    assert knn(q, index, 15) == knn([c * x for x in q], scaled, 15)


def report(top1, verticals=("a", "b"), ks=(1,)):
    return RetrievalReport(list(ks), {v: {k: top1 for k in ks} for v in verticals}, {v: 10 for v in verticals})


def test_compare_reports():
    same = compare_reports(report(0.5), report(0.5))
    assert all(d == 0 for row in same.deltas.values() for d in row.values())
    a = report(0.5)
    a.accuracies["a"][1] = 0.6
    delta = compare_reports(a, report(0.5))
    assert delta.deltas["a"][1] == pytest.approx(0.1)
    assert delta.deltas["b"][1] == 0
    with pytest.raises(ComparisonError):
        compare_reports(report(0.5), report(0.5, verticals=("a",)))
    with pytest.raises(ComparisonError):
        compare_reports(report(0.5), report(0.5, ks=(1, 5)))


def test_report_round_trip(tmp_path):
    r = report(0.25, ks=(1, 5))
    r.save(tmp_path / "r.json", tmp_path / "r.csv")
    back = load_report(tmp_path / "r.json")
    assert back.accuracies == r.accuracies and back.counts == r.counts
    assert (tmp_path / "r.csv").read_text().splitlines()[1] == "a,1,0.25,10"


def test_split_validation():
    with pytest.raises(UsageError):
        EvalSplit([1, 2], [2, 3])
    with pytest.raises(UsageError):
        EvalSplit([], [1])


def test_scaled_model_same_report(small_data):
    split = EvalSplit.from_dataset(small_data)
    base = top_k_accuracy(Identity(), small_data, split, [1, 5])
    assert top_k_accuracy(Scaled(4.0), small_data, split, [1, 5]).accuracies == base.accuracies
