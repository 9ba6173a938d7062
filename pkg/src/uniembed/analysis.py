"""How each vertical's embeddings occupy the shared space.

PCA (cyclic Jacobi on the covariance) gives a deterministic 2-D layout;
``occupancy`` summarizes centroids, spreads and the silhouette with the
vertical as cluster label.
"""

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from uniembed.errors import UsageError

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


def jacobi_eigh(sym, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Eigenvalues (descending) and column eigenvectors of a symmetric matrix."""
    a = np.array(sym, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    scale = max(np.linalg.norm(a), 1.0)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum((a - np.diag(np.diag(a))) ** 2))
        if off < tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                h = a[q, q] - a[p, p]
                if abs(apq) < 1e-18 * abs(h):
                    t = apq / h  # small-angle limit; theta would overflow
                else:
                    theta = h / (2.0 * apq)
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * rot[0] - s * rot[1]
                a[:, q] = s * rot[0] + c * rot[1]
                rot = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rot[0] - s * rot[1]
                a[q, :] = s * rot[0] + c * rot[1]
                rot = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * rot[0] - s * rot[1]
                v[:, q] = s * rot[0] + c * rot[1]
    vals = np.diag(a).copy()
    order = sorted(range(n), key=lambda i: (-vals[i], i))
    return vals[order], v[:, order]


def _fix_signs(vectors, eps=1e-12):
    out = vectors.copy()
    for j in range(out.shape[1]):
        nz = np.flatnonzero(np.abs(out[:, j]) > eps)
        if nz.size and out[nz[0], j] < 0:
            out[:, j] = -out[:, j]
    return out


def pca_project(embeddings, out_dim=2):
    """Mean-centered projection onto the top ``out_dim`` components.

    Returns (coordinates, explained_variance); variances use the n-1
    denominator. Each component's first nonzero loading is positive.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise UsageError("PCA needs at least 2 rows")
    if out_dim > x.shape[1] or out_dim < 1:
        raise UsageError(f"out_dim must lie in [1, {x.shape[1]}]")
    # Sort rows so the covariance sum runs in a fixed order.
    order = np.lexsort(x.T[::-1])
    centered = x - x[order].mean(axis=0)
    cov = centered[order].T @ centered[order] / (x.shape[0] - 1)
    vals, vecs = jacobi_eigh(cov)
    comps = _fix_signs(vecs[:, :out_dim])
    explained = np.maximum(vals[:out_dim], 0.0)
    return centered @ comps, explained


@dataclass
class OccupancyReport:
    verticals: list
    centroids: dict
    intra: dict  # mean pairwise Euclidean distance inside each vertical
    inter: np.ndarray  # centroid distance matrix, rows/cols in ``verticals`` order
    silhouette: float

    @property
    def min_inter(self):
        n = len(self.verticals)
        return float(min(self.inter[i, j] for i in range(n) for j in range(i + 1, n)))

    @property
    def mean_intra(self):
        return float(np.mean([self.intra[v] for v in self.verticals]))

    @property
    def separated(self):
        return self.min_inter > self.mean_intra

    def to_dict(self):
        return {
            "format_version": 1,
            "verticals": self.verticals,
            "centroids": {v: [float(x) for x in c] for v, c in self.centroids.items()},
            "mean_intra_distance": {v: self.intra[v] for v in self.verticals},
            "inter_centroid_distance": [[float(x) for x in row] for row in self.inter],
            "min_inter_centroid_distance": self.min_inter,
            "mean_intra_distance_overall": self.mean_intra,
            "mean_silhouette": self.silhouette,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _pairwise(x):
    diff = x[:, None, :] - x[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def silhouette(points, labels):
    """Mean silhouette over all samples."""
    x = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels, dtype=object)
    dist = _pairwise(x)
    names = sorted(set(labels))
    masks = {c: labels == c for c in names}
    scores = np.zeros(len(x))
    for i in range(len(x)):
        own = masks[labels[i]]
        n_own = own.sum()
        if n_own < 2:
            continue
        a = dist[i, own].sum() / (n_own - 1)
        b = min(dist[i, masks[c]].mean() for c in names if c != labels[i])
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(scores.mean())


def occupancy(groups):
    """``groups`` maps vertical -> (n_i, d) embedding matrix."""
    verticals = sorted(groups)
    if len(verticals) < 2:
        raise UsageError("occupancy needs at least 2 verticals; use pca_project for one")
    mats = {v: np.asarray(groups[v], dtype=np.float64) for v in verticals}
    for v, m in mats.items():
        if m.shape[0] < 2:
            raise UsageError(f"vertical {v} needs at least 2 samples")
    centroids = {v: mats[v].mean(axis=0) for v in verticals}
    intra = {}
    for v in verticals:
        d = _pairwise(mats[v])
        n = len(d)
        intra[v] = float(d.sum() / (n * (n - 1)))
    c = np.array([centroids[v] for v in verticals])
    inter = np.sqrt(np.sum((c[:, None, :] - c[None, :, :]) ** 2, axis=2))
    inter = (inter + inter.T) / 2.0
    np.fill_diagonal(inter, 0.0)
    points = np.concatenate([mats[v] for v in verticals])
    labels = [v for v in verticals for _ in range(len(mats[v]))]
    return OccupancyReport(verticals, centroids, intra, inter, silhouette(points, labels))


def projection_csv(item_ids, verticals, coords):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["item_id", "vertical", "x", "y"])
    for i, v, (x, y) in zip(item_ids, verticals, coords[:, :2]):
        w.writerow([i, v, repr(float(x)), repr(float(y))])
    return buf.getvalue()
