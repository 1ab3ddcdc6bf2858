"""Cluster analysis of representations: k-means, DBI purity, optimal-k sweep.

Representations are reduced to one value per (sample, channel) by spatial
averaging, row-normalized to unit Euclidean norm, then scored two ways:
class-based (ground-truth labels as cluster labels) and class-agnostic
(k-means labels for the k in [2, 15] with the lowest DBI).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import LabeledDataset
from .errors import DegenerateCentroidsError, NoUsableRowsError
from .nn.extraction import iter_relu_batches
from .tensors import ActTensor4, RepMatrix


@dataclass(frozen=True)
class ReducedReps:
    """Spatially averaged, row-normalized representations for one layer.

    Rows whose Euclidean norm was zero are removed; their original indices
    sit in ``dropped_rows`` so labels can be filtered to match.
    """

    matrix: RepMatrix
    layer_index: int
    norm_applied: bool
    dropped_rows: np.ndarray

    @property
    def kept_rows_of(self) -> np.ndarray:
        """Original row indices that survived, in order."""
        total = self.matrix.rows + len(self.dropped_rows)
        mask = np.ones(total, dtype=bool)
        mask[self.dropped_rows] = False
        return np.flatnonzero(mask)


@dataclass(frozen=True)
class ClusterAssignment:
    k: int
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    iterations_used: int
    seed: object


@dataclass(frozen=True)
class PurityScore:
    """Davies-Bouldin index plus the per-cluster worst ratios behind it."""

    dbi: float
    per_cluster_worst_ratio: np.ndarray
    mode: str  # class_based | class_agnostic


@dataclass(frozen=True)
class SweepResult:
    k_star: int
    table: tuple  # (k, dbi, inertia) per swept k
    best: ClusterAssignment


def _points(x) -> np.ndarray:
    if isinstance(x, ReducedReps):
        return x.matrix.data
    if isinstance(x, RepMatrix):
        return x.data
    return np.asarray(x, dtype=np.float64)


def spatial_average(t: ActTensor4) -> RepMatrix:
    """(N, C) matrix of per-feature-map means over the spatial extent."""
    return RepMatrix(t.data.mean(axis=(2, 3), dtype=np.float64), "by_sample")


def normalize_rows(m, layer_index: int = 0) -> ReducedReps:
    """Divide each row by its Euclidean norm; drop zero-norm rows.

    Inputs must be non-negative, so normalized entries lie in [0, 1].
    """
    data = _points(m)
    if data.size and data.min() < 0:
        raise ValueError("normalize_rows expects non-negative representations")
    norms = np.linalg.norm(data, axis=1)
    dropped = np.flatnonzero(norms == 0.0)
    if len(dropped) == data.shape[0]:
        raise NoUsableRowsError("no usable representations: every row is zero")
    kept = norms != 0.0
    normalized = data[kept] / norms[kept, None]
    return ReducedReps(RepMatrix(normalized, "by_sample"), layer_index,
                       True, dropped)


def _kmeans_pp_init(x: np.ndarray, k: int, rng) -> np.ndarray:
    """Canonical k-means++ seeding: D^2-weighted sequential center choice."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]), dtype=x.dtype)
    first = rng.integers(n)
    centers[0] = x[first]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            choice = rng.integers(n)
        else:
            choice = rng.choice(n, p=d2 / total)
        centers[c] = x[choice]
        d2 = np.minimum(d2, ((x - centers[c]) ** 2).sum(axis=1))
    return centers


def _assign(x, x2, centroids):
    """Labels and squared distance to the assigned centroid."""
    c2 = (centroids ** 2).sum(axis=1)
    d2 = x2[:, None] + c2[None, :] - 2.0 * (x @ centroids.T)
    np.maximum(d2, 0.0, out=d2)
    labels = d2.argmin(axis=1)
    return labels, d2[np.arange(len(labels)), labels]


def _means(x, labels, k, old_centroids):
    """Member means per cluster; empty clusters keep their old centroid."""
    onehot = (labels[None, :] == np.arange(k)[:, None]).astype(np.float64)
    counts = onehot.sum(axis=1)
    sums = onehot @ x
    means = sums / np.maximum(counts, 1.0)[:, None]
    empty = counts == 0
    if empty.any():
        means[empty] = old_centroids[empty]
    return means, counts


def kmeans(x, k: int, seed=0, max_iters: int = 300, tol: float = 1e-6,
           init: str = "kmeans++") -> ClusterAssignment:
    """Lloyd's algorithm with k-means++ seeding, deterministic given seed.

    Empty clusters are re-seeded to the point currently farthest from its
    assigned centroid, which keeps inertia non-increasing (asserted every
    iteration). Converges when no centroid moves more than ``tol``; a final
    mean update leaves every centroid at its members' mean.
    """
    data = _points(x)
    n = data.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds the {n} available rows")
    if not np.isfinite(data).all():
        raise ValueError("non-finite input")
    rng = np.random.default_rng(seed)
    if init == "kmeans++":
        centroids = _kmeans_pp_init(data, k, rng)
    elif init == "random":
        centroids = data[rng.choice(n, size=k, replace=False)].copy()
    else:
        raise ValueError(f"unknown init {init!r}")

    x2 = (data ** 2).sum(axis=1)
    prev_inertia = np.inf
    labels = np.zeros(n, dtype=np.int64)
    iterations = 0
    for iterations in range(1, max_iters + 1):
        labels, mind2 = _assign(data, x2, centroids)
        for empty in np.flatnonzero(np.bincount(labels, minlength=k) == 0):
            # Steal the farthest point whose cluster can spare a member; a
            # duplicate-ridden input may leave the cluster legitimately empty.
            counts_now = np.bincount(labels, minlength=k)
            candidates = np.flatnonzero(counts_now[labels] >= 2)
            if len(candidates) == 0:
                continue
            farthest = int(candidates[np.argmax(mind2[candidates])])
            centroids[empty] = data[farthest]
            labels[farthest] = empty
            mind2[farthest] = 0.0
        inertia = float(mind2.sum())
        assert inertia <= prev_inertia * (1 + 1e-12) + 1e-12, \
            "inertia increased between Lloyd iterations"
        prev_inertia = inertia
        new_centroids, _ = _means(data, labels, k, centroids)
        shift = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
        centroids = new_centroids
        if shift < tol:
            break
    inertia = float(((data - centroids[labels]) ** 2).sum())
    return ClusterAssignment(k, labels, centroids, inertia, iterations, seed)


def _cluster_stats(points, labels, intra):
    ids = np.unique(labels)
    centroids = np.empty((len(ids), points.shape[1]))
    scatter = np.empty(len(ids))
    for i, cid in enumerate(ids):
        members = points[labels == cid]
        centroids[i] = members.mean(axis=0)
        if intra == "centroid":
            scatter[i] = np.linalg.norm(members - centroids[i], axis=1).mean()
        else:  # mean pairwise distance, sensitivity-check alternative
            diffs = members[:, None, :] - members[None, :, :]
            scatter[i] = np.linalg.norm(diffs, axis=2).mean()
    return ids, centroids, scatter


def dbi(x, labels, mode: str = "class_agnostic",
        intra: str = "centroid") -> PurityScore:
    """Davies-Bouldin index: mean over clusters of the worst
    (scatter_i + scatter_j) / centroid_distance ratio. Lower is purer.

    ``intra="centroid"`` (default) is the mean member-to-centroid distance;
    ``intra="pairwise"`` is the mean pairwise member distance, kept only for
    sensitivity checks.
    """
    points = _points(x)
    labels = np.asarray(labels)
    if len(labels) != points.shape[0]:
        raise ValueError("labels length must match row count")
    ids, centroids, scatter = _cluster_stats(points, labels, intra)
    k = len(ids)
    if k < 2:
        raise ValueError("DBI needs at least 2 non-empty clusters")
    dist = np.linalg.norm(centroids[:, None, :] - centroids[None, :, :], axis=2)
    worst = np.empty(k)
    for i in range(k):
        ratios = np.empty(k)
        for j in range(k):
            if j == i:
                ratios[j] = -np.inf
                continue
            pair_scatter = scatter[i] + scatter[j]
            if dist[i, j] == 0.0:
                if pair_scatter > 0.0:
                    raise DegenerateCentroidsError(
                        f"clusters {ids[i]} and {ids[j]} share a centroid"
                    )
                ratios[j] = 0.0
            else:
                ratios[j] = pair_scatter / dist[i, j]
        worst[i] = ratios.max()
    return PurityScore(float(worst.mean()), worst, mode)


def class_based_purity(x, class_labels, intra: str = "centroid") -> PurityScore:
    """DBI with ground-truth class labels as the cluster assignment."""
    labels = np.asarray(class_labels)
    if len(np.unique(labels)) < 2:
        raise ValueError("class-based purity needs >= 2 classes present")
    return dbi(x, labels, mode="class_based", intra=intra)


def optimal_k_sweep(x, k_min: int = 2, k_max: int = 15, seed: int = 0,
                    restarts: int = 5, max_iters: int = 300,
                    tol: float = 1e-6) -> SweepResult:
    """k-means over k in [k_min, k_max]; pick the k with the lowest DBI.

    Each k runs ``restarts`` seeded attempts and keeps the lowest-inertia
    one. Ties in DBI break toward smaller k. Deterministic given seed.
    """
    points = _points(x)
    if k_max > points.shape[0]:
        raise ValueError(f"k_max={k_max} exceeds the {points.shape[0]} rows")
    if k_min < 2:
        raise ValueError("k_min must be >= 2 for a DBI comparison")
    table = []
    best_k, best_dbi, best_assignment = None, np.inf, None
    for k in range(k_min, k_max + 1):
        runs = [kmeans(points, k, seed=[seed, k, r], max_iters=max_iters,
                       tol=tol) for r in range(restarts)]
        run = min(runs, key=lambda a: a.inertia)
        score = dbi(points, run.labels, mode="class_agnostic")
        table.append((k, score.dbi, run.inertia))
        if score.dbi < best_dbi:
            best_k, best_dbi, best_assignment = k, score.dbi, run
    return SweepResult(best_k, tuple(table), best_assignment)


@dataclass(frozen=True)
class LayerClusterReport:
    layer: int
    class_count_present: int
    class_purity: PurityScore
    sweep: SweepResult
    agnostic_purity: PurityScore
    dropped_rows: int


def clustering_over_layers(model, dataset: LabeledDataset, sample_count: int,
                           seed, layers: list[int] | None = None,
                           batch_size: int = 256, k_min: int = 2,
                           k_max: int = 15, restarts: int = 5):
    """Class-based and class-agnostic purity at every analyzed ReLU layer.

    Streams spatially averaged representations for a seeded sample (indices
    sorted, without replacement), normalizes rows, then scores class purity
    and the optimal-k sweep per layer. The sweep's k_max is clamped to the
    number of usable rows.
    """
    net = model.network if hasattr(model, "network") else model
    relu_indices = net.spec.relu_indices()
    if layers is not None:
        relu_indices = [relu_indices[k - 1] for k in layers]
        ordinals = list(layers)
    else:
        ordinals = list(range(1, len(relu_indices) + 1))

    n = len(dataset)
    if sample_count > n:
        raise ValueError(f"sample_count {sample_count} exceeds dataset size {n}")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n, size=sample_count, replace=False))
    images = dataset.images.data[idx]
    labels = dataset.labels[idx]

    reduced_chunks = {i: [] for i in relu_indices}
    for batch in iter_relu_batches(net, images, relu_indices, batch_size):
        for i, act in batch.items():
            reduced_chunks[i].append(act.mean(axis=(2, 3), dtype=np.float64))

    reports = []
    for ordinal, i in zip(ordinals, relu_indices):
        matrix = RepMatrix(np.concatenate(reduced_chunks[i]), "by_sample")
        reduced = normalize_rows(matrix, layer_index=ordinal)
        kept_labels = labels[reduced.kept_rows_of]
        class_purity = class_based_purity(reduced, kept_labels)
        layer_seed = int(np.random.SeedSequence([int(seed), ordinal])
                         .generate_state(1)[0])
        sweep = optimal_k_sweep(reduced, k_min=k_min,
                                k_max=min(k_max, reduced.matrix.rows),
                                seed=layer_seed, restarts=restarts)
        reports.append(LayerClusterReport(
            layer=ordinal,
            class_count_present=len(np.unique(kept_labels)),
            class_purity=class_purity,
            sweep=sweep,
            agnostic_purity=dbi(reduced, sweep.best.labels,
                                mode="class_agnostic"),
            dropped_rows=len(reduced.dropped_rows),
        ))
    return reports
