"""Query-by-committee feature space search.

A 21-member committee (7 feed-forward nets, 7 k-NN, 7 k-means classifiers)
votes on random points in the feature box; the vote-entropy maximiser is
the next synthesis target. Generated kernels come back labeled and the
committee retrains incrementally on the grown buffer.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning
from sklearn.neighbors import KNeighborsClassifier
from sklearn.neural_network import MLPClassifier

LABELS = ("CPU", "GPU")

_NN_WIDTHS = (8, 12, 16, 24, 32, 48, 64)
_KNN_KS = (1, 3, 5, 7, 9, 11, 13)
_KMEANS_CLUSTERS = (2, 3, 4, 5, 6, 7, 8)


class DegenerateLabels(ValueError):
    pass


def entropy(votes: Sequence[str]) -> float:
    """Vote entropy H = -sum p(l) ln p(l) over the label multiset."""
    if not votes:
        raise ValueError("need at least one vote")
    counts = Counter(votes)
    total = len(votes)
    h = 0.0
    for n in counts.values():
        p = n / total
        h -= p * math.log(p)
    return h


class _Member:
    """One committee member; falls back to constant prediction when fitted
    on a single class."""

    def __init__(self, kind: str, param: int, seed: int):
        self.kind = kind
        self.param = param
        self.seed = seed
        self.model = None
        self.constant: Optional[str] = None
        self.cluster_labels: Optional[List[str]] = None

    def fit(self, X: np.ndarray, y: List[str]):
        classes = sorted(set(y))
        self.constant = None
        self.cluster_labels = None
        if self.kind == "kmeans":
            n_clusters = min(self.param, len(X))
            self.model = KMeans(
                n_clusters=n_clusters, n_init=3, random_state=self.seed
            ).fit(X)
            assignments = self.model.labels_
            labels = []
            for c in range(n_clusters):
                counts = Counter(y[i] for i in range(len(y)) if assignments[i] == c)
                if counts:
                    top = max(counts.values())
                    # majority label per cluster, ties broken lexicographically
                    labels.append(sorted(l for l, n in counts.items() if n == top)[0])
                else:
                    labels.append(classes[0])
            self.cluster_labels = labels
            return
        if len(classes) < 2:
            self.constant = classes[0]
            return
        if self.kind == "nn":
            self.model = MLPClassifier(
                hidden_layer_sizes=(self.param,),
                random_state=self.seed,
                max_iter=300,
                tol=1e-4,
            )
            with warnings.catch_warnings():
                # tiny buffers rarely converge within the iteration cap; the
                # committee only needs a usable vote, not convergence
                warnings.simplefilter("ignore", ConvergenceWarning)
                self.model.fit(X, y)
        else:
            k = min(self.param, len(X))
            self.model = KNeighborsClassifier(n_neighbors=k).fit(X, y)

    def predict(self, X: np.ndarray) -> List[str]:
        if self.kind == "kmeans":
            clusters = self.model.predict(X)
            return [self.cluster_labels[c] for c in clusters]
        if self.constant is not None:
            return [self.constant] * len(X)
        return list(self.model.predict(X))


@dataclass
class Committee:
    members: List[_Member]
    input_dim: int
    seed: int
    buffer_X: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    buffer_y: List[str] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.members)


def make_committee(input_dim: int, seed: int = 0) -> Committee:
    """7 NN + 7 k-NN + 7 k-means members, diversified by width/k/cluster
    count and init seed."""
    members = (
        [_Member("nn", w, seed + i) for i, w in enumerate(_NN_WIDTHS)]
        + [_Member("knn", k, seed + 100 + i) for i, k in enumerate(_KNN_KS)]
        + [_Member("kmeans", c, seed + 200 + i) for i, c in enumerate(_KMEANS_CLUSTERS)]
    )
    return Committee(members, input_dim, seed)


def fit_initial(committee: Committee, seed_X: np.ndarray, seed_y: Sequence[str]) -> Committee:
    """Passive initial fit on seed data. Single-class seeds still fit the
    k-means members; NN/kNN members predict the sole class."""
    if len(seed_X) == 0:
        raise DegenerateLabels("empty seed data")
    committee.buffer_X = np.array(seed_X, dtype=np.float64)
    committee.buffer_y = list(seed_y)
    for m in committee.members:
        m.fit(committee.buffer_X, committee.buffer_y)
    return committee


def committee_votes(committee: Committee, X: np.ndarray) -> List[List[str]]:
    """Per-point label votes across all members, shape (n_points, n_members)."""
    per_member = [m.predict(X) for m in committee.members]
    return [list(v) for v in zip(*per_member)]


@dataclass
class QueryBatch:
    points: np.ndarray
    entropies: np.ndarray
    argmax_point: np.ndarray

    @property
    def max_entropy(self) -> float:
        return float(self.entropies.max())


def pick_query(
    committee: Committee,
    n_random_points: int,
    bounds: np.ndarray,
    rng: np.random.Generator,
) -> QueryBatch:
    """Sample points uniformly in the [0, bounds] box, score committee vote
    entropy, return the argmax (first occurrence on ties)."""
    points = rng.uniform(0.0, 1.0, size=(n_random_points, committee.input_dim)) * bounds
    votes = committee_votes(committee, points)
    entropies = np.array([entropy(v) for v in votes])
    return QueryBatch(points, entropies, points[int(np.argmax(entropies))].copy())


def update(committee: Committee, new_X: np.ndarray, new_y: Sequence[str]) -> Committee:
    """Grow the buffer and retrain every member on the union."""
    if len(new_X):
        committee.buffer_X = np.vstack([committee.buffer_X, np.array(new_X, dtype=np.float64)])
        committee.buffer_y = committee.buffer_y + list(new_y)
    for m in committee.members:
        m.fit(committee.buffer_X, committee.buffer_y)
    return committee


@dataclass
class EpochLog:
    epoch: int
    target: List[float]
    max_entropy: float
    best_proximity: Optional[float]
    dataset_size: int
    metrics: Dict[str, float]

    def to_record(self) -> dict:
        return {
            "epoch": self.epoch,
            "target": self.target,
            "max_entropy": self.max_entropy,
            "best_proximity": self.best_proximity,
            "dataset_size": self.dataset_size,
            **self.metrics,
        }


def al_loop(
    committee: Committee,
    synthesizer: Callable[[np.ndarray, int], Tuple[List[np.ndarray], Optional[float]]],
    labeler: Callable[[np.ndarray], str],
    epochs: int,
    bounds: np.ndarray,
    seed: int = 0,
    n_query_points: int = 2048,
    metrics_fn: Optional[Callable[[np.ndarray, List[str]], Dict[str, float]]] = None,
    passive: bool = False,
    saturation_entropy: float = 0.05,
) -> Tuple[np.ndarray, List[str], List[EpochLog]]:
    """Active-learning episodes: query -> targeted synthesis -> label ->
    incremental committee update, with per-epoch downstream snapshots.

    `synthesizer(target_vector, epoch_seed)` returns the feature vectors of
    the kernels generated while steering at the target, plus the best
    relative proximity achieved (None when it has no meaning). With
    `passive=True` targets are drawn uniformly at random instead of by
    entropy. Stops early after two consecutive epochs whose maximum query
    entropy falls below `saturation_entropy`.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    rng = np.random.default_rng(seed)
    logs: List[EpochLog] = []
    saturated_streak = 0
    for epoch in range(epochs):
        batch = pick_query(committee, n_query_points, bounds, rng)
        if passive:
            target = rng.uniform(0.0, 1.0, size=committee.input_dim) * bounds
        else:
            target = batch.argmax_point
        vectors, proximity = synthesizer(target, seed * 1009 + epoch)
        new_X = np.array(vectors, dtype=np.float64).reshape(-1, committee.input_dim)
        new_y = [labeler(v) for v in new_X]
        update(committee, new_X, new_y)
        metrics = metrics_fn(committee.buffer_X, committee.buffer_y) if metrics_fn else {}
        logs.append(EpochLog(
            epoch=epoch,
            target=[float(v) for v in target],
            max_entropy=batch.max_entropy,
            best_proximity=proximity,
            dataset_size=len(committee.buffer_y),
            metrics=metrics,
        ))
        if batch.max_entropy < saturation_entropy:
            saturated_streak += 1
            if saturated_streak >= 2:
                break
        else:
            saturated_streak = 0
    return committee.buffer_X, committee.buffer_y, logs
