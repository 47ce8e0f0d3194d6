"""CPU/GPU device-mapping harness.

A deterministic synthetic runtime oracle stands in for hardware runs: CPU
time scales with work, GPU time amortises work over a parallel factor but
pays a transfer overhead, so small kernels favour the CPU. A CART decision
tree over SYNTAX8 features predicts the faster device and is scored
against the static run-everything-on-GPU baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .features import FeatureVector

CPU, GPU = "CPU", "GPU"


@dataclass(frozen=True)
class RuntimeOracleConfig:
    """Frozen constants of the synthetic runtime model. Tuned once against
    the seeded toy corpus to give roughly a 70/30 GPU/CPU label split and
    never fitted to the predictor."""
    cpu_cost: float = 1.0
    gpu_cost: float = 1.0
    parallel_factor: float = 8.0
    transfer_overhead: float = 6.0


DEFAULT_ORACLE = RuntimeOracleConfig()


@dataclass
class LabeledPoint:
    features: FeatureVector
    label: str
    t_cpu: float
    t_gpu: float


class DegenerateLabels(ValueError):
    pass


def synthetic_runtime(
    features: FeatureVector,
    workload_scale: float = 1.0,
    oracle: RuntimeOracleConfig = DEFAULT_ORACLE,
) -> Tuple[float, float]:
    """Deterministic (t_cpu, t_gpu) for a SYNTAX8 vector; work is the
    computational plus memory-access count."""
    work = (float(features.values[0]) + float(features.values[3])) * workload_scale
    t_cpu = oracle.cpu_cost * (1.0 + work)
    t_gpu = oracle.gpu_cost * (1.0 + work) / oracle.parallel_factor + oracle.transfer_overhead
    return t_cpu, t_gpu


def label_point(
    features: FeatureVector,
    workload_scale: float = 1.0,
    oracle: RuntimeOracleConfig = DEFAULT_ORACLE,
) -> LabeledPoint:
    t_cpu, t_gpu = synthetic_runtime(features, workload_scale, oracle)
    return LabeledPoint(features, CPU if t_cpu < t_gpu else GPU, t_cpu, t_gpu)


# --- CART decision tree ---

@dataclass
class TreeNode:
    feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    label: Optional[str] = None

    @property
    def is_leaf(self) -> bool:
        return self.label is not None


@dataclass
class DecisionTree:
    root: TreeNode
    max_depth: int

    def predict_one(self, values: Union[np.ndarray, FeatureVector]) -> str:
        if isinstance(values, FeatureVector):
            values = values.values
        node = self.root
        while not node.is_leaf:
            node = node.left if values[node.feature] <= node.threshold else node.right
        return node.label

    def predict(self, X: np.ndarray) -> List[str]:
        return [self.predict_one(row) for row in X]

    def to_text(self, node: Optional[TreeNode] = None, depth: int = 0) -> str:
        node = node or self.root
        pad = "  " * depth
        if node.is_leaf:
            return f"{pad}leaf {node.label}\n"
        return (
            f"{pad}split feature={node.feature} threshold={node.threshold!r}\n"
            + self.to_text(node.left, depth + 1)
            + self.to_text(node.right, depth + 1)
        )


def _gini(counts: dict) -> float:
    total = sum(counts.values())
    if total == 0:
        return 0.0
    return 1.0 - sum((n / total) ** 2 for n in counts.values())


def _majority(y: Sequence[str]) -> str:
    counts = {}
    for label in y:
        counts[label] = counts.get(label, 0) + 1
    top = max(counts.values())
    winners = sorted(l for l, n in counts.items() if n == top)
    return GPU if GPU in winners else winners[0]


def _best_split(X: np.ndarray, y: List[str]) -> Optional[Tuple[int, float, float]]:
    """Best (feature, threshold, gain) over midpoint thresholds; ties break
    toward the lowest feature index then lowest threshold."""
    parent = _gini({l: y.count(l) for l in set(y)})
    n = len(y)
    best = None
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = [y[i] for i in order]
        left_counts: dict = {}
        right_counts: dict = {}
        for label in ys:
            right_counts[label] = right_counts.get(label, 0) + 1
        for i in range(n - 1):
            label = ys[i]
            left_counts[label] = left_counts.get(label, 0) + 1
            right_counts[label] -= 1
            if xs[i] == xs[i + 1]:
                continue
            threshold = (xs[i] + xs[i + 1]) / 2.0
            k = i + 1
            gain = parent - (k / n) * _gini(left_counts) - ((n - k) / n) * _gini(right_counts)
            if best is None or gain > best[2] + 1e-12:
                best = (f, threshold, gain)
    if best is None or best[2] <= 1e-12:
        return None
    return best


def _grow(X: np.ndarray, y: List[str], depth: int, max_depth: int) -> TreeNode:
    if len(set(y)) == 1 or depth >= max_depth:
        return TreeNode(label=_majority(y))
    split = _best_split(X, y)
    if split is None:
        return TreeNode(label=_majority(y))
    f, threshold, _ = split
    mask = X[:, f] <= threshold
    left = _grow(X[mask], [y[i] for i in range(len(y)) if mask[i]], depth + 1, max_depth)
    right = _grow(X[~mask], [y[i] for i in range(len(y)) if not mask[i]], depth + 1, max_depth)
    return TreeNode(feature=f, threshold=threshold, left=left, right=right)


def train_tree(data: Sequence[LabeledPoint], max_depth: int = 5, seed: int = 0) -> DecisionTree:
    """CART with Gini impurity and axis-aligned midpoint splits. All tie
    breaking is rule-based, so `seed` is accepted for interface parity but
    never consulted."""
    labels = {p.label for p in data}
    if len(labels) < 2:
        raise DegenerateLabels(f"need both labels, got {sorted(labels)}")
    X = np.stack([p.features.values for p in data])
    y = [p.label for p in data]
    return DecisionTree(_grow(X, y, 0, max_depth), max_depth)


# --- evaluation against the static-GPU baseline ---

@dataclass
class HeuristicReport:
    speedup: float
    precision: float
    recall: float
    specificity: float
    degenerate_denominators: List[str] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "speedup": self.speedup,
            "precision": self.precision,
            "recall": self.recall,
            "specificity": self.specificity,
            "degenerate_denominators": self.degenerate_denominators,
        }


Predictor = Union[DecisionTree, Callable[[FeatureVector], str]]


def _predict(predictor: Predictor, features: FeatureVector) -> str:
    if isinstance(predictor, DecisionTree):
        return predictor.predict_one(features)
    return predictor(features)


def evaluate(predictor: Predictor, eval_set: Sequence[LabeledPoint]) -> HeuristicReport:
    """Geometric-mean speedup over static GPU plus the GPU-positive
    confusion metrics. Degenerate denominators score 1.0 and are flagged."""
    if not eval_set:
        raise ValueError("empty evaluation set")
    log_sum = 0.0
    tp = fp = tn = fn = 0
    for point in eval_set:
        predicted = _predict(predictor, point.features)
        chosen = point.t_gpu if predicted == GPU else point.t_cpu
        log_sum += math.log(point.t_gpu / chosen)
        if predicted == GPU:
            if point.label == GPU:
                tp += 1
            else:
                fp += 1
        else:
            if point.label == CPU:
                tn += 1
            else:
                fn += 1
    flags = []

    def safe(num: int, den: int, name: str) -> float:
        if den == 0:
            flags.append(name)
            return 1.0
        return num / den

    return HeuristicReport(
        speedup=math.exp(log_sum / len(eval_set)),
        precision=safe(tp, tp + fp, "precision"),
        recall=safe(tp, tp + fn, "recall"),
        specificity=safe(tn, tn + fp, "specificity"),
        degenerate_denominators=flags,
    )


def oracle_speedup(eval_set: Sequence[LabeledPoint]) -> float:
    """Best achievable speedup: every kernel on its faster device."""
    log_sum = sum(math.log(p.t_gpu / min(p.t_cpu, p.t_gpu)) for p in eval_set)
    return math.exp(log_sum / len(eval_set))
