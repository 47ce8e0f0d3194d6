"""Synthetic runtime oracle, CART tree vs exhaustive reference, metrics."""

import numpy as np
import pytest

from kernelforge import corpus as C
from kernelforge.features import FeatureVector
from kernelforge.kernelgen import generate_corpus
from kernelforge.mapping import (
    CPU,
    GPU,
    DegenerateLabels,
    LabeledPoint,
    evaluate,
    label_point,
    oracle_speedup,
    synthetic_runtime,
    train_tree,
)
from oracles import brute_force_predict, brute_force_tree


def _fv(values):
    return FeatureVector("SYNTAX8", np.array(values, dtype=np.float64))


def _point(comp, mem, label=None):
    fv = _fv([comp, 0, 0, mem, 0, 0, 0, 0])
    return label_point(fv)


# --- runtime oracle ---

def test_zero_work_kernel_prefers_cpu():
    p = _point(0, 0)
    assert p.t_gpu > p.t_cpu
    assert p.label == CPU
    assert p.t_cpu > 0 and p.t_gpu > 0


def test_large_work_prefers_gpu():
    p = _point(500, 300)
    assert p.label == GPU


def test_runtime_deterministic_and_scales():
    fv = _fv([4, 0, 0, 3, 0, 0, 0, 0])
    assert synthetic_runtime(fv) == synthetic_runtime(fv)
    small = synthetic_runtime(fv, workload_scale=1.0)
    big = synthetic_runtime(fv, workload_scale=100.0)
    assert big[0] > small[0] and big[1] > small[1]


def test_label_split_near_70_30_on_toy_corpus():
    sources = generate_corpus(200, seed=0, max_chars=300)
    entries = C.entries_from_sources(sources, np.random.default_rng(1))
    labels = [label_point(e.features["SYNTAX8"]).label for e in entries]
    gpu_share = labels.count(GPU) / len(labels)
    assert 0.6 <= gpu_share <= 0.8


def test_label_is_argmin():
    for comp in range(0, 30, 3):
        p = _point(comp, comp)
        assert p.label == (CPU if p.t_cpu < p.t_gpu else GPU)


# --- decision tree ---

def test_threshold_separable_data_depth_one():
    points = [_point(0, 0) for _ in range(5)] + [_point(40, 10) for _ in range(5)]
    tree = train_tree(points, max_depth=5)
    assert not tree.root.is_leaf
    assert tree.root.left.is_leaf and tree.root.right.is_leaf
    assert all(tree.predict_one(p.features) == p.label for p in points)


def test_pure_node_not_split():
    points = [_point(1, 1), _point(2, 1), _point(3, 2)]
    assert all(p.label == CPU for p in points)
    with pytest.raises(DegenerateLabels):
        train_tree(points)


def test_tree_matches_brute_force_reference():
    rng = np.random.default_rng(0)
    for trial in range(50):
        n = 20
        X = np.round(rng.uniform(0, 6, size=(n, 3)), 1)
        y = ["GPU" if (x[0] + 0.5 * x[1] > 4) == (rng.random() > 0.1) else "CPU" for x in X]
        if len(set(y)) < 2:
            continue
        points = [
            LabeledPoint(_fv(list(row) + [0] * 5), label, 1.0, 2.0)
            for row, label in zip(X, y)
        ]
        depth = int(rng.integers(1, 5))
        tree = train_tree(points, max_depth=depth)
        ref = brute_force_tree(np.stack([p.features.values for p in points]),
                               [p.label for p in points], depth)
        probes = np.pad(rng.uniform(-1, 7, size=(40, 3)), ((0, 0), (0, 5)))
        for p in points:
            assert tree.predict_one(p.features) == brute_force_predict(ref, p.features.values), trial
        for row in probes:
            assert tree.predict_one(row) == brute_force_predict(ref, row), trial


def test_tree_deterministic_given_seed():
    points = [_point(c, m) for c in range(6) for m in range(6)]
    a = train_tree(points, max_depth=4, seed=1)
    b = train_tree(points, max_depth=4, seed=1)
    assert a.to_text() == b.to_text()


def test_tree_serialises_to_text():
    points = [_point(0, 0), _point(1, 0), _point(30, 10), _point(40, 12)]
    tree = train_tree(points)
    text = tree.to_text()
    assert "split" in text and "leaf" in text


# --- evaluation ---

def _eval_set(seed=3, n=40):
    rng = np.random.default_rng(seed)
    return [
        _point(int(rng.integers(0, 25)), int(rng.integers(0, 12))) for _ in range(n)
    ]


def test_static_gpu_speedup_exactly_one():
    report = evaluate(lambda fv: GPU, _eval_set())
    assert report.speedup == 1.0
    assert report.recall == 1.0
    assert report.specificity == 0.0


def test_oracle_predictor_hits_brute_force_optimum():
    eval_set = _eval_set()
    oracle = {id(p.features): p.label for p in eval_set}
    report = evaluate(lambda fv: oracle[id(fv)], eval_set)
    assert report.speedup == pytest.approx(oracle_speedup(eval_set), abs=1e-12)
    for p in (evaluate(lambda fv: CPU, eval_set), evaluate(lambda fv: GPU, eval_set)):
        assert p.speedup <= report.speedup + 1e-12


def test_always_cpu_on_all_gpu_set_degenerate_specificity():
    points = [_point(100 + i, 50) for i in range(10)]
    assert all(p.label == GPU for p in points)
    report = evaluate(lambda fv: CPU, points)
    assert report.recall == 0.0
    assert report.specificity == 1.0
    assert "specificity" in report.degenerate_denominators
    assert report.speedup < 1.0


def test_metrics_against_hand_confusion_matrix():
    # 4 GPU-optimal and 6 CPU-optimal points with a scripted predictor:
    # predictions hit 3 of 4 GPU and 4 of 6 CPU correctly
    points = [_point(100, 40) for _ in range(4)] + [_point(0, 0) for _ in range(6)]
    script = [GPU, GPU, GPU, CPU, CPU, CPU, CPU, CPU, GPU, GPU]
    it = iter(script)
    report = evaluate(lambda fv: next(it), points)
    tp, fp, fn, tn = 3, 2, 1, 4
    assert report.precision == pytest.approx(tp / (tp + fp))
    assert report.recall == pytest.approx(tp / (tp + fn))
    assert report.specificity == pytest.approx(tn / (tn + fp))


def test_trained_tree_beats_static_on_separable_mix():
    points = [_point(c, m) for c in range(0, 26, 2) for m in range(0, 10, 2)]
    tree = train_tree(points, max_depth=5)
    report = evaluate(tree, points)
    assert report.speedup > 1.0
    assert report.speedup <= oracle_speedup(points) + 1e-12
