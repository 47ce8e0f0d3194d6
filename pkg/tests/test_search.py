"""Beam search: selection randomness, hole variants, mock-policy runs."""

import numpy as np
import pytest

from kernelforge import tokenizer as tok
from kernelforge.corpus import reconstruct, MaskedInstance
from kernelforge.features import FeatureVector, distance
from kernelforge.kernelgen import generate_corpus
from kernelforge.search import (
    BeamConfig,
    Candidate,
    LiteralMutationPolicy,
    NoCompilingCandidate,
    candidate_id,
    kcl_evaluator,
    literal_evaluator,
    literal_features,
    mutate_one_literal,
    place_random_holes,
    run_search,
    select_topk,
)
from oracles import bfs_min_mutations


def _mk_candidates(distances, gen=0):
    out = []
    for i, d in enumerate(distances):
        out.append(Candidate(
            id=f"{i:04d}", source=f"src{i}", token_ids=(), compiles=True,
            features=FeatureVector("SYNTAX8", np.zeros(8)), distance=float(d),
            generation=gen,
        ))
    return out


# --- select_topk ---

def test_topk_p_zero_deterministic():
    cands = _mk_candidates([5, 1, 3, 2, 4, 0])
    top = select_topk(cands, 3, 0.0, np.random.default_rng(0))
    assert [c.distance for c in top] == [0.0, 1.0, 2.0]


def test_topk_tie_break_by_id():
    cands = _mk_candidates([1, 1, 1, 1])
    top = select_topk(cands, 2, 0.0, np.random.default_rng(0))
    assert [c.id for c in top] == ["0000", "0001"]


def test_topk_fewer_than_k_returns_all():
    cands = _mk_candidates([2, 1])
    assert len(select_topk(cands, 10, 0.5, np.random.default_rng(0))) == 2


def test_topk_p_one_replaces_everything():
    cands = _mk_candidates(range(40))
    top_ids = {c.id for c in cands[:5]}
    for seed in range(20):
        chosen = select_topk(cands, 5, 1.0, np.random.default_rng(seed))
        ids = [c.id for c in chosen]
        assert len(set(ids)) == 5  # no duplicates
        assert not (set(ids) & top_ids)  # pool is large: every slot replaced


def test_topk_replacement_rate_monte_carlo():
    cands = _mk_candidates(range(100))
    rng = np.random.default_rng(123)
    k = 10
    replaced = 0
    total = 0
    for _ in range(10_000):
        chosen = select_topk(cands, k, 0.15, rng)
        nearest = {c.id for c in cands[:k]}
        replaced += sum(1 for c in chosen if c.id not in nearest)
        total += k
    rate = replaced / total
    assert abs(rate - 0.15) <= 0.01


# --- hole variants ---

def test_place_random_holes_variants(toy_entries):
    entries, _ = toy_entries
    ids = tuple(t for t in entries[0].token_ids if t != tok.PAD_ID)
    rng = np.random.default_rng(8)
    variants = place_random_holes(ids, 12, rng)
    assert len(variants) == 12
    assert len(set(variants)) > 1
    for v in variants:
        assert v.count(tok.HOLE_ID) == 1
    again = place_random_holes(ids, 12, np.random.default_rng(8))
    assert variants == again


def test_place_random_holes_reconstruction(toy_entries):
    entries, _ = toy_entries
    from kernelforge.corpus import place_hole

    ids = tuple(t for t in entries[1].token_ids if t != tok.PAD_ID)
    rng = np.random.default_rng(9)
    for _ in range(100):
        holed, h, hidden = place_hole(ids, rng)
        inst = MaskedInstance(holed, h, len(hidden),
                              hidden[0] if hidden else tok.ENDHOLE_ID, hidden,
                              FeatureVector("SYNTAX8", np.zeros(8)), "SYNTAX8")
        assert reconstruct(inst) == ids


# --- literal mutation mock ---

def test_mutate_one_literal_steps_by_one():
    rng = np.random.default_rng(0)
    src = "kernel void k(global int* a){ a[0] = 2; a[1] = 3; }"
    for _ in range(50):
        mutated = mutate_one_literal(src, rng)
        before = literal_features(src).values
        after = literal_features(mutated).values
        assert np.abs(after - before).sum() == 1


def test_literal_features_padding():
    fv = literal_features("a[3] = 7;")
    assert fv.space == "SYNTAX8"
    assert fv.to_list() == [3, 7, 0, 0, 0, 0, 0, 0]


def _run_mock_search(seed_src, target_vals, vocab, cfg):
    policy = LiteralMutationPolicy(vocab)
    evaluator = literal_evaluator(vocab)
    target = FeatureVector("SYNTAX8", np.array(target_vals, dtype=np.float64))
    seed_ids = (tok.START_ID, *tok.encode(vocab, seed_src), tok.END_ID)
    return run_search(policy, evaluator, target, cfg, seed_ids)


@pytest.fixture(scope="module")
def mock_vocab():
    from kernelforge import tokenizer as T

    return T.build_vocab(generate_corpus(5, seed=0), word_freq_threshold=3)


def test_mock_search_reaches_three_edit_target(mock_vocab):
    seed_src = "kernel void k(global int* a){ a[0] = 2; a[1] = 3; a[2] = 4; }"
    seed_lits = tuple(int(v) for v in literal_features(seed_src).values)
    target = list(seed_lits)
    target[1] += 1   # 2 -> 3
    target[3] -= 1   # 3 -> 2
    target[5] += 1   # 4 -> 5
    oracle_min = bfs_min_mutations(seed_lits, tuple(target))
    assert oracle_min == 3
    cfg = BeamConfig(workload_size=27, beam_width=3, replace_prob=0.0,
                     max_depth=8, seed=5)
    result = _run_mock_search(seed_src, target, mock_vocab, cfg)
    assert result.exact_match
    assert result.generations_used <= oracle_min


def test_mock_search_budget_and_monotonicity(mock_vocab):
    seed_src = "kernel void k(global int* a){ a[0] = 2; a[1] = 3; }"
    target = [1, 3, 2, 3, 0, 0, 0, 0]
    cfg = BeamConfig(workload_size=16, beam_width=4, replace_prob=0.15,
                     max_depth=6, seed=3)
    result = _run_mock_search(seed_src, target, mock_vocab, cfg)
    assert result.inferences == result.generations_used * cfg.workload_size
    assert all(
        a >= b for a, b in zip(result.best_by_generation, result.best_by_generation[1:])
    )


def test_mock_search_trajectory_distances_recompute(mock_vocab):
    seed_src = "kernel void k(global int* a){ a[0] = 5; a[1] = 1; }"
    target_fv = FeatureVector("SYNTAX8", np.array([0, 5, 1, 2, 0, 0, 0, 0], dtype=np.float64))
    cfg = BeamConfig(workload_size=12, beam_width=3, replace_prob=0.1, max_depth=4, seed=9)
    policy = LiteralMutationPolicy(mock_vocab)
    evaluator = literal_evaluator(mock_vocab)
    seed_ids = (tok.START_ID, *tok.encode(mock_vocab, seed_src), tok.END_ID)
    result = run_search(policy, evaluator, target_fv, cfg, seed_ids)
    for cand in result.trajectory:
        assert cand.compiles
        assert cand.distance == distance(literal_features(cand.source), target_fv)
        assert cand.id == candidate_id(cand.source)


def test_mock_search_bit_reproducible(mock_vocab):
    seed_src = "kernel void k(global int* a){ a[0] = 2; a[1] = 3; }"
    target = [2, 4, 1, 4, 0, 0, 0, 0]
    cfg = BeamConfig(workload_size=16, beam_width=4, replace_prob=0.15, max_depth=5, seed=77)
    a = _run_mock_search(seed_src, target, mock_vocab, cfg)
    b = _run_mock_search(seed_src, target, mock_vocab, cfg)
    assert [c.to_record() for c in a.trajectory] == [c.to_record() for c in b.trajectory]
    assert a.best.to_record() == b.best.to_record()
    assert a.summary(FeatureVector("SYNTAX8", np.array(target, dtype=np.float64))) == \
        b.summary(FeatureVector("SYNTAX8", np.array(target, dtype=np.float64)))


def test_mock_search_parent_chain(mock_vocab):
    seed_src = "kernel void k(global int* a){ a[0] = 2; a[1] = 3; }"
    target = [4, 2, 1, 3, 0, 0, 0, 0]
    cfg = BeamConfig(workload_size=10, beam_width=2, replace_prob=0.0, max_depth=5, seed=1)
    result = _run_mock_search(seed_src, target, mock_vocab, cfg)
    by_id = {}
    for c in result.trajectory:
        by_id.setdefault(c.id, c)
    for cand in result.trajectory:
        node = cand
        hops = 0
        while node.parent_id is not None:
            node = by_id[node.parent_id]
            hops += 1
            assert hops <= cfg.max_depth
        assert node.generation == 0 or node.parent_id is None


def test_no_compiling_candidate_raised(toy_entries):
    entries, vocab = toy_entries

    class BrokenPolicy:
        def fill_many(self, inputs, target, seed):
            return [(ids, False) for ids in inputs]  # never terminates a hole

        def make_inputs(self, ids, n, rng):
            return [tuple(ids)] * n

    target = entries[0].features["SYNTAX8"]
    seed_ids = (tok.START_ID, tok.HOLE_ID, tok.END_ID)
    cfg = BeamConfig(workload_size=8, beam_width=2, max_depth=3, seed=0)
    with pytest.raises(NoCompilingCandidate) as exc:
        run_search(BrokenPolicy(), kcl_evaluator(vocab, "SYNTAX8"), target, cfg, seed_ids)
    assert len(exc.value.workload) == 8
    assert not any(c.compiles for c in exc.value.workload)


def test_fixed_completion_policy_exact_at_generation_zero(toy_entries):
    entries, vocab = toy_entries
    kernel_src = entries[0].source
    fixed_ids = (tok.START_ID, *tok.encode(vocab, kernel_src), tok.END_ID)

    class FixedPolicy:
        def fill_many(self, inputs, target, seed):
            return [(fixed_ids, True) for _ in inputs]

        def make_inputs(self, ids, n, rng):
            return [tuple(ids)] * n

    target = entries[0].features["SYNTAX8"]
    cfg = BeamConfig(workload_size=4, beam_width=2, max_depth=5, seed=0)
    result = run_search(FixedPolicy(), kcl_evaluator(vocab, "SYNTAX8"), target, cfg,
                        (tok.START_ID, tok.HOLE_ID, tok.END_ID))
    assert result.exact_match
    assert result.generations_used == 1
    assert result.best.distance == 0.0
    assert result.inferences == 4


def test_beam_config_validation():
    with pytest.raises(ValueError):
        BeamConfig(workload_size=4, beam_width=8)
    with pytest.raises(ValueError):
        BeamConfig(replace_prob=1.5)
    with pytest.raises(ValueError):
        BeamConfig(max_depth=0)
