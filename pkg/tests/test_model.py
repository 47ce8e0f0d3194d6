"""Model numerics, fill mechanics, determinism and training behaviour."""

import math

import numpy as np
import pytest
import torch

from kernelforge import corpus as C
from kernelforge import tokenizer as tok
from kernelforge.corpus import MaskedInstance
from kernelforge.features import FeatureVector
from kernelforge.model import (
    ModelConfig,
    ModelSampler,
    MultipleHoles,
    NoHole,
    NonFiniteLoss,
    OptimizerConfig,
    ShapeError,
    collate,
    fill_hole,
    init_state,
    iterative_fill,
    load_checkpoint,
    loss_for_batch,
    moving_average_decreasing_fraction,
    sample_workload,
    save_checkpoint,
    seed_input_ids,
    train_model,
    train_step,
)
from oracles import finite_difference_grads

# --- iterative fill mechanics (policy-agnostic) ---

BASE = (tok.START_ID, 7, tok.HOLE_ID, 8, tok.END_ID)


def scripted(tokens):
    script = iter(tokens)

    def next_token(ids, hole):
        return next(script)

    return next_token


def test_fill_immediate_endhole():
    out, terminated = iterative_fill(scripted([tok.ENDHOLE_ID]), BASE, max_seq_len=16)
    assert terminated
    assert out == (tok.START_ID, 7, 8, tok.END_ID)


def test_fill_trace_matches_hand_derivation():
    seen = []

    def recording(ids, hole):
        seen.append((ids, hole))
        return {0: 9, 1: 10, 2: tok.ENDHOLE_ID}[len(seen) - 1]

    out, terminated = iterative_fill(recording, BASE, max_seq_len=16)
    assert terminated
    assert out == (tok.START_ID, 7, 9, 10, 8, tok.END_ID)
    # each prediction sees the hole shifted right past the inserted token
    assert seen == [
        ((tok.START_ID, 7, tok.HOLE_ID, 8, tok.END_ID), 2),
        ((tok.START_ID, 7, 9, tok.HOLE_ID, 8, tok.END_ID), 3),
        ((tok.START_ID, 7, 9, 10, tok.HOLE_ID, 8, tok.END_ID), 4),
    ]


def test_fill_insertion_cap():
    out, terminated = iterative_fill(scripted([9] * 50), BASE, max_seq_len=16, max_insertions=3)
    assert not terminated
    assert out.count(tok.HOLE_ID) == 1
    assert len(out) == len(BASE) + 3


def test_fill_seq_len_cap():
    out, terminated = iterative_fill(scripted([9] * 50), BASE, max_seq_len=8)
    assert not terminated
    assert len(out) == 8


def test_fill_requires_exactly_one_hole():
    with pytest.raises(NoHole):
        iterative_fill(scripted([]), (tok.START_ID, tok.END_ID), max_seq_len=8)
    with pytest.raises(MultipleHoles):
        iterative_fill(
            scripted([]), (tok.START_ID, tok.HOLE_ID, tok.HOLE_ID, tok.END_ID), max_seq_len=8
        )


# --- tiny fixtures ---

def _tiny_instances(directed_dim=True, n=4, seq=12, vocab=24, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        body = [int(rng.integers(5, vocab)) for _ in range(seq - 4)]
        ids = [tok.START_ID] + body + [tok.END_ID]
        ids += [tok.PAD_ID] * (seq - len(ids))
        holed, h, hidden = C.place_hole(tuple(ids), rng, pad_to=seq)
        fv = FeatureVector("SYNTAX8", rng.uniform(0, 4, size=8))
        out.append(MaskedInstance(holed, h, len(hidden),
                                  hidden[0] if hidden else tok.ENDHOLE_ID,
                                  hidden, fv, "SYNTAX8"))
    return out


def _tiny_state(directed, vocab=24, seq=12, seed=3):
    cfg = ModelConfig(
        vocab_size=vocab, max_seq_len=seq, hidden_size=16, layers=1, heads=2,
        intermediate_size=32, directed=directed, feature_embed_size=8,
        feature_layers=1, feature_heads=2, fc_width=24,
        feature_norms=tuple([4.0] * 39) if directed else None,
    )
    return init_state(cfg, OptimizerConfig(max_lr=1e-3, warmup_steps=10, total_steps=100), seed=seed)


# --- forward laws ---

def test_logits_shape_law():
    state = _tiny_state(directed=False)
    batch = collate(_tiny_instances(), directed=False)
    logits = state.net(batch["input_ids"])
    assert logits.shape == (4, 12, 24)


def test_forward_deterministic():
    state = _tiny_state(directed=True)
    batch = collate(_tiny_instances(), directed=True)
    a = state.net(batch["input_ids"], batch["feature_values"], batch["feature_mask"])
    b = state.net(batch["input_ids"], batch["feature_values"], batch["feature_mask"])
    assert torch.equal(a, b)


def test_padding_law_exact():
    state = _tiny_state(directed=True)
    batch = collate(_tiny_instances(), directed=True)
    base = state.net(batch["input_ids"], batch["feature_values"], batch["feature_mask"])
    tampered = batch["feature_values"].clone()
    tampered[~batch["feature_mask"]] = 999.0
    assert torch.equal(
        base, state.net(batch["input_ids"], tampered, batch["feature_mask"])
    )


def test_shape_errors():
    state = _tiny_state(directed=True)
    batch = collate(_tiny_instances(), directed=True)
    with pytest.raises(ShapeError):
        state.net(batch["input_ids"][0])  # 1-D
    with pytest.raises(ShapeError):
        state.net(batch["input_ids"])  # directed without features
    with pytest.raises(ShapeError):
        state.net(batch["input_ids"], batch["feature_values"][:, :10], batch["feature_mask"])
    undirected = _tiny_state(directed=False)
    with pytest.raises(ShapeError):
        undirected.net(batch["input_ids"], batch["feature_values"], batch["feature_mask"])
    with pytest.raises(ShapeError):
        too_long = torch.zeros((1, 30), dtype=torch.long)
        state.net(too_long)


def test_undirected_ignores_features_entirely():
    state = _tiny_state(directed=False)
    insts_a = _tiny_instances(seed=0)
    shuffled = [
        MaskedInstance(i.input_ids, i.hole_index, i.hidden_length, i.target_id,
                       i.hidden_ids, FeatureVector("IRPHASE", np.arange(12)), "IRPHASE")
        for i in insts_a
    ]
    a = loss_for_batch(state, collate(insts_a, directed=False))
    b = loss_for_batch(state, collate(shuffled, directed=False))
    assert torch.equal(a, b)


# --- training numerics ---

def test_untrained_loss_near_ln_vocab():
    state = _tiny_state(directed=False, vocab=100, seq=16)
    insts = _tiny_instances(n=16, seq=16, vocab=100, seed=5)
    loss = float(loss_for_batch(state, collate(insts, directed=False)))
    assert loss == pytest.approx(math.log(100), rel=0.05)


@pytest.mark.parametrize("directed", [False, True])
def test_gradients_match_finite_differences(directed):
    torch.manual_seed(0)
    state = _tiny_state(directed=directed)
    state.net.double()
    batch = collate(_tiny_instances(directed), directed=directed)
    if directed:
        batch["feature_values"] = batch["feature_values"].double()

    def loss_fn():
        return loss_for_batch(state, batch)

    loss = loss_fn()
    state.net.zero_grad()
    loss.backward()
    rng = np.random.default_rng(1)
    rows = finite_difference_grads(
        loss_fn, list(state.net.named_parameters()), coords_per_tensor=4, rng=rng, eps=1e-6
    )
    assert len(rows) > 40
    worst = 0.0
    for name, analytic, numeric in rows:
        # floor shields numerically-zero gradients from FD roundoff noise
        scale = max(abs(analytic) + abs(numeric), 1e-6)
        rel = abs(analytic - numeric) / scale
        worst = max(worst, rel)
        assert rel < 1e-3, (name, analytic, numeric)
    assert worst < 1e-3


def test_overfit_single_batch():
    state = _tiny_state(directed=False, vocab=40, seq=16, seed=8)
    state.opt_config.max_lr = 3e-3
    state.opt_config.total_steps = 4000
    insts = _tiny_instances(n=8, seq=16, vocab=40, seed=2)
    loss = None
    for _ in range(500):
        loss = train_step(state, insts)
        if loss < 0.1:
            break
    assert loss < 0.1


def test_nonfinite_loss_raises():
    state = _tiny_state(directed=False)
    with torch.no_grad():
        state.net.decode.weight.fill_(float("nan"))
    with pytest.raises(NonFiniteLoss):
        train_step(state, _tiny_instances())


def test_lr_schedule_shape():
    opt = OptimizerConfig(max_lr=1.0, warmup_steps=10, total_steps=110)
    lrs = [opt.lr_at(s) for s in range(115)]
    assert lrs[9] == pytest.approx(1.0)
    assert all(lrs[i] < lrs[i + 1] for i in range(9))
    assert all(lrs[i] >= lrs[i + 1] for i in range(10, 110))
    assert lrs[110] == 0.0
    assert lrs[114] == 0.0


# --- sampling determinism and workloads ---

def test_sample_workload_reproducible(toy_entries):
    entries, vocab = toy_entries
    state = init_state(
        ModelConfig(vocab_size=vocab.size, max_seq_len=160, hidden_size=32,
                    layers=1, heads=2),
        seed=4,
    )
    seed_ids = seed_input_ids(vocab)
    a = sample_workload(state, seed_ids, None, 6, temperature=0.9, seed=13)
    b = sample_workload(state, seed_ids, None, 6, temperature=0.9, seed=13)
    assert a == b
    single = fill_hole(state, seed_ids, None, temperature=0.9, seed=13)
    assert a[0] == single


def test_sampler_never_emits_forbidden_meta(toy_entries):
    entries, vocab = toy_entries
    state = init_state(
        ModelConfig(vocab_size=vocab.size, max_seq_len=64, hidden_size=16,
                    layers=1, heads=2),
        seed=9,
    )
    seed_ids = seed_input_ids(vocab)
    for ids, terminated in sample_workload(state, seed_ids, None, 8, temperature=2.0, seed=3):
        body = ids[1:-1]
        assert tok.START_ID not in body and tok.PAD_ID not in body
        if terminated:
            assert tok.HOLE_ID not in ids


def test_workload_size_validation(toy_entries):
    _, vocab = toy_entries
    state = init_state(ModelConfig(vocab_size=vocab.size, max_seq_len=32,
                                   hidden_size=16, layers=1, heads=2), seed=0)
    with pytest.raises(ValueError):
        sample_workload(state, seed_input_ids(vocab), None, 0)
    with pytest.raises(ValueError):
        ModelSampler(state, temperature=0.0)


def test_directed_sampler_requires_target():
    state = _tiny_state(directed=True)
    ids = (tok.START_ID, tok.HOLE_ID, tok.END_ID)
    with pytest.raises(ValueError):
        fill_hole(state, ids, None, seed=0)


# --- checkpoints ---

def test_checkpoint_round_trip(tmp_path):
    state = _tiny_state(directed=True, seed=11)
    for _ in range(5):
        train_step(state, _tiny_instances(seed=6))
    path = tmp_path / "model.ckpt"
    save_checkpoint(state, path)
    loaded = load_checkpoint(path)
    assert loaded.step == state.step
    assert loaded.config == state.config
    for (na, a), (nb, b) in zip(
        state.net.state_dict().items(), loaded.net.state_dict().items()
    ):
        assert na == nb
        assert torch.equal(a, b), na
    batch = collate(_tiny_instances(seed=7), directed=True)
    assert torch.equal(
        state.net(batch["input_ids"], batch["feature_values"], batch["feature_mask"]),
        loaded.net(batch["input_ids"], batch["feature_values"], batch["feature_mask"]),
    )
    # optimizer moments survive (float32 exactly)
    p0 = next(iter(state.net.parameters()))
    q0 = next(iter(loaded.net.parameters()))
    assert torch.equal(
        state.optimizer.state[p0]["exp_avg"].float(),
        loaded.optimizer.state[q0]["exp_avg"].float(),
    )


def test_checkpoint_rejects_other_files(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"definitely not a checkpoint")
    with pytest.raises(ValueError):
        load_checkpoint(path)


# --- training smoke on the real corpus ---

@pytest.mark.slow
def test_training_smoke_moving_average(small_train_setup):
    losses = small_train_setup["losses"]
    frac = moving_average_decreasing_fraction(losses, window=100)
    assert frac >= 0.9
    assert np.mean(losses[-50:]) < np.mean(losses[:50]) / 2


@pytest.mark.slow
def test_synthetic_token_count_directedness(token_count_models):
    d_state, u_state, mean_err = token_count_models
    targets = (2, 5, 8)
    d_errs, u_errs = [], []
    for c in targets:
        d_errs.append(mean_err(d_state, c, 200, seed=7000 + c))
        u_errs.append(mean_err(u_state, c, 200, seed=7000 + c))
    # >= 500 samples in total per model, strictly smaller mean error
    assert float(np.mean(d_errs)) < float(np.mean(u_errs))
