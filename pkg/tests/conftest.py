import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for oracles.py

from kernelforge import corpus as corpus_mod
from kernelforge import tokenizer as tok
from kernelforge.kernelgen import generate_corpus

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def golden_kernels():
    """name -> source for the 20-kernel golden suite."""
    return {
        p.stem: p.read_text() for p in sorted((GOLDEN / "kernels").glob("*.kcl"))
    }


@pytest.fixture(scope="session")
def golden_expected():
    return json.loads((GOLDEN / "expected_features.json").read_text())


@pytest.fixture(scope="session")
def toy_entries():
    """Small tokenized corpus shared across model/search tests."""
    sources = generate_corpus(60, seed=11, max_chars=300)
    entries = corpus_mod.entries_from_sources(sources, np.random.default_rng(5))
    vocab = tok.build_vocab([e.source for e in entries], word_freq_threshold=10)
    tokenized, _ = corpus_mod.attach_tokens(entries, vocab, 160)
    assert len(tokenized) >= 40
    return tokenized, vocab


@pytest.fixture(scope="session")
def small_train_setup():
    """A 1000-step undirected training run on a compact corpus; shared by the
    smoke-monotonicity check."""
    from kernelforge.model import ModelConfig, OptimizerConfig, init_state, train_model

    sources = generate_corpus(250, seed=11, max_chars=210)
    entries = corpus_mod.entries_from_sources(sources, np.random.default_rng(5))
    vocab = tok.build_vocab([e.source for e in entries])
    entries, _ = corpus_mod.attach_tokens(entries, vocab, 96)
    state = init_state(
        ModelConfig(vocab_size=vocab.size, max_seq_len=96, hidden_size=64,
                    layers=2, heads=4),
        OptimizerConfig(max_lr=8e-4, warmup_steps=60, total_steps=1300),
        seed=2,
    )
    losses = train_model(state, entries, steps=1000, batch_size=16,
                         rng=np.random.default_rng(3))
    return {"state": state, "entries": entries, "vocab": vocab, "losses": losses}


@pytest.fixture(scope="session")
def token_count_models():
    """Directed vs undirected models trained on the synthetic token-count
    task at an equal budget, plus the sampling error metric."""
    from kernelforge.corpus import MaskedInstance, place_hole
    from kernelforge.features import FeatureVector
    from kernelforge.model import (ModelConfig, OptimizerConfig, init_state,
                                   sample_workload, train_step)

    VSIZE, SEQ, BODY = 13, 16, 12
    X, P, Q = 5, 6, 7
    rng = np.random.default_rng(0)
    seqs = []
    for _ in range(400):
        c = int(rng.integers(0, 9))
        body = [X] * c + [int(rng.choice((P, Q))) for _ in range(BODY - c)]
        rng.shuffle(body)
        ids = [tok.START_ID] + body + [tok.END_ID] + [tok.PAD_ID] * (SEQ - BODY - 2)
        seqs.append((tuple(ids), c))

    def instance(r):
        ids, c = seqs[int(r.integers(len(seqs)))]
        holed, h, hidden = place_hole(ids, r, pad_to=SEQ)
        return MaskedInstance(holed, h, len(hidden),
                              hidden[0] if hidden else tok.ENDHOLE_ID, hidden,
                              FeatureVector("SYNTAX8", [c, 0, 0, 0, 0, 0, 0, 0]),
                              "SYNTAX8")

    norms = tuple([8.0] + [1.0] * 38)

    def train(directed):
        cfg = ModelConfig(vocab_size=VSIZE, max_seq_len=SEQ, hidden_size=32,
                          layers=2, heads=2, directed=directed,
                          feature_embed_size=16, feature_layers=1, fc_width=64,
                          feature_norms=norms if directed else None)
        st = init_state(cfg, OptimizerConfig(max_lr=1.5e-3, warmup_steps=50,
                                             total_steps=1560), seed=1)
        r = np.random.default_rng(1001)
        for _ in range(1200):
            train_step(st, [instance(r) for _ in range(16)])
        return st

    d_state = train(True)
    u_state = train(False)
    seed_ids = (tok.START_ID, tok.HOLE_ID, tok.END_ID)

    def mean_err(state, target_count, n, seed):
        target = None
        if state.config.directed:
            target = FeatureVector("SYNTAX8", [target_count, 0, 0, 0, 0, 0, 0, 0])
        outs = sample_workload(state, seed_ids, target, n, temperature=1.0, seed=seed)
        return float(np.mean([
            abs(sum(1 for t in ids if t == X) - target_count) for ids, _ in outs
        ]))

    return d_state, u_state, mean_err
