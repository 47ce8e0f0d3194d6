"""Iterative hole filling.

A [HOLE] is completed one token at a time: the model reads the logits at
the hole position, samples with temperature, and either inserts the token
just before the hole or, on [ENDHOLE], removes the hole and stops. The
token mechanics are policy-agnostic (`iterative_fill`); the batched model
sampler drives many sequences through shared forward passes with one
split RNG stream per sample index.
"""

from __future__ import annotations

from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import torch

from ..features import FeatureVector, to_segmented
from ..tokenizer import ENDHOLE_ID, HOLE_ID, PAD_ID, Vocabulary, encode, START_ID, END_ID
from .state import ModelState

# meta tokens a sampler may never emit mid-sequence
_FORBIDDEN = (START_ID, END_ID, PAD_ID, HOLE_ID)


class NoHole(ValueError):
    pass


class MultipleHoles(ValueError):
    pass


def find_hole(ids: Sequence[int]) -> int:
    positions = [i for i, t in enumerate(ids) if t == HOLE_ID]
    if not positions:
        raise NoHole("input has no [HOLE]")
    if len(positions) > 1:
        raise MultipleHoles(f"input has {len(positions)} [HOLE] tokens")
    return positions[0]


def iterative_fill(
    next_token: Callable[[Tuple[int, ...], int], int],
    ids: Sequence[int],
    max_seq_len: int,
    max_insertions: Optional[int] = None,
) -> Tuple[Tuple[int, ...], bool]:
    """Fill the single hole in `ids` by repeatedly asking `next_token` for
    the token at the hole position. Returns (sequence, terminated); a
    terminated sequence never contains [HOLE]."""
    ids = list(ids)
    hole = find_hole(ids)
    if max_insertions is None:
        max_insertions = max(0, max_seq_len - len(ids))
    inserted = 0
    while True:
        tok = next_token(tuple(ids), hole)
        if tok == ENDHOLE_ID:
            del ids[hole]
            return tuple(ids), True
        if inserted >= max_insertions or len(ids) >= max_seq_len:
            return tuple(ids), False
        ids.insert(hole, tok)
        hole += 1
        inserted += 1


def _categorical(logits: np.ndarray, temperature: float, rng: np.random.Generator) -> int:
    z = logits.astype(np.float64) / temperature
    z -= z.max()
    p = np.exp(z)
    p /= p.sum()
    return int(rng.choice(len(p), p=p))


class ModelSampler:
    """Batched hole filler over a trained model.

    All sequences in one call share forward passes; sampling draws come
    from numpy streams split per sample index, so outputs are reproducible
    regardless of how calls are grouped.
    """

    def __init__(self, state: ModelState, temperature: Optional[float] = None):
        self.state = state
        self.temperature = temperature if temperature is not None else state.config.temperature
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    def _feature_tensors(self, target: Optional[FeatureVector], n: int):
        if not self.state.config.directed:
            return None, None
        if target is None:
            raise ValueError("directed model requires target features")
        vals, mask = to_segmented(target)
        return (
            torch.tensor(np.tile(vals, (n, 1)), dtype=torch.float32),
            torch.tensor(np.tile(mask, (n, 1)), dtype=torch.bool),
        )

    def _hole_logits(self, sequences: List[List[int]], holes: List[int],
                     target: Optional[FeatureVector]) -> np.ndarray:
        maxlen = max(len(s) for s in sequences)
        batch = torch.full((len(sequences), maxlen), PAD_ID, dtype=torch.long)
        for i, s in enumerate(sequences):
            batch[i, :len(s)] = torch.tensor(s, dtype=torch.long)
        fv, fm = self._feature_tensors(target, len(sequences))
        self.state.net.eval()
        with torch.no_grad():
            logits = self.state.net(batch, fv, fm)
        rows = logits[torch.arange(len(sequences)), torch.tensor(holes)]
        out = rows.numpy().copy()
        out[:, list(_FORBIDDEN)] = -np.inf
        return out

    def fill_many(
        self,
        inputs: Sequence[Sequence[int]],
        target: Optional[FeatureVector],
        seed: int,
        max_insertions: Optional[int] = None,
    ) -> List[Tuple[Tuple[int, ...], bool]]:
        max_len = self.state.config.max_seq_len
        seqs = [list(ids) for ids in inputs]
        holes = [find_hole(s) for s in seqs]
        budgets = [
            max_insertions if max_insertions is not None else max(0, max_len - len(s))
            for s in seqs
        ]
        rngs = [np.random.default_rng((seed, i)) for i in range(len(seqs))]
        inserted = [0] * len(seqs)
        results: List[Optional[Tuple[Tuple[int, ...], bool]]] = [None] * len(seqs)
        active = list(range(len(seqs)))
        while active:
            logits = self._hole_logits(
                [seqs[i] for i in active], [holes[i] for i in active], target
            )
            still = []
            for row, i in enumerate(active):
                tok = _categorical(logits[row], self.temperature, rngs[i])
                if tok == ENDHOLE_ID:
                    del seqs[i][holes[i]]
                    results[i] = (tuple(seqs[i]), True)
                elif inserted[i] >= budgets[i] or len(seqs[i]) >= max_len:
                    results[i] = (tuple(seqs[i]), False)
                else:
                    seqs[i].insert(holes[i], tok)
                    holes[i] += 1
                    inserted[i] += 1
                    still.append(i)
            active = still
        return results  # type: ignore[return-value]


def fill_hole(
    state: ModelState,
    input_ids: Sequence[int],
    target: Optional[FeatureVector] = None,
    temperature: Optional[float] = None,
    seed: int = 0,
    max_insertions: Optional[int] = None,
) -> Tuple[Tuple[int, ...], bool]:
    """Complete one holed sequence; equivalent to a workload of size 1."""
    sampler = ModelSampler(state, temperature)
    return sampler.fill_many([input_ids], target, seed, max_insertions)[0]


def sample_workload(
    state: ModelState,
    seed_input: Sequence[int],
    target: Optional[FeatureVector],
    workload_size: int,
    temperature: Optional[float] = None,
    seed: int = 0,
) -> List[Tuple[Tuple[int, ...], bool]]:
    """W independent completions of the same input under split RNG streams."""
    if workload_size < 1:
        raise ValueError("workload_size must be >= 1")
    sampler = ModelSampler(state, temperature)
    return sampler.fill_many([seed_input] * workload_size, target, seed)


def seed_input_ids(vocab: Vocabulary, text: str = "kernel void [HOLE]") -> Tuple[int, ...]:
    """Token ids for a generation feed; [HOLE] markers in the text become
    hole tokens."""
    parts = text.split("[HOLE]")
    ids: List[int] = [START_ID]
    for i, part in enumerate(parts):
        if part:
            ids.extend(encode(vocab, part))
        if i < len(parts) - 1:
            ids.append(HOLE_ID)
    ids.append(END_ID)
    return tuple(ids)
