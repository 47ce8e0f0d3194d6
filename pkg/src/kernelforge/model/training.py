"""Training: hole-target cross entropy with warmup/decay Adam."""

from __future__ import annotations

from typing import List, Optional, Sequence, TextIO

import numpy as np
import torch
import torch.nn.functional as F

from ..corpus import CorpusEntry, MaskedInstance, make_masked_instance
from ..features import to_segmented
from .state import ModelState


class NonFiniteLoss(RuntimeError):
    pass


def collate(instances: Sequence[MaskedInstance], directed: bool) -> dict:
    """Batch tensors for a list of masked instances."""
    input_ids = torch.tensor([list(i.input_ids) for i in instances], dtype=torch.long)
    hole_idx = torch.tensor([i.hole_index for i in instances], dtype=torch.long)
    targets = torch.tensor([i.target_id for i in instances], dtype=torch.long)
    batch = {"input_ids": input_ids, "hole_idx": hole_idx, "targets": targets}
    if directed:
        vals, masks = [], []
        for inst in instances:
            v, m = to_segmented(inst.features)
            vals.append(v)
            masks.append(m)
        batch["feature_values"] = torch.tensor(np.stack(vals), dtype=torch.float32)
        batch["feature_mask"] = torch.tensor(np.stack(masks), dtype=torch.bool)
    return batch


def loss_for_batch(state: ModelState, batch: dict) -> torch.Tensor:
    """Mean cross entropy of the hole-position logits against the first
    hidden token (differentiable)."""
    net = state.net
    logits = net(
        batch["input_ids"],
        batch.get("feature_values"),
        batch.get("feature_mask"),
    )
    picked = logits[torch.arange(logits.shape[0]), batch["hole_idx"]]
    return F.cross_entropy(picked, batch["targets"])


def train_step(state: ModelState, instances: Sequence[MaskedInstance]) -> float:
    """One optimizer step on a batch; returns the loss. The learning rate
    follows the configured linear warmup / linear decay schedule."""
    lr = state.opt_config.lr_at(state.step)
    for group in state.optimizer.param_groups:
        group["lr"] = lr
    batch = collate(instances, state.config.directed)
    state.net.train()
    loss = loss_for_batch(state, batch)
    if not torch.isfinite(loss):
        raise NonFiniteLoss(
            f"non-finite loss at step {state.step} (lr={lr:.3g}): {loss.item()!r}"
        )
    state.optimizer.zero_grad()
    loss.backward()
    state.optimizer.step()
    state.step += 1
    return float(loss.item())


def train_model(
    state: ModelState,
    entries: Sequence[CorpusEntry],
    steps: int,
    batch_size: int,
    rng: np.random.Generator,
    log: Optional[TextIO] = None,
    log_every: int = 50,
    tail_prob: float = 0.0,
) -> List[float]:
    """Sample masked instances on demand and run `steps` updates."""
    losses: List[float] = []
    n = len(entries)
    for _ in range(steps):
        picks = rng.integers(0, n, size=batch_size)
        instances = [
            make_masked_instance(entries[int(k)], rng, tail_prob=tail_prob)
            for k in picks
        ]
        loss = train_step(state, instances)
        losses.append(loss)
        if log is not None and (state.step % log_every == 0 or state.step == 1):
            lr = state.opt_config.lr_at(state.step - 1)
            log.write(f"{state.step}\t{loss:.6f}\t{lr:.8f}\n")
    return losses


def moving_average_decreasing_fraction(losses: Sequence[float], window: int) -> float:
    """Fraction of adjacent moving-average windows that decrease; the
    training-smoke health metric."""
    if len(losses) < 2 * window:
        raise ValueError("not enough steps for the requested window")
    means = np.convolve(losses, np.ones(window) / window, mode="valid")
    diffs = np.diff(means[::window])
    if len(diffs) == 0:
        diffs = np.diff(means)
    return float(np.mean(diffs < 0))
