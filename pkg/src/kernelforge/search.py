"""Feature-targeted beam search over a pluggable infill policy.

Each generation completes W holed inputs, keeps the K compiling candidates
closest to the target (each top slot swapped for a random same-generation
candidate with probability p), re-holes the survivors into the next W
inputs, and stops on an exact feature match or at max depth. The policy is
anything with fill_many/make_inputs: the trained model, or a deterministic
mock for exercising the search loop itself.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from . import tokenizer as tok
from .corpus import MAX_HOLE_FRACTION, place_hole
from .features import FeatureVector, distance, extract_all, relative_proximity
from .kcl import check_kernel, parse_kernel
from .kcl.checker import SemanticError
from .kcl.parser import ParseError
from .model.sampling import ModelSampler
from .model.state import ModelState


@dataclass
class BeamConfig:
    workload_size: int = 2048
    beam_width: int = 32
    replace_prob: float = 0.15
    max_depth: int = 50
    temperature: float = 0.8
    seed_text: str = "kernel void [HOLE]"
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.beam_width <= self.workload_size:
            raise ValueError("need 1 <= beam_width <= workload_size")
        if not 0.0 <= self.replace_prob <= 1.0:
            raise ValueError("replace_prob must be in [0, 1]")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")


@dataclass
class Candidate:
    id: str
    source: str
    token_ids: Tuple[int, ...]
    compiles: bool
    features: Optional[FeatureVector]
    distance: Optional[float]
    generation: int
    parent_id: Optional[str] = None

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "source": self.source,
            "compiles": self.compiles,
            "space": self.features.space if self.features is not None else None,
            "features": self.features.to_list() if self.features is not None else None,
            "distance": self.distance,
            "generation": self.generation,
            "parent_id": self.parent_id,
        }


@dataclass
class SearchResult:
    best: Candidate
    trajectory: List[Candidate]
    generations_used: int
    exact_match: bool
    inferences: int
    best_by_generation: List[float] = field(default_factory=list)

    def summary(self, target: FeatureVector) -> dict:
        return {
            "space": target.space,
            "target": target.to_list(),
            "best_distance": self.best.distance,
            "proximity": relative_proximity(self.best.features, target),
            "generations_used": self.generations_used,
            "inferences": self.inferences,
            "exact_match": self.exact_match,
            "trajectory_size": len(self.trajectory),
        }


class NoCompilingCandidate(RuntimeError):
    """First generation produced nothing that compiles; the raw workload is
    kept on the exception for diagnostics."""

    def __init__(self, workload: List[Candidate]):
        self.workload = workload
        super().__init__(f"no compiling candidate among {len(workload)} samples")


class InfillPolicy(Protocol):
    def fill_many(self, inputs, target, seed) -> List[Tuple[Tuple[int, ...], bool]]:
        ...

    def make_inputs(self, candidate_ids, n, rng) -> List[Tuple[int, ...]]:
        ...


Evaluator = Callable[[Tuple[int, ...], bool], Tuple[str, bool, Optional[FeatureVector]]]


def candidate_id(source: str) -> str:
    return hashlib.sha256(source.encode()).hexdigest()[:16]


def select_topk(
    candidates: Sequence[Candidate], k: int, p: float, rng: np.random.Generator
) -> List[Candidate]:
    """The k nearest candidates (ties by id), each slot independently
    replaced with probability p by a random not-yet-selected candidate of
    the same generation (ejected members do not return to the pool)."""
    ranked = sorted(candidates, key=lambda c: (c.distance, c.id))
    if len(ranked) <= k:
        return list(ranked)
    top = ranked[:k]
    pool = ranked[k:]
    for i in range(len(top)):
        if p > 0 and pool and rng.random() < p:
            j = int(rng.integers(len(pool)))
            top[i] = pool.pop(j)
    return top


def place_random_holes(
    candidate_ids: Sequence[int],
    n_variants: int,
    rng: np.random.Generator,
    max_hole_fraction: float = MAX_HOLE_FRACTION,
) -> List[Tuple[int, ...]]:
    """n hole-bearing inputs for one candidate, differing in index/length."""
    return [
        place_hole(candidate_ids, rng, max_hole_fraction)[0] for _ in range(n_variants)
    ]


def kcl_evaluator(vocab: tok.Vocabulary, space: str) -> Evaluator:
    """Production evaluator: decode, compile-check, extract the target
    space's features."""

    def evaluate(ids: Tuple[int, ...], terminated: bool):
        source = tok.decode(vocab, ids)
        if not terminated:
            return source, False, None
        try:
            ast = parse_kernel(source)
            check_kernel(ast)
        except (ParseError, SemanticError):
            return source, False, None
        return source, True, extract_all(ast)[space]

    return evaluate


class ModelPolicy:
    """Search policy backed by a trained model; directed states receive the
    target features on every fill."""

    def __init__(self, state: ModelState, temperature: Optional[float] = None,
                 max_hole_fraction: float = MAX_HOLE_FRACTION):
        self.sampler = ModelSampler(state, temperature)
        self.directed = state.config.directed
        self.max_hole_fraction = max_hole_fraction

    def fill_many(self, inputs, target, seed):
        return self.sampler.fill_many(
            inputs, target if self.directed else None, seed
        )

    def make_inputs(self, candidate_ids, n, rng):
        return place_random_holes(candidate_ids, n, rng, self.max_hole_fraction)


_INT_RE = re.compile(r"(?<![\w.])(\d+)(?![\w.])")


def mutate_one_literal(source: str, rng: np.random.Generator) -> str:
    """Perturb one integer literal by +/-1 (0 always steps up)."""
    matches = list(_INT_RE.finditer(source))
    if not matches:
        return source
    m = matches[int(rng.integers(len(matches)))]
    value = int(m.group(1))
    delta = 1 if value == 0 else int(rng.choice((-1, 1)))
    return source[:m.start()] + str(value + delta) + source[m.end():]


def literal_features(source: str, dim: int = 8, space: str = "SYNTAX8") -> FeatureVector:
    """Mock featurizer: the first `dim` integer literals as a vector."""
    values = [int(m.group(1)) for m in _INT_RE.finditer(source)][:dim]
    values += [0] * (dim - len(values))
    return FeatureVector(space, np.array(values, dtype=np.float64))


class LiteralMutationPolicy:
    """Deterministic mock policy: every fill rewrites the input kernel with
    exactly one integer literal perturbed by +/-1. Together with
    literal_evaluator this makes the search's behaviour enumerable."""

    def __init__(self, vocab: tok.Vocabulary):
        self.vocab = vocab

    def fill_many(self, inputs, target, seed):
        out = []
        for i, ids in enumerate(inputs):
            rng = np.random.default_rng((seed, i))
            text = tok.decode(self.vocab, ids)
            mutated = mutate_one_literal(text, rng)
            new_ids = (tok.START_ID, *tok.encode(self.vocab, mutated), tok.END_ID)
            out.append((new_ids, True))
        return out

    def make_inputs(self, candidate_ids, n, rng):
        return [tuple(candidate_ids)] * n


def literal_evaluator(vocab: tok.Vocabulary, dim: int = 8) -> Evaluator:
    def evaluate(ids: Tuple[int, ...], terminated: bool):
        source = tok.decode(vocab, ids)
        return source, terminated, literal_features(source, dim) if terminated else None

    return evaluate


def _variant_counts(total: int, parts: int) -> List[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def run_search(
    policy: InfillPolicy,
    evaluator: Evaluator,
    target: FeatureVector,
    cfg: BeamConfig,
    seed_ids: Sequence[int],
) -> SearchResult:
    """Search until a candidate hits distance 0 or max_depth generations.

    Every generation issues exactly workload_size policy fills, so total
    inferences equal generations_used * workload_size. The global best is
    tracked across generations; survivors themselves are never re-injected,
    only their hole-bearing variants.
    """
    rng = np.random.default_rng(cfg.seed)
    inputs: List[Tuple[int, ...]] = [tuple(seed_ids)] * cfg.workload_size
    parents: List[Optional[str]] = [None] * cfg.workload_size
    best: Optional[Candidate] = None
    trajectory: List[Candidate] = []
    best_by_generation: List[float] = []
    generations_used = 0
    for gen in range(cfg.max_depth):
        fills = policy.fill_many(inputs, target, seed=cfg.seed * 100003 + gen)
        generations_used = gen + 1
        compiling: List[Candidate] = []
        workload: List[Candidate] = []
        for (ids, terminated), parent in zip(fills, parents):
            source, ok, features = evaluator(ids, terminated)
            cand = Candidate(
                id=candidate_id(source),
                source=source,
                token_ids=tuple(ids),
                compiles=ok,
                features=features,
                distance=distance(features, target) if ok else None,
                generation=gen,
                parent_id=parent,
            )
            workload.append(cand)
            if ok:
                compiling.append(cand)
        trajectory.extend(compiling)
        for cand in compiling:
            if best is None or (cand.distance, cand.id) < (best.distance, best.id):
                best = cand
        if gen == 0 and not compiling:
            raise NoCompilingCandidate(workload)
        best_by_generation.append(best.distance if best is not None else math.inf)
        if best is not None and best.distance == 0.0:
            return SearchResult(best, trajectory, generations_used, True,
                                generations_used * cfg.workload_size, best_by_generation)
        if not compiling:
            break  # nothing to re-hole; the search cannot proceed
        survivors = select_topk(compiling, cfg.beam_width, cfg.replace_prob, rng)
        inputs = []
        parents = []
        for surv, count in zip(survivors, _variant_counts(cfg.workload_size, len(survivors))):
            inputs.extend(policy.make_inputs(surv.token_ids, count, rng))
            parents.extend([surv.id] * count)
    return SearchResult(best, trajectory, generations_used, False,
                        generations_used * cfg.workload_size, best_by_generation)
