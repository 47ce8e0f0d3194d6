"""Corpus ingestion and masked-instance generation.

Ingestion parses and checks every file, rewrites identifiers, dedups on a
canonical-renaming hash, and extracts all three feature vectors up front.
Training instances are produced on demand: one [HOLE] per instance, hiding
a uniform-random span capped at 90% of the kernel's token length.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import tokenizer as tok
from .features import SPACE_TAGS, FeatureVector, extract_all
from .kcl import ast as A
from .kcl import check_kernel, parse_kernel, render_source
from .kcl.checker import SemanticError
from .kcl.parser import ParseError

MAX_HOLE_FRACTION = 0.9


class KernelTooShort(ValueError):
    pass


@dataclass
class CorpusEntry:
    id: str
    source: str
    features: Dict[str, FeatureVector]
    token_ids: Optional[Tuple[int, ...]] = None


@dataclass
class Rejection:
    path: str
    stage: str  # parse | check | truncate
    reason: str


@dataclass
class MaskedInstance:
    input_ids: Tuple[int, ...]
    hole_index: int
    hidden_length: int
    target_id: int
    hidden_ids: Tuple[int, ...]
    features: FeatureVector
    space: str


def _fresh_names():
    """a, b, ..., z, aa, ab, ...; skips keywords and intrinsic names."""
    letters = "abcdefghijklmnopqrstuvwxyz"
    k = 1
    while True:
        def gen(prefix, depth):
            if depth == 0:
                yield prefix
                return
            for c in letters:
                yield from gen(prefix + c, depth - 1)
        for name in gen("", k):
            if name not in A.KEYWORDS and name not in A.BUILTINS:
                yield name
        k += 1


def _count_sites(ast: A.KernelAst) -> int:
    count = 1 + len(ast.params)  # kernel name + params

    def walk(stmt):
        nonlocal count
        if isinstance(stmt, A.Decl):
            count += 1
        elif isinstance(stmt, A.If):
            walk_block(stmt.then)
            if stmt.orelse is not None:
                walk_block(stmt.orelse)
        elif isinstance(stmt, A.For):
            walk(stmt.init)
            walk_block(stmt.body)
        elif isinstance(stmt, A.Block):
            walk_block(stmt)

    def walk_block(b):
        for s in b.stmts:
            walk(s)

    walk_block(ast.body)
    return count


def _rename(ast: A.KernelAst, names: List[str]) -> A.KernelAst:
    """Apply fresh names to declaration sites in walk order, rewriting uses
    scope-correctly (shadowed names stay distinct)."""
    it = iter(names)
    scopes: List[Dict[str, str]] = [{}]

    def lookup(name: str) -> str:
        for frame in reversed(scopes):
            if name in frame:
                return frame[name]
        return name

    def declare(name: str) -> str:
        new = next(it)
        scopes[-1][name] = new
        return new

    def expr(e):
        if isinstance(e, A.Name):
            return A.Name(lookup(e.ident))
        if isinstance(e, A.Index):
            return A.Index(lookup(e.base), expr(e.index))
        if isinstance(e, A.Unary):
            return A.Unary(e.op, expr(e.operand))
        if isinstance(e, A.Binary):
            return A.Binary(e.op, expr(e.left), expr(e.right))
        return e

    def stmt(s):
        if isinstance(s, A.Decl):
            init = expr(s.init)
            return A.Decl(s.ty, declare(s.name), init)
        if isinstance(s, A.Assign):
            value = expr(s.value)
            idx = expr(s.target.index) if s.target.index is not None else None
            return A.Assign(A.LValue(lookup(s.target.name), idx), value)
        if isinstance(s, A.If):
            return A.If(expr(s.cond), block(s.then),
                        block(s.orelse) if s.orelse is not None else None)
        if isinstance(s, A.For):
            scopes.append({})
            init = stmt(s.init)
            cond = expr(s.cond)
            step = stmt(s.step)
            body = block(s.body)
            scopes.pop()
            return A.For(init, cond, step, body)
        if isinstance(s, A.AtomicAdd):
            idx = expr(s.target.index) if s.target.index is not None else None
            return A.AtomicAdd(A.AddrOf(lookup(s.target.base), idx), expr(s.value))
        if isinstance(s, A.ExprStmt):
            return A.ExprStmt(expr(s.expr))
        if isinstance(s, A.Block):
            return block(s)
        return s

    def block(b: A.Block) -> A.Block:
        scopes.append({})
        out = tuple(stmt(s) for s in b.stmts)
        scopes.pop()
        return A.Block(out)

    kernel_name = declare(ast.name)
    params = tuple(
        A.Param(p.qualifier, p.base, p.is_pointer, declare(p.name)) for p in ast.params
    )
    return A.KernelAst(kernel_name, params, block(ast.body))


def rewrite_identifiers(ast: A.KernelAst, rng: np.random.Generator) -> A.KernelAst:
    """Rename the kernel, params and locals to fresh alphabetical names in a
    random order. Semantics-preserving and feature-invariant."""
    n = _count_sites(ast)
    gen = _fresh_names()
    pool = [next(gen) for _ in range(n)]
    order = rng.permutation(n)
    return _rename(ast, [pool[i] for i in order])


def canonical_rewrite(ast: A.KernelAst) -> A.KernelAst:
    """Deterministic renaming in declaration order; the dedup key."""
    n = _count_sites(ast)
    gen = _fresh_names()
    return _rename(ast, [next(gen) for _ in range(n)])


def entry_id(ast: A.KernelAst) -> str:
    canon = render_source(canonical_rewrite(ast))
    return hashlib.sha256(tok.normalize_ws(canon).encode()).hexdigest()[:16]


def ingest_dir(path, rng: np.random.Generator) -> Tuple[List[CorpusEntry], List[Rejection]]:
    """One entry per compiling kernel file under `path`, deduplicated by the
    canonical-renaming hash; per-file failures are reported, not raised."""
    files = sorted(
        os.path.join(path, f) for f in os.listdir(path)
        if os.path.isfile(os.path.join(path, f))
    )
    entries: Dict[str, CorpusEntry] = {}
    rejections: List[Rejection] = []
    for fp in files:
        with open(fp, encoding="utf-8", errors="replace") as fh:
            text = fh.read()
        try:
            ast = parse_kernel(text)
        except ParseError as e:
            rejections.append(Rejection(fp, "parse", str(e)))
            continue
        try:
            check_kernel(ast)
        except SemanticError as e:
            rejections.append(Rejection(fp, "check", str(e)))
            continue
        eid = entry_id(ast)
        if eid in entries:
            continue
        rewritten = rewrite_identifiers(ast, rng)
        entries[eid] = CorpusEntry(
            id=eid,
            source=render_source(rewritten),
            features=extract_all(rewritten),
        )
    return [entries[k] for k in sorted(entries)], rejections


def entries_from_sources(sources: Sequence[str], rng: np.random.Generator) -> List[CorpusEntry]:
    """Same pipeline as ingest_dir for in-memory kernel texts (all must compile)."""
    entries: Dict[str, CorpusEntry] = {}
    for text in sources:
        ast = parse_kernel(text)
        check_kernel(ast)
        eid = entry_id(ast)
        if eid in entries:
            continue
        rewritten = rewrite_identifiers(ast, rng)
        entries[eid] = CorpusEntry(
            id=eid, source=render_source(rewritten), features=extract_all(rewritten)
        )
    return [entries[k] for k in sorted(entries)]


def attach_tokens(
    entries: Sequence[CorpusEntry], vocab: tok.Vocabulary, max_seq_len: int
) -> Tuple[List[CorpusEntry], List[Rejection]]:
    """Pad every entry's token ids to exactly max_seq_len. Longer kernels are
    truncated at a token boundary and re-checked; non-compiling truncations
    are dropped with a report."""
    out: List[CorpusEntry] = []
    rejections: List[Rejection] = []
    seen = set()
    room = max_seq_len - 2
    for entry in entries:
        ids = tok.encode(vocab, entry.source)
        ok = True
        # canonical re-rendering can change length, so truncation may iterate
        for _ in range(5):
            if len(ids) <= room:
                break
            text = tok.decode(vocab, ids[:room])
            try:
                ast = parse_kernel(text)
                check_kernel(ast)
            except (ParseError, SemanticError) as e:
                rejections.append(Rejection(entry.id, "truncate", str(e)))
                ok = False
                break
            entry = CorpusEntry(
                id=entry_id(ast), source=render_source(ast), features=extract_all(ast)
            )
            ids = tok.encode(vocab, entry.source)
        if not ok or len(ids) > room:
            if ok:
                rejections.append(Rejection(entry.id, "truncate", "did not converge"))
            continue
        if entry.id in seen:
            continue
        seen.add(entry.id)
        padded = (
            [tok.START_ID] + ids + [tok.END_ID]
            + [tok.PAD_ID] * (max_seq_len - 2 - len(ids))
        )
        out.append(replace(entry, token_ids=tuple(padded)))
    return out, rejections


def content_length(token_ids: Sequence[int]) -> int:
    """Number of content tokens between [START] and [END]."""
    try:
        end = token_ids.index(tok.END_ID)
    except ValueError:
        raise ValueError("sequence has no [END] token")
    return end - 1


def place_hole(
    token_ids: Sequence[int],
    rng: np.random.Generator,
    max_hole_fraction: float = MAX_HOLE_FRACTION,
    pad_to: Optional[int] = None,
    tail: bool = False,
) -> Tuple[Tuple[int, ...], int, Tuple[int, ...]]:
    """Core hole placement: pick a uniform content index and a uniform hidden
    length within the fraction cap; the hole never covers meta tokens.

    With tail=True the hole runs exactly to the last content token (a
    completion-style instance), still respecting the fraction cap.
    Returns (ids_with_hole, hole_index, hidden_ids). When pad_to is given the
    result is padded/kept at exactly that length.
    """
    ids = list(token_ids)
    n_content = content_length(ids)
    if n_content < 1:
        raise KernelTooShort("kernel has no maskable token")
    bound = math.floor(max_hole_fraction * n_content)
    if tail and bound >= 1:
        hole_index = int(rng.integers(max(1, n_content - bound + 1), n_content + 1))
        hidden_length = n_content - hole_index + 1
    else:
        hole_index = int(rng.integers(1, n_content + 1))
        max_here = min(bound, n_content - hole_index + 1)
        lo = 0
        if pad_to is not None and len(ids) == pad_to and ids[-1] != tok.PAD_ID:
            lo = 1  # no room to grow by a zero-length hole
            max_here = max(max_here, 1)
        hidden_length = int(rng.integers(lo, max_here + 1))
    hidden = tuple(ids[hole_index:hole_index + hidden_length])
    holed = ids[:hole_index] + [tok.HOLE_ID] + ids[hole_index + hidden_length:]
    if pad_to is not None:
        holed = holed[:pad_to] if len(holed) > pad_to else holed + [tok.PAD_ID] * (pad_to - len(holed))
    return tuple(holed), hole_index, hidden


def make_masked_instance(
    entry: CorpusEntry,
    rng: np.random.Generator,
    space_choice: Optional[str] = None,
    max_hole_fraction: float = MAX_HOLE_FRACTION,
    tail_prob: float = 0.0,
) -> MaskedInstance:
    """Draw one training instance from an entry: one [HOLE], the first hidden
    token as target ([ENDHOLE] for empty holes), pre-masking features.

    tail_prob mixes in completion-style holes that run to the kernel's end,
    matching the generation-time shape of a fixed input feed."""
    if entry.token_ids is None:
        raise ValueError("entry has no token ids; run attach_tokens first")
    space = space_choice or SPACE_TAGS[int(rng.integers(len(SPACE_TAGS)))]
    tail = tail_prob > 0.0 and rng.random() < tail_prob
    holed, hole_index, hidden = place_hole(
        entry.token_ids, rng, max_hole_fraction, pad_to=len(entry.token_ids), tail=tail
    )
    target = hidden[0] if hidden else tok.ENDHOLE_ID
    return MaskedInstance(
        input_ids=holed,
        hole_index=hole_index,
        hidden_length=len(hidden),
        target_id=target,
        hidden_ids=hidden,
        features=entry.features[space],
        space=space,
    )


def reconstruct(instance: MaskedInstance, pad_to: Optional[int] = None) -> Tuple[int, ...]:
    """Re-insert the hidden tokens at the hole; inverse of place_hole."""
    ids = list(instance.input_ids)
    h = instance.hole_index
    if ids[h] != tok.HOLE_ID:
        raise ValueError("hole_index does not point at [HOLE]")
    full = ids[:h] + list(instance.hidden_ids) + ids[h + 1:]
    if pad_to is not None:
        full = full[:pad_to] if len(full) > pad_to else full + [tok.PAD_ID] * (pad_to - len(full))
    return tuple(full)
