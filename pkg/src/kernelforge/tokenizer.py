"""Corpus-derived vocabulary and lossless encode/decode for KCL text.

Keywords, intrinsics and frequent identifiers tokenize as whole words;
everything else (literals included) falls back to single characters.
Whitespace is normalised to single spaces before encoding, so the space
character is itself part of the alphabet and decode is plain
concatenation. Five meta tokens occupy ids 0-4.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

from .kcl import ast as A

META_TOKENS = ("[START]", "[END]", "[PAD]", "[HOLE]", "[ENDHOLE]")
START_ID, END_ID, PAD_ID, HOLE_ID, ENDHOLE_ID = range(5)

# every character a rendered, checked kernel can contain
ALPHABET = tuple(sorted(
    set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789")
    | set("_(){}[];,&=<>+-*/%!. ")
))

_WORD_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_WS_RE = re.compile(r"\s+")


class EmptyCorpus(ValueError):
    pass


class UnknownByte(ValueError):
    pass


class BadId(ValueError):
    pass


def normalize_ws(text: str) -> str:
    """Collapse all whitespace runs to single spaces and strip the ends."""
    return _WS_RE.sub(" ", text).strip()


@dataclass
class Vocabulary:
    id_to_token: Tuple[str, ...]
    token_to_id: Dict[str, int]

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    @property
    def meta_ids(self) -> Tuple[int, ...]:
        return (START_ID, END_ID, PAD_ID, HOLE_ID, ENDHOLE_ID)

    def __post_init__(self):
        self._max_len = max(len(t) for t in self.id_to_token[5:])
        self._matchable = {
            t: i for t, i in self.token_to_id.items() if i >= 5
        }


def build_vocab(corpus: Sequence[str], word_freq_threshold: int = 10) -> Vocabulary:
    """Derive the vocabulary from compiling kernel texts.

    Keywords and intrinsic names are always whole tokens; other identifiers
    join them once they occur at least `word_freq_threshold` times.
    """
    if not corpus:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    freq: Dict[str, int] = {}
    reserved = A.KEYWORDS | A.BUILTINS
    for text in corpus:
        for word in _WORD_RE.findall(text):
            if word not in reserved:
                freq[word] = freq.get(word, 0) + 1
    frequent = sorted(
        w for w, n in freq.items() if n >= word_freq_threshold and len(w) > 1
    )
    tokens = list(META_TOKENS)
    tokens += sorted(A.KEYWORDS)
    tokens += sorted(A.BUILTINS)
    tokens += list(ALPHABET)
    tokens += frequent
    token_to_id = {t: i for i, t in enumerate(tokens)}
    return Vocabulary(tuple(tokens), token_to_id)


def encode(vocab: Vocabulary, text: str) -> List[int]:
    """Greedy longest-match encoding of normalised text. Meta token strings
    never match source text."""
    normalized = normalize_ws(text)
    ids: List[int] = []
    i = 0
    n = len(normalized)
    while i < n:
        match_id = None
        for length in range(min(vocab._max_len, n - i), 0, -1):
            candidate = normalized[i:i + length]
            found = vocab._matchable.get(candidate)
            if found is not None:
                match_id = found
                i += length
                break
        if match_id is None:
            raise UnknownByte(f"no token for {normalized[i]!r} at offset {i}")
        ids.append(match_id)
    return ids


def decode(vocab: Vocabulary, ids: Iterable[int]) -> str:
    """Inverse of encode; meta tokens render to nothing."""
    parts = []
    for i in ids:
        if not 0 <= i < vocab.size:
            raise BadId(f"id {i} out of range (vocab size {vocab.size})")
        if i >= 5:
            parts.append(vocab.id_to_token[i])
    return "".join(parts)


def save_vocab(vocab: Vocabulary, path) -> None:
    """Persist as `id<TAB>token` rows, meta tokens first."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, tok in enumerate(vocab.id_to_token):
            fh.write(f"{i}\t{tok}\n")


def load_vocab(path) -> Vocabulary:
    tokens: List[str] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            idx, tok = line.split("\t", 1)
            if int(idx) != len(tokens):
                raise ValueError(f"non-contiguous vocab ids at {idx}")
            tokens.append(tok)
    if tuple(tokens[:5]) != META_TOKENS:
        raise ValueError("vocabulary file does not start with the meta tokens")
    return Vocabulary(tuple(tokens), {t: i for i, t in enumerate(tokens)})
