"""Seeded random KCL kernel generator.

Bootstraps desk-scale corpora for training and experiments: short kernels
(roughly 30-110 tokens) spread over the SYNTAX8 dimensions - arithmetic
chains, guards, loops, atomics, local-memory staging and float traffic.
Every emitted kernel compiles by construction.
"""

from __future__ import annotations

from typing import List

import numpy as np

from .corpus import entry_id
from .kcl import check_kernel, parse_kernel

_INT_OPS = ("+", "-", "*")
_CMP_OPS = ("<", ">", "<=", "!=")


def _int_expr(rng, names, depth=0):
    r = rng.random()
    if depth >= 2 or r < 0.35:
        return str(int(rng.integers(1, 9)))
    if r < 0.7 and names:
        return names[int(rng.integers(len(names)))]
    op = _INT_OPS[int(rng.integers(len(_INT_OPS)))]
    return f"{_int_expr(rng, names, depth + 1)} {op} {_int_expr(rng, names, depth + 1)}"


def _micro_kernel(rng: np.random.Generator) -> str:
    """Tight template family: low conditional entropy per token, so small
    models reach usable compile rates within desk-scale training budgets."""
    has_b = rng.random() < 0.5
    has_s = rng.random() < 0.2
    params = ["global int* a"]
    if has_b:
        params.append("global int* b")
    if has_s:
        params.append("local int* s")
    params.append("int n")
    body = ["int i = get_global_id(0);"]
    if has_s:
        body.append("int j = get_local_id(0);")

    def term():
        r = rng.random()
        if r < 0.4:
            return str(int(rng.integers(1, 9)))
        if r < 0.6 and has_b:
            return "b[i]"
        if r < 0.75:
            return f"a[i + {int(rng.integers(1, 4))}]"
        return "n" if r < 0.9 else "i"

    ops = ("+", "-", "*")
    for _ in range(int(rng.integers(1, 4))):
        r = rng.random()
        if r < 0.35:
            body.append(f"a[i] = a[i] {ops[int(rng.integers(3))]} {term()};")
        elif r < 0.55 and has_b:
            body.append(f"a[i] = b[i] {ops[int(rng.integers(3))]} {term()};")
        elif r < 0.7:
            body.append(f"if (i < n) {{ a[i] = {term()}; }}")
        elif r < 0.85:
            body.append(f"atomic_add(&a[i], {int(rng.integers(1, 9))});")
        elif has_s:
            body.append("s[j] = a[i]; barrier(); a[i] = s[j];")
        else:
            body.append(f"a[i] = a[i] + {int(rng.integers(1, 9))};")
    src = f"kernel void fn({', '.join(params)}) {{ {' '.join(body)} }}"
    check_kernel(parse_kernel(src))
    return src


def generate_kernel(rng: np.random.Generator, profile: str = "full") -> str:
    """One compiling kernel; the "short" profile trims parameter count and
    statement budget, and "micro" uses the tight template family."""
    if profile == "micro":
        return _micro_kernel(rng)
    short = profile == "short"
    has_b = rng.random() < (0.45 if short else 0.6)
    has_c = (not short) and rng.random() < 0.35
    has_s = rng.random() < (0.15 if short else 0.25)
    params = ["global int* a"]
    if has_b:
        params.append("global int* b")
    if has_c:
        params.append("global float* c")
    if has_s:
        params.append("local int* s")
    params.append("int n")

    body: List[str] = ["int i = get_global_id(0);"]
    idx_names = ["i"]
    if has_s:
        body.append("int j = get_local_id(0);")
        idx_names.append("j")

    arrays = ["a"] + (["b"] if has_b else [])

    def load(coalesced=True):
        arr = arrays[int(rng.integers(len(arrays)))]
        if coalesced:
            if rng.random() < 0.3:
                return f"{arr}[i + {int(rng.integers(1, 4))}]"
            return f"{arr}[i]"
        return f"{arr}[{_int_expr(rng, ['i', 'n'])}]"

    def rhs():
        terms = [load(rng.random() < 0.75)]
        for _ in range(int(rng.integers(0, 3))):
            op = _INT_OPS[int(rng.integers(len(_INT_OPS)))]
            term = load() if rng.random() < 0.5 else _int_expr(rng, ["i", "n"])
            terms.append(f"{op} {term}")
        return " ".join(terms)

    n_stmts = int(rng.integers(1, 3 if short else 5))
    n_accs = 0
    for _ in range(n_stmts):
        kind = rng.random()
        if kind < 0.42:
            body.append(f"a[i] = {rhs()};")
        elif kind < 0.58:
            cmp = _CMP_OPS[int(rng.integers(len(_CMP_OPS)))]
            body.append(f"if (i {cmp} n) {{ a[i] = {rhs()}; }}")
        elif kind < 0.74:
            if short:
                body.append(f"a[i] = a[i] {_INT_OPS[int(rng.integers(3))]} {rhs()};")
                continue
            acc = f"acc{n_accs}"
            n_accs += 1
            body.append(
                f"int {acc} = 0; "
                f"for (int k = 0; k < n; k = k + 1) {{ {acc} = {acc} + a[k]; }} "
                f"a[i] = {acc};"
            )
        elif kind < 0.84:
            body.append(f"atomic_add(&a[i], {int(rng.integers(1, 5))});")
        elif kind < 0.92 and has_c:
            lit = f"{rng.integers(1, 9)}.{rng.integers(0, 10)}"
            body.append(f"c[i] = c[i] * {lit};")
        elif has_s:
            body.append("s[j] = a[i]; barrier(); a[i] = s[j];")
        else:
            body.append(f"a[i] = a[i] + {int(rng.integers(1, 9))};")

    src = f"kernel void fn({', '.join(params)}) {{ {' '.join(body)} }}"
    check_kernel(parse_kernel(src))
    return src


def generate_corpus(
    n: int, seed: int, max_chars: int | None = None, profile: str = "full"
) -> List[str]:
    """n structurally distinct compiling kernels (distinct canonical ids),
    optionally capped at max_chars of normalised source."""
    rng = np.random.default_rng(seed)
    seen = set()
    out: List[str] = []
    attempts = 0
    while len(out) < n:
        attempts += 1
        if attempts > 200 * n:
            raise RuntimeError("kernel generator stalled; widen the template space")
        src = generate_kernel(rng, profile)
        if max_chars is not None and len(src) > max_chars:
            continue
        eid = entry_id(parse_kernel(src))
        if eid not in seen:
            seen.add(eid)
        else:
            continue
        out.append(src)
    return out
