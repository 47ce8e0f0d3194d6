"""The three program feature spaces, distances, proximity and PCA export.

SYNTAX8 counts syntax-level traits off the AST; IRCOUNT and IRPHASE count
instruction mix and shape off the DCE'd mini-IR. All extractors are pure
and invariant under identifier renaming.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .kcl import ast as A
from .kcl.ir import Arg, Const, IrFunction, INSTR_KINDS, Temp


class SpaceMismatch(ValueError):
    pass


class ZeroTarget(ValueError):
    pass


class DegenerateData(ValueError):
    pass


@dataclass(frozen=True)
class FeatureSpace:
    tag: str
    dim: int
    segment_offset: int
    names: Tuple[str, ...]


SYNTAX8_NAMES = (
    "computational", "relational", "atomic", "mem_access",
    "local_mem", "coalesced", "comp_to_mem_ratio", "coalesced_to_mem_ratio",
)
IRCOUNT_NAMES = tuple(INSTR_KINDS) + ("total_instructions", "total_blocks", "total_functions")
IRPHASE_NAMES = (
    "phi_count", "phi_incoming_args", "mem_instr", "branches", "blocks",
    "blocks_with_1_succ", "blocks_with_2_succ", "binary_ops", "cmp_count",
    "const_operands", "total_instructions", "max_block_len",
)

SYNTAX8 = FeatureSpace("SYNTAX8", 8, 0, SYNTAX8_NAMES)
IRCOUNT = FeatureSpace("IRCOUNT", 19, 8, IRCOUNT_NAMES)
IRPHASE = FeatureSpace("IRPHASE", 12, 27, IRPHASE_NAMES)

SPACES: Dict[str, FeatureSpace] = {s.tag: s for s in (SYNTAX8, IRCOUNT, IRPHASE)}
SPACE_TAGS = tuple(SPACES)
SEGMENT_WIDTH = sum(s.dim for s in SPACES.values())
assert SEGMENT_WIDTH == 39


@dataclass
class FeatureVector:
    space: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        expected = SPACES[self.space].dim
        if self.values.shape != (expected,):
            raise SpaceMismatch(
                f"{self.space} expects {expected} dims, got {self.values.shape}"
            )

    def to_list(self) -> List[float]:
        return [float(v) for v in self.values]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, FeatureVector)
            and self.space == other.space
            and np.array_equal(self.values, other.values)
        )


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


class _GidIndexClassifier:
    """Decides whether an index expression is a coalesced access pattern:
    get_global_id(d), or get_global_id(d) +/- an integer literal, possibly
    through a local variable whose only definition has that shape."""

    def __init__(self, ast: A.KernelAst):
        self.gid_vars = _collect_gid_vars(ast)

    def is_coalesced(self, e: A.Expr) -> bool:
        if self._is_gid_form(e):
            return True
        return isinstance(e, A.Name) and e.ident in self.gid_vars

    def _is_gid_form(self, e: A.Expr) -> bool:
        if isinstance(e, A.BuiltinCall) and e.name == "get_global_id":
            return True
        if isinstance(e, A.Binary) and e.op in ("+", "-"):
            l_gid = self._is_base_gid(e.left)
            r_gid = self._is_base_gid(e.right)
            l_const = isinstance(e.left, A.IntLit)
            r_const = isinstance(e.right, A.IntLit)
            return (l_gid and r_const) or (l_const and r_gid and e.op == "+")
        return False

    def _is_base_gid(self, e: A.Expr) -> bool:
        if isinstance(e, A.BuiltinCall) and e.name == "get_global_id":
            return True
        return isinstance(e, A.Name) and e.ident in self.gid_vars


def _collect_gid_vars(ast: A.KernelAst) -> set:
    """Names whose every binding (declaration or assignment) is exactly
    get_global_id(d); shadowing or reassignment to anything else disqualifies
    the name outright, keeping the rule conservative and flow-free."""
    bindings: Dict[str, List[A.Expr]] = {}

    def note(name: str, expr: A.Expr):
        bindings.setdefault(name, []).append(expr)

    def walk(stmt):
        if isinstance(stmt, A.Decl):
            note(stmt.name, stmt.init)
        elif isinstance(stmt, A.Assign) and stmt.target.index is None:
            note(stmt.target.name, stmt.value)
        elif isinstance(stmt, A.If):
            walk_block(stmt.then)
            if stmt.orelse is not None:
                walk_block(stmt.orelse)
        elif isinstance(stmt, A.For):
            walk(stmt.init)
            walk(stmt.step)
            walk_block(stmt.body)
        elif isinstance(stmt, A.Block):
            walk_block(stmt)

    def walk_block(b: A.Block):
        for s in b.stmts:
            walk(s)

    walk_block(ast.body)
    gid = set()
    for name, exprs in bindings.items():
        if len(exprs) == 1 and isinstance(exprs[0], A.BuiltinCall) and exprs[0].name == "get_global_id":
            gid.add(name)
    return gid


def extract_syntax8(ast: A.KernelAst) -> FeatureVector:
    """Syntax-level counts: computational / relational / atomic ops, memory
    accesses (with local-memory and coalesced breakdowns) and the two ratios."""
    pointer_quals = {p.name: p.qualifier for p in ast.params if p.is_pointer}
    cls = _GidIndexClassifier(ast)
    counts = {
        "computational": 0, "relational": 0, "atomic": 0,
        "mem_access": 0, "local_mem": 0, "coalesced": 0,
    }

    def access(base: str, index: A.Expr):
        counts["mem_access"] += 1
        if pointer_quals.get(base) == "local":
            counts["local_mem"] += 1
        if cls.is_coalesced(index):
            counts["coalesced"] += 1

    def expr(e: A.Expr):
        if isinstance(e, A.Binary):
            if e.op in A.ARITH_OPS:
                counts["computational"] += 1
            else:
                counts["relational"] += 1
            expr(e.left)
            expr(e.right)
        elif isinstance(e, A.Unary):
            counts["computational"] += 1
            expr(e.operand)
        elif isinstance(e, A.Index):
            access(e.base, e.index)
            expr(e.index)

    def stmt(s):
        if isinstance(s, A.Decl):
            expr(s.init)
        elif isinstance(s, A.Assign):
            expr(s.value)
            if s.target.index is not None:
                access(s.target.name, s.target.index)
                expr(s.target.index)
        elif isinstance(s, A.If):
            expr(s.cond)
            block(s.then)
            if s.orelse is not None:
                block(s.orelse)
        elif isinstance(s, A.For):
            stmt(s.init)
            expr(s.cond)
            stmt(s.step)
            block(s.body)
        elif isinstance(s, A.AtomicAdd):
            # the element address is an operand of the atomic, not a separate access
            counts["atomic"] += 1
            if s.target.index is not None:
                expr(s.target.index)
            expr(s.value)
        elif isinstance(s, A.ExprStmt):
            expr(s.expr)
        elif isinstance(s, A.Block):
            block(s)

    def block(b: A.Block):
        for s in b.stmts:
            stmt(s)

    block(ast.body)
    values = [
        counts["computational"], counts["relational"], counts["atomic"],
        counts["mem_access"], counts["local_mem"], counts["coalesced"],
        _ratio(counts["computational"], counts["mem_access"]),
        _ratio(counts["coalesced"], counts["mem_access"]),
    ]
    return FeatureVector("SYNTAX8", np.array(values, dtype=np.float64))


def extract_ircount(ir_after_dce: IrFunction) -> FeatureVector:
    """Per-kind instruction counts plus totals; expects DCE'd IR."""
    counts = {k: 0 for k in INSTR_KINDS}
    for ins in ir_after_dce.instructions():
        counts[ins.kind] += 1
    total = ir_after_dce.num_instructions()
    values = [counts[k] for k in INSTR_KINDS] + [total, len(ir_after_dce.blocks), 1]
    return FeatureVector("IRCOUNT", np.array(values, dtype=np.float64))


def extract_irphase(ir_after_dce: IrFunction) -> FeatureVector:
    """Shape-oriented IR counts (phi pressure, branchiness, constants)."""
    phi_count = 0
    phi_args = 0
    mem = 0
    branches = 0
    binary_ops = 0
    cmp_count = 0
    const_ops = 0
    one_succ = 0
    two_succ = 0
    max_len = 0
    for b in ir_after_dce.blocks:
        max_len = max(max_len, len(b.instrs))
        n_succ = len(b.successors())
        if n_succ == 1:
            one_succ += 1
        elif n_succ == 2:
            two_succ += 1
        for ins in b.instrs:
            if ins.kind == "phi":
                phi_count += 1
                phi_args += len(ins.incomings)
            elif ins.kind in ("load", "store"):
                mem += 1
            elif ins.kind in ("br", "condbr"):
                branches += 1
            elif ins.kind in ("add", "sub", "mul", "div", "rem"):
                binary_ops += 1
            elif ins.kind == "cmp":
                cmp_count += 1
            for v in ins.value_operands():
                if isinstance(v, Const):
                    const_ops += 1
    values = [
        phi_count, phi_args, mem, branches, len(ir_after_dce.blocks),
        one_succ, two_succ, binary_ops, cmp_count, const_ops,
        ir_after_dce.num_instructions(), max_len,
    ]
    return FeatureVector("IRPHASE", np.array(values, dtype=np.float64))


def extract_all(ast: A.KernelAst) -> Dict[str, FeatureVector]:
    """All three spaces for a checked kernel (lowers and DCEs once)."""
    from .kcl import lower_to_ir, run_dce

    ir = run_dce(lower_to_ir(ast))
    return {
        "SYNTAX8": extract_syntax8(ast),
        "IRCOUNT": extract_ircount(ir),
        "IRPHASE": extract_irphase(ir),
    }


def distance(a: FeatureVector, b: FeatureVector) -> float:
    """Euclidean distance between two vectors of the same space."""
    if a.space != b.space:
        raise SpaceMismatch(f"{a.space} vs {b.space}")
    return float(np.linalg.norm(a.values - b.values))


def relative_proximity(candidate: FeatureVector, target: FeatureVector) -> float:
    """1 - distance(candidate, target) / ||target||, clamped to [0, 1].

    1.0 is an exact feature match; 0.0 means no closer than an empty kernel.
    """
    norm = float(np.linalg.norm(target.values))
    if norm == 0.0:
        raise ZeroTarget("relative proximity is undefined for a zero target")
    return float(np.clip(1.0 - distance(candidate, target) / norm, 0.0, 1.0))


def pca2_project(vectors: List[FeatureVector]) -> List[Tuple[float, float]]:
    """Mean-centred projection onto the top-2 covariance eigenvectors,
    with each component's first nonzero loading made positive."""
    if len(vectors) < 2:
        raise DegenerateData("need at least 2 vectors")
    space = vectors[0].space
    for v in vectors[1:]:
        if v.space != space:
            raise SpaceMismatch(f"{v.space} vs {space}")
    data = np.stack([v.values for v in vectors])
    centered = data - data.mean(axis=0)
    cov = centered.T @ centered / (len(vectors) - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    if eigvals[0] <= 1e-12:
        raise DegenerateData("covariance has rank 0")
    basis = eigvecs[:, :2]
    for j in range(2):
        col = basis[:, j]
        nonzero = np.nonzero(np.abs(col) > 1e-12)[0]
        if len(nonzero) and col[nonzero[0]] < 0:
            basis[:, j] = -col
    proj = centered @ basis
    return [(float(x), float(y)) for x, y in proj]


def feature_bounds(vector_lists: Dict[str, List[FeatureVector]]) -> Dict[str, np.ndarray]:
    """Per-dimension maxima per space, used for encoder normalisation and
    as the active-learning query box."""
    out = {}
    for tag, vecs in vector_lists.items():
        if vecs:
            out[tag] = np.max(np.stack([v.values for v in vecs]), axis=0)
        else:
            out[tag] = np.zeros(SPACES[tag].dim)
    return out


def segmented_norms(feature_dicts: List[Dict[str, "FeatureVector"]]) -> np.ndarray:
    """Per-position corpus maxima over the full 39-wide segmented layout."""
    norms = np.zeros(SEGMENT_WIDTH, dtype=np.float64)
    for fd in feature_dicts:
        for tag, fv in fd.items():
            sl = segment_slice(tag)
            norms[sl] = np.maximum(norms[sl], fv.values)
    return norms


def segment_slice(tag: str) -> slice:
    s = SPACES[tag]
    return slice(s.segment_offset, s.segment_offset + s.dim)


def to_segmented(fv: FeatureVector) -> Tuple[np.ndarray, np.ndarray]:
    """Place one space's vector in the 39-wide segmented layout; returns
    (values, active mask) with all other segments zeroed/padded."""
    values = np.zeros(SEGMENT_WIDTH, dtype=np.float64)
    mask = np.zeros(SEGMENT_WIDTH, dtype=bool)
    sl = segment_slice(fv.space)
    values[sl] = fv.values
    mask[sl] = True
    return values, mask
