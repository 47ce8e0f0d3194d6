"""Dead code elimination on the mini-IR.

Removes pure instructions with unused results and unreachable blocks,
to a fixed point. Stores, calls and terminators are never removed.
"""

from __future__ import annotations

from typing import Dict, List

from .ir import BasicBlock, Instr, IrFunction, PURE_KINDS, Temp, Value


def _copy_fn(fn: IrFunction) -> IrFunction:
    blocks = [
        BasicBlock(b.label, [
            Instr(i.kind, dest=i.dest, ops=i.ops, pred=i.pred, callee=i.callee,
                  targets=i.targets, incomings=i.incomings, ty=i.ty)
            for i in b.instrs
        ])
        for b in fn.blocks
    ]
    return IrFunction(fn.name, fn.params, blocks)


def _reachable(fn: IrFunction) -> List[BasicBlock]:
    by_label = fn.block_map()
    seen = {fn.blocks[0].label}
    work = [fn.blocks[0].label]
    while work:
        for succ in by_label[work.pop()].successors():
            if succ not in seen:
                seen.add(succ)
                work.append(succ)
    return [b for b in fn.blocks if b.label in seen]


def _replace_uses(blocks: List[BasicBlock], old: Temp, new: Value):
    def sub(v: Value) -> Value:
        return new if v == old else v

    for b in blocks:
        for ins in b.instrs:
            if ins.ops:
                ins.ops = tuple(sub(v) for v in ins.ops)
            if ins.incomings:
                ins.incomings = tuple((lbl, sub(v)) for lbl, v in ins.incomings)


def _prune_phis(fn: IrFunction):
    """Drop phi incomings from removed predecessors; fold single-incoming
    phis into plain value forwarding."""
    preds = fn.predecessors()
    for b in fn.blocks:
        folded = []
        for ins in list(b.instrs):
            if ins.kind != "phi":
                continue
            kept = tuple((lbl, v) for lbl, v in ins.incomings if lbl in preds[b.label])
            ins.incomings = kept
            if len(kept) == 1:
                folded.append((ins, kept[0][1]))
        for ins, val in folded:
            b.instrs.remove(ins)
            _replace_uses(fn.blocks, ins.dest, val)


def run_dce(fn: IrFunction) -> IrFunction:
    """Dead code elimination; pure and idempotent."""
    out = _copy_fn(fn)
    out.blocks = _reachable(out)
    _prune_phis(out)
    changed = True
    while changed:
        changed = False
        used = set()
        for ins in out.instructions():
            for v in ins.value_operands():
                if isinstance(v, Temp):
                    used.add(v.name)
        for b in out.blocks:
            kept = [
                ins for ins in b.instrs
                if ins.kind not in PURE_KINDS
                or ins.dest is None
                or ins.dest.name in used
            ]
            if len(kept) != len(b.instrs):
                b.instrs = kept
                changed = True
    return out
