"""Mini three-address IR: 16 instruction kinds, basic blocks, SSA form.

The textual rendering (`ir_to_text`) is the golden-file format used under
tests/golden/ir/: one instruction per line, `label:` lines for blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

INSTR_KINDS = (
    "add", "sub", "mul", "div", "rem", "cmp", "load", "store", "alloca",
    "br", "condbr", "phi", "call", "ret", "cast", "gep",
)
TERMINATORS = ("br", "condbr", "ret")
PURE_KINDS = frozenset(
    ["add", "sub", "mul", "div", "rem", "cmp", "load", "alloca", "phi", "cast", "gep"]
)
CMP_PREDS = ("lt", "gt", "le", "ge", "eq", "ne")


@dataclass(frozen=True)
class Temp:
    name: str


@dataclass(frozen=True)
class Arg:
    name: str


@dataclass(frozen=True)
class Const:
    value: Union[int, float, bool]
    ty: str


Value = Union[Temp, Arg, Const]


@dataclass
class Instr:
    kind: str
    dest: Optional[Temp] = None
    ops: Tuple[Value, ...] = ()
    pred: Optional[str] = None                      # cmp predicate
    callee: Optional[str] = None                    # call target name
    targets: Tuple[str, ...] = ()                   # br/condbr labels
    incomings: Tuple[Tuple[str, Value], ...] = ()   # phi (pred label, value)
    ty: Optional[str] = None                        # cast target type

    def value_operands(self) -> Tuple[Value, ...]:
        if self.kind == "phi":
            return tuple(v for _, v in self.incomings)
        return self.ops


@dataclass
class BasicBlock:
    label: str
    instrs: List[Instr] = field(default_factory=list)

    @property
    def terminator(self) -> Instr:
        return self.instrs[-1]

    def successors(self) -> Tuple[str, ...]:
        term = self.instrs[-1] if self.instrs else None
        if term is not None and term.kind in ("br", "condbr"):
            return term.targets
        return ()


@dataclass
class IrFunction:
    name: str
    params: Tuple[str, ...]
    blocks: List[BasicBlock]

    def block_map(self) -> Dict[str, BasicBlock]:
        return {b.label: b for b in self.blocks}

    def predecessors(self) -> Dict[str, List[str]]:
        preds: Dict[str, List[str]] = {b.label: [] for b in self.blocks}
        for b in self.blocks:
            for succ in b.successors():
                preds[succ].append(b.label)
        return preds

    def instructions(self):
        for b in self.blocks:
            for ins in b.instrs:
                yield ins

    def num_instructions(self) -> int:
        return sum(len(b.instrs) for b in self.blocks)


class IrError(Exception):
    pass


def validate_ir(fn: IrFunction) -> None:
    """Check the structural IR invariants; raise IrError on the first hole.

    Def-before-use along all paths is verified with a must-reach dataflow
    fixpoint, which is exact for the reducible CFGs the lowerer emits.
    """
    if not fn.blocks:
        raise IrError("function has no blocks")
    labels = [b.label for b in fn.blocks]
    if len(set(labels)) != len(labels):
        raise IrError("duplicate block labels")
    block_map = fn.block_map()
    defined: Dict[str, str] = {}
    for b in fn.blocks:
        if not b.instrs:
            raise IrError(f"empty block {b.label}")
        for i, ins in enumerate(b.instrs):
            if ins.kind not in INSTR_KINDS:
                raise IrError(f"unknown instruction kind {ins.kind}")
            is_term = ins.kind in TERMINATORS
            if is_term != (i == len(b.instrs) - 1):
                raise IrError(f"misplaced terminator in {b.label}")
            if ins.dest is not None:
                if ins.dest.name in defined:
                    raise IrError(f"value redefined: {ins.dest.name}")
                defined[ins.dest.name] = b.label
            for tgt in ins.targets:
                if tgt not in block_map:
                    raise IrError(f"branch to unknown block {tgt}")
    preds = fn.predecessors()
    for b in fn.blocks:
        for ins in b.instrs:
            if ins.kind == "phi":
                if ins is not b.instrs[0] and b.instrs[b.instrs.index(ins) - 1].kind != "phi":
                    raise IrError(f"phi not at top of block {b.label}")
                if sorted(lbl for lbl, _ in ins.incomings) != sorted(preds[b.label]):
                    raise IrError(
                        f"phi incoming labels {[l for l, _ in ins.incomings]} do not "
                        f"match predecessors {preds[b.label]} of {b.label}"
                    )
    _check_def_before_use(fn, preds)


def _check_def_before_use(fn: IrFunction, preds: Dict[str, List[str]]) -> None:
    params = set(fn.params)
    all_temps = {ins.dest.name for ins in fn.instructions() if ins.dest is not None}
    entry = fn.blocks[0].label
    avail_out: Dict[str, set] = {b.label: set(all_temps) for b in fn.blocks}
    avail_in: Dict[str, set] = {}
    changed = True
    while changed:
        changed = False
        for b in fn.blocks:
            if b.label == entry:
                inp = set()
            else:
                ps = preds[b.label]
                inp = set.intersection(*(avail_out[p] for p in ps)) if ps else set()
            defs = {ins.dest.name for ins in b.instrs if ins.dest is not None}
            out = inp | defs
            avail_in[b.label] = inp
            if out != avail_out[b.label]:
                avail_out[b.label] = out
                changed = True
    for b in fn.blocks:
        seen = set(avail_in[b.label])
        phi_dests = {ins.dest.name for ins in b.instrs if ins.kind == "phi"}
        seen |= phi_dests  # phis conceptually execute in parallel at block entry
        for ins in b.instrs:
            if ins.kind == "phi":
                for lbl, val in ins.incomings:
                    if isinstance(val, Temp) and val.name not in avail_out[lbl]:
                        raise IrError(
                            f"phi operand {val.name} not available from {lbl}"
                        )
                    _check_arg_const(val, params)
            else:
                for val in ins.value_operands():
                    if isinstance(val, Temp) and val.name not in seen:
                        raise IrError(f"use of {val.name} before definition in {b.label}")
                    _check_arg_const(val, params)
            if ins.dest is not None:
                seen.add(ins.dest.name)


def _check_arg_const(val: Value, params: set) -> None:
    if isinstance(val, Arg) and val.name not in params:
        raise IrError(f"unknown argument {val.name}")


# --- textual form ---

def _fmt_value(v: Value) -> str:
    if isinstance(v, Temp):
        return f"%{v.name}"
    if isinstance(v, Arg):
        return f"%{v.name}"
    if v.ty == "bool":
        return "true" if v.value else "false"
    if v.ty == "float":
        s = repr(float(v.value))
        return s
    return str(v.value)


def _fmt_instr(ins: Instr) -> str:
    if ins.kind == "phi":
        inc = ", ".join(f"[{lbl}: {_fmt_value(v)}]" for lbl, v in ins.incomings)
        return f"%{ins.dest.name} = phi {inc}"
    if ins.kind == "cmp":
        ops = ", ".join(_fmt_value(v) for v in ins.ops)
        return f"%{ins.dest.name} = cmp {ins.pred} {ops}"
    if ins.kind == "call":
        ops = ", ".join(_fmt_value(v) for v in ins.ops)
        head = f"%{ins.dest.name} = " if ins.dest else ""
        return f"{head}call {ins.callee}" + (f" {ops}" if ops else "")
    if ins.kind == "br":
        return f"br {ins.targets[0]}"
    if ins.kind == "condbr":
        return f"condbr {_fmt_value(ins.ops[0])}, {ins.targets[0]}, {ins.targets[1]}"
    if ins.kind == "ret":
        return "ret"
    if ins.kind == "cast":
        return f"%{ins.dest.name} = cast {_fmt_value(ins.ops[0])} to {ins.ty}"
    ops = ", ".join(_fmt_value(v) for v in ins.ops)
    head = f"%{ins.dest.name} = " if ins.dest else ""
    return f"{head}{ins.kind} {ops}"


def ir_to_text(fn: IrFunction) -> str:
    lines = []
    for b in fn.blocks:
        lines.append(f"{b.label}:")
        for ins in b.instrs:
            lines.append(f"  {_fmt_instr(ins)}")
    return "\n".join(lines) + "\n"
