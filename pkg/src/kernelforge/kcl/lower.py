"""Lowering from checked KCL ASTs to the mini-IR in SSA form.

Scalar locals never touch memory: because KCL control flow is structured
and every local carries an initialiser, SSA values can be threaded
directly through the statement walk, with phis materialised at if-joins
and loop headers. This is observably equivalent to the alloca+mem2reg
route and keeps phi placement deterministic. Array element traffic
lowers to gep+load / gep+store; int-to-float widening becomes cast.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Tuple

from . import ast as A
from .ir import Arg, BasicBlock, Const, Instr, IrFunction, Temp, Value

_CMP_PRED = {"<": "lt", ">": "gt", "<=": "le", ">=": "ge", "==": "eq", "!=": "ne"}
_ARITH_KIND = {"+": "add", "-": "sub", "*": "mul", "/": "div", "%": "rem"}


class _Lowerer:
    def __init__(self, ast: A.KernelAst):
        self.ast = ast
        self.blocks: List[BasicBlock] = []
        self.temp_count = 0
        self.if_count = 0
        self.for_count = 0
        # scope frames: name -> [Type, Value]; pointers map to Arg values
        self.frames: List[Dict[str, list]] = []
        self.current = self._new_block("entry")

    # -- low-level builders --

    def _new_block(self, label: str) -> BasicBlock:
        b = BasicBlock(label)
        self.blocks.append(b)
        return b

    def _fresh(self) -> Temp:
        t = Temp(f"t{self.temp_count}")
        self.temp_count += 1
        return t

    def _emit(self, kind: str, ops: Tuple[Value, ...] = (), dest: bool = False, **kw) -> Optional[Temp]:
        d = self._fresh() if dest else None
        self.current.instrs.append(Instr(kind, dest=d, ops=ops, **kw))
        return d

    # -- scope helpers --

    def _push(self):
        self.frames.append({})

    def _pop(self):
        self.frames.pop()

    def _declare(self, name: str, ty: A.Type, value: Value):
        self.frames[-1][name] = [ty, value]

    def _slot(self, name: str) -> list:
        for frame in reversed(self.frames):
            if name in frame:
                return frame[name]
        raise KeyError(name)

    def _snapshot(self) -> List[Dict[str, list]]:
        return [{k: list(v) for k, v in f.items()} for f in self.frames]

    def _restore(self, snap: List[Dict[str, list]]):
        self.frames = [{k: list(v) for k, v in f.items()} for f in snap]

    # -- expressions --

    def _cast_to_float(self, val: Value) -> Value:
        if isinstance(val, Const) and val.ty == "int":
            return Const(float(val.value), "float")
        return self._emit("cast", (val,), dest=True, ty="float")

    def expr(self, e: A.Expr) -> Tuple[Value, A.Type]:
        if isinstance(e, A.IntLit):
            return Const(e.value, "int"), A.INT
        if isinstance(e, A.FloatLit):
            return Const(e.value, "float"), A.FLOAT
        if isinstance(e, A.BoolLit):
            return Const(e.value, "bool"), A.BOOL
        if isinstance(e, A.Name):
            ty, val = self._slot(e.ident)
            return val, ty
        if isinstance(e, A.Index):
            base_ty, base_val = self._slot(e.base)
            idx, _ = self.expr(e.index)
            addr = self._emit("gep", (base_val, idx), dest=True)
            loaded = self._emit("load", (addr,), dest=True)
            return loaded, A.Type(base_ty.base)
        if isinstance(e, A.Unary):
            val, ty = self.expr(e.operand)
            zero = Const(0.0, "float") if ty.base == "float" else Const(0, "int")
            return self._emit("sub", (zero, val), dest=True), ty
        if isinstance(e, A.BuiltinCall):
            dest = self._emit("call", (Const(e.dim, "int"),), dest=True, callee=e.name)
            return dest, A.INT
        if isinstance(e, A.Binary):
            lv, lt = self.expr(e.left)
            rv, rt = self.expr(e.right)
            if e.op in A.ARITH_OPS:
                result_ty = A.FLOAT if "float" in (lt.base, rt.base) else A.INT
                if result_ty == A.FLOAT:
                    if lt.base == "int":
                        lv = self._cast_to_float(lv)
                    if rt.base == "int":
                        rv = self._cast_to_float(rv)
                return self._emit(_ARITH_KIND[e.op], (lv, rv), dest=True), result_ty
            if lt.base != rt.base and "float" in (lt.base, rt.base):
                if lt.base == "int":
                    lv = self._cast_to_float(lv)
                if rt.base == "int":
                    rv = self._cast_to_float(rv)
            return self._emit("cmp", (lv, rv), dest=True, pred=_CMP_PRED[e.op]), A.BOOL
        raise AssertionError(f"unhandled expression {e!r}")

    def _coerce(self, val: Value, have: A.Type, want_base: str) -> Value:
        if have.base == "int" and want_base == "float":
            return self._cast_to_float(val)
        return val

    # -- statements --

    def stmt(self, s):
        if isinstance(s, A.Decl):
            val, vt = self.expr(s.init)
            val = self._coerce(val, vt, s.ty)
            self._declare(s.name, A.Type(s.ty), val)
        elif isinstance(s, A.Assign):
            self.assign(s)
        elif isinstance(s, A.If):
            self.if_stmt(s)
        elif isinstance(s, A.For):
            self.for_stmt(s)
        elif isinstance(s, A.Barrier):
            self._emit("call", (), callee="barrier")
        elif isinstance(s, A.AtomicAdd):
            base_ty, base_val = self._slot(s.target.base)
            if s.target.index is not None:
                idx, _ = self.expr(s.target.index)
                addr = self._emit("gep", (base_val, idx), dest=True)
            else:
                addr = base_val
            val, _ = self.expr(s.value)
            self._emit("call", (addr, val), callee="atomic_add")
        elif isinstance(s, A.ExprStmt):
            self.expr(s.expr)
        elif isinstance(s, A.Block):
            self.block(s)
        else:
            raise AssertionError(f"unhandled statement {s!r}")

    def block(self, b: A.Block):
        self._push()
        for s in b.stmts:
            self.stmt(s)
        self._pop()

    def assign(self, s: A.Assign):
        if s.target.index is None:
            slot = self._slot(s.target.name)
            val, vt = self.expr(s.value)
            slot[1] = self._coerce(val, vt, slot[0].base)
        else:
            base_ty, base_val = self._slot(s.target.name)
            val, vt = self.expr(s.value)
            val = self._coerce(val, vt, base_ty.base)
            idx, _ = self.expr(s.target.index)
            addr = self._emit("gep", (base_val, idx), dest=True)
            self._emit("store", (val, addr))

    def if_stmt(self, s: A.If):
        cond, _ = self.expr(s.cond)
        branch_block = self.current
        self.if_count += 1
        n = self.if_count
        then_bb = self._new_block(f"if.then.{n}")
        else_bb = self._new_block(f"if.else.{n}") if s.orelse is not None else None
        join_bb = self._new_block(f"if.join.{n}")
        branch_block.instrs.append(
            Instr("condbr", ops=(cond,),
                  targets=(then_bb.label, else_bb.label if else_bb else join_bb.label))
        )
        before = self._snapshot()

        self.current = then_bb
        self.block(s.then)
        then_env = self._snapshot()
        then_end = self.current
        then_end.instrs.append(Instr("br", targets=(join_bb.label,)))

        if else_bb is not None:
            self._restore(before)
            self.current = else_bb
            self.block(s.orelse)
            else_env = self._snapshot()
            else_end = self.current
            else_end.instrs.append(Instr("br", targets=(join_bb.label,)))
        else:
            else_env = before
            else_end = branch_block

        self.current = join_bb
        self._restore(before)
        for fi, frame in enumerate(before):
            for name in frame:
                tv = then_env[fi][name][1]
                ev = else_env[fi][name][1]
                if tv == ev:
                    self.frames[fi][name][1] = tv
                else:
                    phi = self._fresh()
                    join_bb.instrs.append(Instr(
                        "phi", dest=phi,
                        incomings=((then_end.label, tv), (else_end.label, ev)),
                    ))
                    self.frames[fi][name][1] = phi

    def for_stmt(self, s: A.For):
        self._push()
        if isinstance(s.init, A.Decl):
            self.stmt(s.init)
        else:
            self.assign(s.init)
        slots = _assigned_slots((s.step, s.body), self.frames)
        self.for_count += 1
        n = self.for_count
        preheader = self.current
        header = self._new_block(f"for.header.{n}")
        body_bb = self._new_block(f"for.body.{n}")
        exit_bb = self._new_block(f"for.exit.{n}")
        preheader.instrs.append(Instr("br", targets=(header.label,)))

        self.current = header
        pending = []
        for fi, name in slots:
            phi = self._fresh()
            ins = Instr("phi", dest=phi,
                        incomings=((preheader.label, self.frames[fi][name][1]),))
            header.instrs.append(ins)
            self.frames[fi][name][1] = phi
            pending.append((fi, name, ins, phi))
        cond, _ = self.expr(s.cond)
        header.instrs.append(Instr("condbr", ops=(cond,),
                                   targets=(body_bb.label, exit_bb.label)))

        self.current = body_bb
        self.block(s.body)
        self.assign(s.step)
        latch = self.current
        latch.instrs.append(Instr("br", targets=(header.label,)))
        for fi, name, ins, phi in pending:
            ins.incomings = ins.incomings + ((latch.label, self.frames[fi][name][1]),)
            self.frames[fi][name][1] = phi  # post-loop value is the header phi

        self.current = exit_bb
        self._pop()

    def run(self) -> IrFunction:
        self._push()
        for p in self.ast.params:
            self._declare(p.name, p.type, Arg(p.name))
        self.block(self.ast.body)
        self.current.instrs.append(Instr("ret"))
        return IrFunction(self.ast.name, tuple(p.name for p in self.ast.params), self.blocks)


def _assigned_slots(roots, frames) -> List[Tuple[int, str]]:
    """Slots in `frames` rebound by any scalar assignment under `roots`,
    respecting declarations that shadow outer names. Order is walk order."""
    result: List[Tuple[int, str]] = []
    seen = set()

    def resolve(name: str, shadows: List[set]):
        for s in reversed(shadows):
            if name in s:
                return
        for fi in range(len(frames) - 1, -1, -1):
            if name in frames[fi]:
                slot = (fi, name)
                if slot not in seen:
                    seen.add(slot)
                    result.append(slot)
                return

    def walk(stmt, shadows: List[set]):
        if isinstance(stmt, A.Decl):
            shadows[-1].add(stmt.name)
        elif isinstance(stmt, A.Assign):
            if stmt.target.index is None:
                resolve(stmt.target.name, shadows)
        elif isinstance(stmt, A.If):
            walk_block(stmt.then, shadows)
            if stmt.orelse is not None:
                walk_block(stmt.orelse, shadows)
        elif isinstance(stmt, A.For):
            inner = shadows + [set()]
            walk(stmt.init, inner)
            walk(stmt.step, inner)
            walk_block(stmt.body, inner)
        elif isinstance(stmt, A.Block):
            walk_block(stmt, shadows)

    def walk_block(block: A.Block, shadows: List[set]):
        inner = shadows + [set()]
        for s in block.stmts:
            walk(s, inner)

    shadows0: List[set] = [set()]
    for root in roots:
        walk(root, shadows0)
    return result


def lower_to_ir(ast: A.KernelAst) -> IrFunction:
    """Lower a checked kernel; total on checked ASTs."""
    return _Lowerer(ast).run()
