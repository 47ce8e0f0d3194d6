"""Canonical pretty-printer for KCL ASTs.

parse(render(a)) is structurally equal to a, and render(parse(render(a)))
is a fixed point. Bodies of if/for always render with braces.
"""

from __future__ import annotations

import numpy as np

from . import ast as A

_LEVEL_REL = 1
_LEVEL_ADD = 2
_LEVEL_MUL = 3
_LEVEL_UNARY = 4
_LEVEL_ATOM = 5


def _fmt_float(v: float) -> str:
    s = repr(float(v))
    if "e" in s or "E" in s:
        s = np.format_float_positional(v)
    if s.endswith("."):
        s += "0"
    if "." not in s:
        s += ".0"
    return s


def _level(e: A.Expr) -> int:
    if isinstance(e, A.Binary):
        if e.op in A.REL_OPS:
            return _LEVEL_REL
        return _LEVEL_ADD if e.op in ("+", "-") else _LEVEL_MUL
    if isinstance(e, A.Unary):
        return _LEVEL_UNARY
    return _LEVEL_ATOM


def render_expr(e: A.Expr) -> str:
    if isinstance(e, A.IntLit):
        return str(e.value)
    if isinstance(e, A.FloatLit):
        return _fmt_float(e.value)
    if isinstance(e, A.BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, A.Name):
        return e.ident
    if isinstance(e, A.Index):
        return f"{e.base}[{render_expr(e.index)}]"
    if isinstance(e, A.BuiltinCall):
        return f"{e.name}({e.dim})"
    if isinstance(e, A.Unary):
        inner = render_expr(e.operand)
        if _level(e.operand) < _LEVEL_UNARY:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, A.Binary):
        mine = _level(e)
        left = render_expr(e.left)
        if _level(e.left) < mine:
            left = f"({left})"
        right = render_expr(e.right)
        # binary ops associate left; equal-level right children need parens
        if _level(e.right) <= mine and mine != _LEVEL_REL:
            right = f"({right})"
        elif _level(e.right) < mine:
            right = f"({right})"
        return f"{left} {e.op} {right}"
    raise AssertionError(f"unhandled expression {e!r}")


def _render_lvalue(lv: A.LValue) -> str:
    if lv.index is None:
        return lv.name
    return f"{lv.name}[{render_expr(lv.index)}]"


def _render_param(p: A.Param) -> str:
    qual = f"{p.qualifier} " if p.qualifier != "none" else ""
    star = "*" if p.is_pointer else ""
    return f"{qual}{p.base}{star} {p.name}"


def _render_init(init) -> str:
    if isinstance(init, A.Decl):
        return f"{init.ty} {init.name} = {render_expr(init.init)}"
    return f"{_render_lvalue(init.target)} = {render_expr(init.value)}"


def _render_stmt(s, indent: int, out: list):
    pad = "  " * indent
    if isinstance(s, A.Decl):
        out.append(f"{pad}{s.ty} {s.name} = {render_expr(s.init)};")
    elif isinstance(s, A.Assign):
        out.append(f"{pad}{_render_lvalue(s.target)} = {render_expr(s.value)};")
    elif isinstance(s, A.If):
        out.append(f"{pad}if ({render_expr(s.cond)}) {{")
        _render_block_body(s.then, indent + 1, out)
        if s.orelse is not None:
            out.append(f"{pad}}} else {{")
            _render_block_body(s.orelse, indent + 1, out)
        out.append(f"{pad}}}")
    elif isinstance(s, A.For):
        head = f"{_render_init(s.init)}; {render_expr(s.cond)}; {_render_init(s.step)}"
        out.append(f"{pad}for ({head}) {{")
        _render_block_body(s.body, indent + 1, out)
        out.append(f"{pad}}}")
    elif isinstance(s, A.Barrier):
        out.append(f"{pad}barrier();")
    elif isinstance(s, A.AtomicAdd):
        if s.target.index is None:
            tgt = s.target.base
        else:
            tgt = f"&{s.target.base}[{render_expr(s.target.index)}]"
        out.append(f"{pad}atomic_add({tgt}, {render_expr(s.value)});")
    elif isinstance(s, A.ExprStmt):
        out.append(f"{pad}{render_expr(s.expr)};")
    elif isinstance(s, A.Block):
        out.append(f"{pad}{{")
        _render_block_body(s, indent + 1, out)
        out.append(f"{pad}}}")
    else:
        raise AssertionError(f"unhandled statement {s!r}")


def _render_block_body(b: A.Block, indent: int, out: list):
    for s in b.stmts:
        _render_stmt(s, indent, out)


def render_source(ast: A.KernelAst) -> str:
    params = ", ".join(_render_param(p) for p in ast.params)
    out = [f"kernel void {ast.name}({params}) {{"]
    _render_block_body(ast.body, 1, out)
    out.append("}")
    return "\n".join(out) + "\n"
