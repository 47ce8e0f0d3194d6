"""Semantic checks for KCL: declared-before-use, typing, and the few
hard-error rules (division by a literal zero, pointer misuse).

A kernel "compiles" iff parse_kernel and check_kernel both succeed.
Only hard errors reject; there is no warning category.
"""

from __future__ import annotations

from typing import List, Optional

from . import ast as A


class SemanticError(Exception):
    pass


class Scopes:
    """Stack of name -> Type scopes. Shadowing in inner scopes is legal;
    redeclaration within one scope is not."""

    def __init__(self):
        self.stack: List[dict] = [{}]

    def push(self):
        self.stack.append({})

    def pop(self):
        self.stack.pop()

    def declare(self, name: str, ty: A.Type):
        if name in self.stack[-1]:
            raise SemanticError(f"redeclared: {name}")
        self.stack[-1][name] = ty

    def lookup(self, name: str) -> A.Type:
        for frame in reversed(self.stack):
            if name in frame:
                return frame[name]
        raise SemanticError(f"undeclared: {name}")


def _is_numeric(ty: A.Type) -> bool:
    return not ty.is_pointer and ty.base in ("int", "float")


def _assignable(target: A.Type, value: A.Type) -> bool:
    """Implicit widening int -> float only; never float -> int, never bool."""
    if target.is_pointer or value.is_pointer:
        return False
    if target.base == value.base:
        return True
    return target.base == "float" and value.base == "int"


def infer_expr(expr: A.Expr, scopes: Scopes) -> A.Type:
    """Type of an expression, raising SemanticError on any violation."""
    if isinstance(expr, A.IntLit):
        return A.INT
    if isinstance(expr, A.FloatLit):
        return A.FLOAT
    if isinstance(expr, A.BoolLit):
        return A.BOOL
    if isinstance(expr, A.Name):
        ty = scopes.lookup(expr.ident)
        if ty.is_pointer:
            raise SemanticError(f"pointer used as value: {expr.ident}")
        return ty
    if isinstance(expr, A.Index):
        base_ty = scopes.lookup(expr.base)
        if not base_ty.is_pointer:
            raise SemanticError(f"indexing non-pointer: {expr.base}")
        idx_ty = infer_expr(expr.index, scopes)
        if idx_ty != A.INT:
            raise SemanticError(f"index must be int: {expr.base}[...]")
        return A.Type(base_ty.base)
    if isinstance(expr, A.Unary):
        ty = infer_expr(expr.operand, scopes)
        if not _is_numeric(ty):
            raise SemanticError("unary minus on non-numeric operand")
        return ty
    if isinstance(expr, A.BuiltinCall):
        if not 0 <= expr.dim <= 2:
            raise SemanticError(f"{expr.name} dimension out of range: {expr.dim}")
        return A.INT
    if isinstance(expr, A.Binary):
        lt = infer_expr(expr.left, scopes)
        rt = infer_expr(expr.right, scopes)
        if expr.op in A.ARITH_OPS:
            if not (_is_numeric(lt) and _is_numeric(rt)):
                raise SemanticError(f"arithmetic on non-numeric operand: {expr.op}")
            if expr.op == "%" and (lt != A.INT or rt != A.INT):
                raise SemanticError("% requires int operands")
            if expr.op in ("/", "%") and _is_literal_zero(expr.right):
                raise SemanticError(f"division by constant zero")
            return A.FLOAT if "float" in (lt.base, rt.base) else A.INT
        # relational
        if expr.op in ("==", "!="):
            if lt == A.BOOL and rt == A.BOOL:
                return A.BOOL
        if not (_is_numeric(lt) and _is_numeric(rt)):
            raise SemanticError(f"relational op on non-numeric operand: {expr.op}")
        return A.BOOL
    raise SemanticError(f"unknown expression node: {expr!r}")


def _is_literal_zero(expr: A.Expr) -> bool:
    return (isinstance(expr, A.IntLit) and expr.value == 0) or (
        isinstance(expr, A.FloatLit) and expr.value == 0.0
    )


def _check_stmt(stmt, scopes: Scopes):
    if isinstance(stmt, A.Decl):
        init_ty = infer_expr(stmt.init, scopes)
        target = A.Type(stmt.ty)
        if not _assignable(target, init_ty):
            raise SemanticError(f"{init_ty} assigned to {stmt.ty} without cast: {stmt.name}")
        scopes.declare(stmt.name, target)
    elif isinstance(stmt, A.Assign):
        _check_assign(stmt, scopes)
    elif isinstance(stmt, A.If):
        if infer_expr(stmt.cond, scopes) != A.BOOL:
            raise SemanticError("if condition must be bool")
        _check_block(stmt.then, scopes)
        if stmt.orelse is not None:
            _check_block(stmt.orelse, scopes)
    elif isinstance(stmt, A.For):
        scopes.push()
        _check_stmt(stmt.init, scopes)
        if infer_expr(stmt.cond, scopes) != A.BOOL:
            raise SemanticError("for condition must be bool")
        _check_assign(stmt.step, scopes)
        _check_block(stmt.body, scopes)
        scopes.pop()
    elif isinstance(stmt, A.Barrier):
        pass
    elif isinstance(stmt, A.AtomicAdd):
        base_ty = scopes.lookup(stmt.target.base)
        if not base_ty.is_pointer:
            raise SemanticError(f"atomic_add target must be a pointer: {stmt.target.base}")
        if base_ty.base != "int":
            raise SemanticError("atomic_add requires an int pointer")
        if stmt.target.index is not None:
            if infer_expr(stmt.target.index, scopes) != A.INT:
                raise SemanticError("index must be int in atomic_add target")
        if infer_expr(stmt.value, scopes) != A.INT:
            raise SemanticError("atomic_add value must be int")
    elif isinstance(stmt, A.ExprStmt):
        infer_expr(stmt.expr, scopes)
    elif isinstance(stmt, A.Block):
        _check_block(stmt, scopes)
    else:
        raise SemanticError(f"unknown statement node: {stmt!r}")


def _check_assign(stmt: A.Assign, scopes: Scopes):
    tgt = stmt.target
    declared = scopes.lookup(tgt.name)
    value_ty = infer_expr(stmt.value, scopes)
    if tgt.index is None:
        if declared.is_pointer:
            raise SemanticError(f"cannot assign to pointer: {tgt.name}")
        if not _assignable(declared, value_ty):
            raise SemanticError(f"{value_ty} assigned to {declared} without cast: {tgt.name}")
    else:
        if not declared.is_pointer:
            raise SemanticError(f"indexing non-pointer: {tgt.name}")
        if infer_expr(tgt.index, scopes) != A.INT:
            raise SemanticError(f"index must be int: {tgt.name}[...]")
        if not _assignable(A.Type(declared.base), value_ty):
            raise SemanticError(f"{value_ty} stored to {declared.base} element without cast")


def _check_block(block: A.Block, scopes: Scopes):
    scopes.push()
    for stmt in block.stmts:
        _check_stmt(stmt, scopes)
    scopes.pop()


def check_kernel(ast: A.KernelAst) -> None:
    """Raise SemanticError unless every typing and scoping rule holds."""
    scopes = Scopes()
    seen = set()
    for p in ast.params:
        if p.name in seen:
            raise SemanticError(f"redeclared: {p.name}")
        seen.add(p.name)
        scopes.declare(p.name, p.type)
    _check_block(ast.body, scopes)


def compiles(source: str) -> bool:
    """The compile oracle: true iff source parses and checks."""
    from .parser import parse_kernel, ParseError

    try:
        check_kernel(parse_kernel(source))
        return True
    except (ParseError, SemanticError):
        return False
