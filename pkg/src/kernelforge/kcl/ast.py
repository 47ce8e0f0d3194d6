"""AST for KCL, a small OpenCL-flavoured kernel language.

All nodes are frozen dataclasses, so structural equality and hashing come
for free. Source positions live in the lexer tokens only; the tree itself
is pure structure, which keeps round-trip comparisons trivial.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

BASE_TYPES = ("int", "float", "bool")
QUALIFIERS = ("global", "local", "none")

KEYWORDS = frozenset(
    ["kernel", "void", "global", "local", "int", "float", "bool",
     "if", "else", "for", "true", "false"]
)
BUILTINS = frozenset(["get_global_id", "get_local_id", "barrier", "atomic_add"])

ARITH_OPS = ("+", "-", "*", "/", "%")
REL_OPS = ("<", ">", "<=", ">=", "==", "!=")


@dataclass(frozen=True)
class Type:
    base: str
    is_pointer: bool = False
    qualifier: str = "none"

    def __str__(self) -> str:
        star = "*" if self.is_pointer else ""
        qual = f"{self.qualifier} " if self.qualifier != "none" else ""
        return f"{qual}{self.base}{star}"


INT = Type("int")
FLOAT = Type("float")
BOOL = Type("bool")


# --- expressions ---

@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class FloatLit:
    value: float


@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class Name:
    ident: str


@dataclass(frozen=True)
class Index:
    """Pointer element access: base[index]."""
    base: str
    index: "Expr"


@dataclass(frozen=True)
class Unary:
    op: str  # only "-"
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # ARITH_OPS or REL_OPS
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class BuiltinCall:
    """get_global_id(dim) / get_local_id(dim)."""
    name: str
    dim: int


Expr = Union[IntLit, FloatLit, BoolLit, Name, Index, Unary, Binary, BuiltinCall]


# --- statements ---

@dataclass(frozen=True)
class LValue:
    name: str
    index: Optional[Expr] = None  # None: scalar variable; else pointer element


@dataclass(frozen=True)
class Decl:
    ty: str  # base type name; locals are always scalar and initialised
    name: str
    init: Expr


@dataclass(frozen=True)
class Assign:
    target: LValue
    value: Expr


@dataclass(frozen=True)
class If:
    cond: Expr
    then: "Block"
    orelse: Optional["Block"] = None


@dataclass(frozen=True)
class For:
    init: Union[Decl, Assign]
    cond: Expr
    step: Assign
    body: "Block"


@dataclass(frozen=True)
class Barrier:
    pass


@dataclass(frozen=True)
class AddrOf:
    """First argument of atomic_add: &base[index], or a bare pointer name."""
    base: str
    index: Optional[Expr] = None


@dataclass(frozen=True)
class AtomicAdd:
    target: AddrOf
    value: Expr


@dataclass(frozen=True)
class ExprStmt:
    expr: Expr


@dataclass(frozen=True)
class Block:
    stmts: tuple


Stmt = Union[Decl, Assign, If, For, Barrier, AtomicAdd, ExprStmt, Block]


@dataclass(frozen=True)
class Param:
    qualifier: str  # global | local | none
    base: str
    is_pointer: bool
    name: str

    @property
    def type(self) -> Type:
        return Type(self.base, self.is_pointer, self.qualifier)


@dataclass(frozen=True)
class KernelAst:
    name: str
    params: tuple
    body: Block
