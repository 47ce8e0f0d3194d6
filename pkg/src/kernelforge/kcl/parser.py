"""Recursive-descent parser for KCL.

The full grammar lives in docs/kcl-grammar.md. Parsing is total over
arbitrary byte strings: any input either yields a KernelAst or raises
ParseError with line/column and the expected token.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

from . import ast as A

_SYMBOLS = ("<=", ">=", "==", "!=", "(", ")", "{", "}", "[", "]", ";", ",",
            "&", "=", "<", ">", "+", "-", "*", "/", "%")

_MAX_NESTING = 200


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int, expected: Optional[str] = None):
        self.message = message
        self.line = line
        self.col = col
        self.expected = expected
        suffix = f" (expected {expected})" if expected else ""
        super().__init__(f"{line}:{col}: {message}{suffix}")


@dataclass
class Token:
    kind: str  # ident | int | float | sym | eof
    text: str
    line: int
    col: int


def _lex(source: str) -> List[Token]:
    tokens: List[Token] = []
    i, line, col = 0, 1, 1
    n = len(source)
    while i < n:
        c = source[i]
        if c in " \t\r\n":
            if c == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1
            continue
        start_line, start_col = line, col
        if c.isalpha() or c == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            tokens.append(Token("ident", source[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        if c.isdigit():
            j = i
            while j < n and source[j].isdigit():
                j += 1
            if j < n and source[j] == "." and j + 1 < n and source[j + 1].isdigit():
                j += 1
                while j < n and source[j].isdigit():
                    j += 1
                tokens.append(Token("float", source[i:j], start_line, start_col))
            else:
                tokens.append(Token("int", source[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        two = source[i:i + 2]
        if two in _SYMBOLS:
            tokens.append(Token("sym", two, start_line, start_col))
            i += 2
            col += 2
            continue
        if c in _SYMBOLS:
            tokens.append(Token("sym", c, start_line, start_col))
            i += 1
            col += 1
            continue
        raise ParseError(f"unexpected character {c!r}", line, col)
    tokens.append(Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, tokens: List[Token]):
        self.tokens = tokens
        self.pos = 0
        self.depth = 0

    # -- token helpers --

    @property
    def cur(self) -> Token:
        return self.tokens[self.pos]

    def _fail(self, expected: str):
        t = self.cur
        shown = t.text if t.kind != "eof" else "end of input"
        raise ParseError(f"unexpected {shown!r}", t.line, t.col, expected=expected)

    def accept(self, kind: str, text: Optional[str] = None) -> Optional[Token]:
        t = self.cur
        if t.kind == kind and (text is None or t.text == text):
            self.pos += 1
            return t
        return None

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        t = self.accept(kind, text)
        if t is None:
            self._fail(text if text is not None else kind)
        return t

    def accept_kw(self, word: str) -> bool:
        t = self.cur
        if t.kind == "ident" and t.text == word:
            self.pos += 1
            return True
        return False

    def expect_kw(self, word: str) -> None:
        if not self.accept_kw(word):
            self._fail(word)

    def _enter(self):
        self.depth += 1
        if self.depth > _MAX_NESTING:
            t = self.cur
            raise ParseError("nesting too deep", t.line, t.col)

    def _leave(self):
        self.depth -= 1

    # -- grammar --

    def kernel(self) -> A.KernelAst:
        self.expect_kw("kernel")
        self.expect_kw("void")
        name = self.ident()
        self.expect("sym", "(")
        params = []
        if not self.accept("sym", ")"):
            params.append(self.param())
            while self.accept("sym", ","):
                params.append(self.param())
            self.expect("sym", ")")
        body = self.block()
        self.expect("eof")
        return A.KernelAst(name, tuple(params), body)

    def ident(self) -> str:
        t = self.cur
        if t.kind != "ident" or t.text in A.KEYWORDS or t.text in A.BUILTINS:
            self._fail("identifier")
        self.pos += 1
        return t.text

    def param(self) -> A.Param:
        qualifier = "none"
        if self.accept_kw("global"):
            qualifier = "global"
        elif self.accept_kw("local"):
            qualifier = "local"
        base = self.base_type()
        is_pointer = self.accept("sym", "*") is not None
        name = self.ident()
        if qualifier != "none" and not is_pointer:
            t = self.cur
            raise ParseError(f"address qualifier requires a pointer parameter", t.line, t.col)
        return A.Param(qualifier, base, is_pointer, name)

    def base_type(self) -> str:
        for b in A.BASE_TYPES:
            if self.accept_kw(b):
                return b
        self._fail("type")

    def block(self) -> A.Block:
        self._enter()
        self.expect("sym", "{")
        stmts = []
        while not self.accept("sym", "}"):
            s = self.statement()
            if s is not None:
                stmts.append(s)
        self._leave()
        return A.Block(tuple(stmts))

    def statement(self):
        """One statement; empty statements return None and are dropped."""
        self._enter()
        try:
            if self.accept("sym", ";"):
                return None
            if self.cur.kind == "sym" and self.cur.text == "{":
                return self.block()
            if self.accept_kw("if"):
                self.expect("sym", "(")
                cond = self.expr()
                self.expect("sym", ")")
                then = self.stmt_as_block()
                orelse = None
                if self.accept_kw("else"):
                    orelse = self.stmt_as_block()
                return A.If(cond, then, orelse)
            if self.accept_kw("for"):
                self.expect("sym", "(")
                init = self.for_init()
                self.expect("sym", ";")
                cond = self.expr()
                self.expect("sym", ";")
                step = self.assign_stmt()
                self.expect("sym", ")")
                body = self.stmt_as_block()
                return A.For(init, cond, step, body)
            if self.cur.kind == "ident" and self.cur.text == "barrier":
                self.pos += 1
                self.expect("sym", "(")
                self.expect("sym", ")")
                self.expect("sym", ";")
                return A.Barrier()
            if self.cur.kind == "ident" and self.cur.text == "atomic_add":
                self.pos += 1
                self.expect("sym", "(")
                target = self.addr()
                self.expect("sym", ",")
                value = self.expr()
                self.expect("sym", ")")
                self.expect("sym", ";")
                return A.AtomicAdd(target, value)
            if self.cur.kind == "ident" and self.cur.text in A.BASE_TYPES:
                d = self.decl()
                self.expect("sym", ";")
                return d
            # assignment or expression statement; disambiguate by lookahead
            snapshot = self.pos
            stmt = self.try_assign()
            if stmt is not None:
                self.expect("sym", ";")
                return stmt
            self.pos = snapshot
            e = self.expr()
            self.expect("sym", ";")
            return A.ExprStmt(e)
        finally:
            self._leave()

    def stmt_as_block(self) -> A.Block:
        """If/for bodies are canonicalised to blocks."""
        if self.cur.kind == "sym" and self.cur.text == "{":
            return self.block()
        s = self.statement()
        return A.Block(() if s is None else (s,))

    def decl(self) -> A.Decl:
        ty = self.base_type()
        name = self.ident()
        self.expect("sym", "=")
        return A.Decl(ty, name, self.expr())

    def for_init(self):
        if self.cur.kind == "ident" and self.cur.text in A.BASE_TYPES:
            return self.decl()
        return self.assign_stmt()

    def assign_stmt(self) -> A.Assign:
        a = self.try_assign()
        if a is None:
            self._fail("assignment")
        return a

    def try_assign(self) -> Optional[A.Assign]:
        """Parse `lvalue = expr` if the input looks like one, else rewind."""
        snapshot = self.pos
        if self.cur.kind != "ident" or self.cur.text in A.KEYWORDS or self.cur.text in A.BUILTINS:
            return None
        name = self.cur.text
        self.pos += 1
        index = None
        if self.accept("sym", "["):
            index = self.expr()
            if not self.accept("sym", "]"):
                self.pos = snapshot
                return None
        if self.cur.kind == "sym" and self.cur.text == "=":
            self.pos += 1
            return A.Assign(A.LValue(name, index), self.expr())
        self.pos = snapshot
        return None

    def addr(self) -> A.AddrOf:
        if self.accept("sym", "&"):
            base = self.ident()
            self.expect("sym", "[")
            index = self.expr()
            self.expect("sym", "]")
            return A.AddrOf(base, index)
        return A.AddrOf(self.ident(), None)

    # expressions, lowest to highest precedence

    def expr(self) -> A.Expr:
        self._enter()
        try:
            left = self.additive()
            for op in A.REL_OPS:
                if self.cur.kind == "sym" and self.cur.text == op:
                    self.pos += 1
                    return A.Binary(op, left, self.additive())
            return left
        finally:
            self._leave()

    def additive(self) -> A.Expr:
        e = self.multiplicative()
        while self.cur.kind == "sym" and self.cur.text in ("+", "-"):
            op = self.cur.text
            self.pos += 1
            e = A.Binary(op, e, self.multiplicative())
        return e

    def multiplicative(self) -> A.Expr:
        e = self.unary()
        while self.cur.kind == "sym" and self.cur.text in ("*", "/", "%"):
            op = self.cur.text
            self.pos += 1
            e = A.Binary(op, e, self.unary())
        return e

    def unary(self) -> A.Expr:
        self._enter()
        try:
            if self.accept("sym", "-"):
                return A.Unary("-", self.unary())
            return self.primary()
        finally:
            self._leave()

    def primary(self) -> A.Expr:
        t = self.cur
        if t.kind == "int":
            self.pos += 1
            return A.IntLit(int(t.text))
        if t.kind == "float":
            self.pos += 1
            return A.FloatLit(float(t.text))
        if self.accept("sym", "("):
            self._enter()
            e = self.expr()
            self._leave()
            self.expect("sym", ")")
            return e
        if t.kind == "ident":
            if t.text == "true":
                self.pos += 1
                return A.BoolLit(True)
            if t.text == "false":
                self.pos += 1
                return A.BoolLit(False)
            if t.text in ("get_global_id", "get_local_id"):
                self.pos += 1
                self.expect("sym", "(")
                dim_tok = self.expect("int")
                self.expect("sym", ")")
                return A.BuiltinCall(t.text, int(dim_tok.text))
            if t.text in A.KEYWORDS or t.text in A.BUILTINS:
                self._fail("expression")
            self.pos += 1
            if self.accept("sym", "["):
                idx = self.expr()
                self.expect("sym", "]")
                return A.Index(t.text, idx)
            return A.Name(t.text)
        self._fail("expression")


def parse_kernel(source: str) -> A.KernelAst:
    """Parse KCL source into a KernelAst or raise ParseError."""
    if not isinstance(source, str):
        raise TypeError("source must be str")
    return _Parser(_lex(source)).kernel()
