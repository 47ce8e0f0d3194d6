"""KCL: the kernel language, its compile oracle, mini-IR and DCE."""

from . import ast
from .checker import SemanticError, check_kernel, compiles
from .dce import run_dce
from .ir import IrError, IrFunction, ir_to_text, validate_ir
from .lower import lower_to_ir
from .parser import ParseError, parse_kernel
from .render import render_source

__all__ = [
    "ast",
    "parse_kernel",
    "ParseError",
    "check_kernel",
    "SemanticError",
    "compiles",
    "lower_to_ir",
    "run_dce",
    "render_source",
    "IrFunction",
    "IrError",
    "validate_ir",
    "ir_to_text",
]
