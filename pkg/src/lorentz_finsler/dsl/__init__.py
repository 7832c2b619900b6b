"""Expression language: parsing, symbolic differentiation, simplification, tapes."""

from .expr import (
    Expr,
    const,
    differentiate,
    evaluate,
    free_variables,
    node_count,
    simplify,
    substitute,
    to_string,
    var,
    variable_role,
)
from .parser import parse
from .tape import BACKEND, CompiledTape, compile_and_evaluate, compile_tape

__all__ = [
    "BACKEND",
    "CompiledTape",
    "Expr",
    "compile_and_evaluate",
    "compile_tape",
    "const",
    "differentiate",
    "evaluate",
    "free_variables",
    "node_count",
    "parse",
    "simplify",
    "substitute",
    "to_string",
    "var",
    "variable_role",
]
