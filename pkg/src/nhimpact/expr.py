"""Small arithmetic grammar for inline metric, potential, constraint and surface
expressions: numbers, coordinate names, named parameters, ``pi``,
``+ - * / **`` and the functions ``sin``, ``cos``, ``sqrt``.

Expressions are parsed with :mod:`ast` and compiled into closures; anything
outside the whitelist is rejected.
"""

from __future__ import annotations

import ast
import math
import operator
from typing import Callable, Mapping, Sequence, Union

import numpy as np

FUNCTIONS: dict[str, Callable[[float], float]] = {"sin": math.sin, "cos": math.cos, "sqrt": math.sqrt}
CONSTANTS = {"pi": math.pi}
_BINARY = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}

Expr = Union[str, int, float]


class ExpressionError(ValueError):
    pass


def compile_expression(text: Expr, names: Sequence[str], params: Mapping[str, float] | None = None) -> Callable[[np.ndarray], float]:
    """Compile ``text`` into ``q -> float`` where ``names[i]`` refers to ``q[i]``."""
    if isinstance(text, bool):
        raise ExpressionError("booleans are not expressions")
    if isinstance(text, (int, float)):
        value = float(text)
        return lambda q: value
    params = dict(params or {})
    index = {name: i for i, name in enumerate(names)}
    try:
        tree = ast.parse(str(text), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None

    def build(node) -> Callable[[np.ndarray], float]:
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            v = float(node.value)
            return lambda q: v
        if isinstance(node, ast.Name):
            if node.id in index:
                i = index[node.id]
                return lambda q: q[i]
            if node.id in params:
                v = float(params[node.id])
                return lambda q: v
            if node.id in CONSTANTS:
                v = CONSTANTS[node.id]
                return lambda q: v
            raise ExpressionError(f"unknown name {node.id!r} in {text!r}")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINARY:
            op, lhs, rhs = _BINARY[type(node.op)], build(node.left), build(node.right)
            return lambda q: op(lhs(q), rhs(q))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            op, arg = _UNARY[type(node.op)], build(node.operand)
            return lambda q: op(arg(q))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in FUNCTIONS:
            if len(node.args) != 1 or node.keywords:
                raise ExpressionError(f"{node.func.id} takes exactly one argument")
            fn, arg = FUNCTIONS[node.func.id], build(node.args[0])
            return lambda q: fn(arg(q))
        raise ExpressionError(f"unsupported syntax in {text!r}: {ast.dump(node)[:40]}")

    fn = build(tree.body)
    return lambda q: float(fn(q))


def is_numeric(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def compile_matrix(entries, names, params=None) -> tuple[Callable[[np.ndarray], np.ndarray], bool]:
    """Compile a nested list of expressions; returns (function, all_constant)."""
    rows = [list(r) for r in entries]
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise ExpressionError("matrix rows must be non-empty and of equal length")
    if all(is_numeric(v) for r in rows for v in r):
        mat = np.array(rows, dtype=float)
        mat.setflags(write=False)
        return (lambda q: mat), True
    cells = [[compile_expression(v, names, params) for v in r] for r in rows]
    return (lambda q: np.array([[c(q) for c in r] for r in cells])), False


def compile_vector(entries, names, params=None) -> tuple[Callable[[np.ndarray], np.ndarray], bool]:
    fn, const = compile_matrix([list(entries)], names, params)
    return (lambda q: fn(q)[0]), const
