"""Closed-form expressions from a small, safe grammar.

Grammar: numbers, the declared variable names, ``pi``, ``I``, the binary
operators ``+ - * / **`` (``^`` is read as power), unary minus, and calls to
``sin cos exp ln pow``.  Expressions are parsed with :mod:`ast`, checked
node by node, then handed to sympy for exact partial derivatives and
compiled to numpy with ``lambdify``.
"""

from __future__ import annotations

import ast
from typing import Sequence

import numpy as np
import sympy as sp

_FUNCS = {"sin": sp.sin, "cos": sp.cos, "exp": sp.exp, "ln": sp.log, "log": sp.log,
          "pow": sp.Pow}
_CONSTS = {"pi": sp.pi, "I": sp.I}


class ExpressionError(ValueError):
    pass


def _convert(node, symbols):
    if isinstance(node, ast.Expression):
        return _convert(node.body, symbols)
    if isinstance(node, ast.Constant) and type(node.value) in (int, float):
        return sp.Integer(node.value) if isinstance(node.value, int) else sp.Float(node.value)
    if isinstance(node, ast.Name):
        if node.id in symbols:
            return symbols[node.id]
        if node.id in _CONSTS:
            return _CONSTS[node.id]
        raise ExpressionError(f"unknown name {node.id!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        arg = _convert(node.operand, symbols)
        return -arg if isinstance(node.op, ast.USub) else arg
    if isinstance(node, ast.BinOp):
        lhs, rhs = _convert(node.left, symbols), _convert(node.right, symbols)
        op = type(node.op)
        if op is ast.Add:
            return lhs + rhs
        if op is ast.Sub:
            return lhs - rhs
        if op is ast.Mult:
            return lhs * rhs
        if op is ast.Div:
            return lhs / rhs
        if op in (ast.Pow, ast.BitXor):
            return lhs ** rhs
        raise ExpressionError(f"operator {op.__name__} not allowed")
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            name = getattr(node.func, "id", "?")
            raise ExpressionError(f"function {name!r} not allowed")
        if node.keywords:
            raise ExpressionError("keyword arguments not allowed")
        args = [_convert(a, symbols) for a in node.args]
        expected = 2 if node.func.id == "pow" else 1
        if len(args) != expected:
            raise ExpressionError(f"{node.func.id} takes {expected} argument(s)")
        return _FUNCS[node.func.id](*args)
    raise ExpressionError(f"unsupported syntax: {ast.dump(node)[:60]}")


def parse(text: str, variables: Sequence[str]) -> sp.Expr:
    symbols = {v: sp.Symbol(v) for v in variables}
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    return _convert(tree, symbols)


class ClosedForm:
    """A parsed expression in fixed variables, callable on numpy arrays."""

    def __init__(self, expr: str | sp.Expr, variables: Sequence[str]):
        self.variables = tuple(variables)
        self.expr = parse(expr, self.variables) if isinstance(expr, str) else sp.sympify(expr)
        self._symbols = [sp.Symbol(v) for v in self.variables]
        self._fn = sp.lambdify(self._symbols, self.expr, modules="numpy")

    def __call__(self, *args):
        if len(args) != len(self.variables):
            raise TypeError(f"expected {len(self.variables)} arguments, got {len(args)}")
        shape = np.broadcast(*[np.asarray(a) for a in args]).shape
        out = np.asarray(self._fn(*args), dtype=complex)
        return np.broadcast_to(out, shape).copy() if out.shape != shape else out

    def diff(self, var: str, n: int = 1) -> "ClosedForm":
        return ClosedForm(sp.diff(self.expr, sp.Symbol(var), n), self.variables)

    def __str__(self):
        return str(self.expr)

    def __repr__(self):
        return f"ClosedForm({self.expr!s}, {self.variables})"
