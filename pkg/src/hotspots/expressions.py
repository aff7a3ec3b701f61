"""A small, safe arithmetic expression language for initial data in configs.

Expressions are parsed with :mod:`ast` and only numeric literals, a fixed set
of variable names, the operators ``+ - * / **`` and the functions listed in
``FUNCTIONS`` are accepted.  They evaluate elementwise on numpy arrays.

Variables for function-form data are the coordinates ``x1 .. xN`` (with the
aliases ``x, y, z`` for N <= 3) and ``r = |x|``; mode profiles use ``r``.
"""
from __future__ import annotations

import ast
import operator
from typing import Callable, Iterable

import numpy as np

from .errors import ConfigError

__all__ = ["FUNCTIONS", "CONSTANTS", "compile_expression", "function_of_x", "function_of_r"]

FUNCTIONS = {
    "exp": np.exp, "sqrt": np.sqrt, "log": np.log, "abs": np.abs,
    "cos": np.cos, "sin": np.sin, "tanh": np.tanh, "cosh": np.cosh,
}
CONSTANTS = {"pi": np.pi, "e": np.e}

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}


def compile_expression(text: str, variables: Iterable[str], key: str | None = None) -> Callable:
    """Compile ``text`` into ``f(env) -> array`` where ``env`` maps variable names to arrays."""
    names = set(variables)
    try:
        tree = ast.parse(str(text), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}", key) from exc

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            v = float(node.value)
            return lambda env: v
        if isinstance(node, ast.Name):
            if node.id in names:
                return lambda env, n=node.id: env[n]
            if node.id in CONSTANTS:
                v = CONSTANTS[node.id]
                return lambda env: v
            raise ConfigError(f"unknown name {node.id!r} in expression {text!r}", key)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            op, a, b = _BINOPS[type(node.op)], build(node.left), build(node.right)
            return lambda env: op(a(env), b(env))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            op, a = _UNOPS[type(node.op)], build(node.operand)
            return lambda env: op(a(env))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id in FUNCTIONS and len(node.args) == 1 and not node.keywords:
            f, a = FUNCTIONS[node.func.id], build(node.args[0])
            return lambda env: f(a(env))
        raise ConfigError(f"unsupported construct {type(node).__name__} in expression {text!r}", key)

    return build(tree)


def function_of_x(text: str, N: int, key: str | None = None) -> Callable:
    """Vectorized ``phi(x)`` for points of shape (..., N)."""
    coords = [f"x{i + 1}" for i in range(N)]
    aliases = ["x", "y", "z"][:N] if N <= 3 else []
    f = compile_expression(text, coords + aliases + ["r"], key)

    def phi(x):
        x = np.asarray(x, dtype=float)
        env = {c: x[..., i] for i, c in enumerate(coords)}
        env.update({a: x[..., i] for i, a in enumerate(aliases)})
        env["r"] = np.linalg.norm(x, axis=-1)
        return np.broadcast_to(np.asarray(f(env), dtype=float), x.shape[:-1])

    return phi


def function_of_r(text: str, key: str | None = None) -> Callable:
    """Vectorized radial profile ``g(r)``."""
    f = compile_expression(text, ["r"], key)

    def g(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(all="ignore"):
            return np.broadcast_to(np.asarray(f({"r": r}), dtype=float), r.shape)

    return g
