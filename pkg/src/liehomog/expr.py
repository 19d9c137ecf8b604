"""Tiny expression grammar for closed-form coefficient entries.

Supported: numeric constants, ``pi`` and ``e``; coordinates ``x, y, z`` or
``x1, x2, x3``; ``+ - * / **``; comparisons and ``and``/``or``/``not``;
the functions ``sin cos tan exp log sqrt abs floor mod frac min max``;
``where(cond, a, b)`` and ``piecewise(c1, v1, c2, v2, ..., default)``.

Expressions are compiled once into a numpy-vectorized callable.
"""

import ast

import numpy as np

from .exceptions import ValidationError

__all__ = ["compile_expression"]


def _piecewise(*args):
    if len(args) % 2 != 1:
        raise ValidationError("piecewise expects condition/value pairs followed by a default")
    out = args[-1]
    for cond, val in reversed(list(zip(args[:-1:2], args[1:-1:2]))):
        out = np.where(cond, val, out)
    return out


_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "floor": np.floor,
    "mod": np.mod,
    "frac": lambda v: np.mod(v, 1.0),
    "min": np.minimum,
    "max": np.maximum,
    "where": np.where,
    "piecewise": _piecewise,
}
_CONSTS = {"pi": np.pi, "e": np.e}
_COORDS = {"x": 0, "y": 1, "z": 2, "x1": 0, "x2": 1, "x3": 2}

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}
_CMPOPS = {
    ast.Lt: np.less,
    ast.LtE: np.less_equal,
    ast.Gt: np.greater,
    ast.GtE: np.greater_equal,
    ast.Eq: np.equal,
    ast.NotEq: np.not_equal,
}


def _build(node, src):
    if isinstance(node, ast.Expression):
        return _build(node.body, src)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        value = float(node.value)
        return lambda X: value
    if isinstance(node, ast.Name):
        if node.id in _CONSTS:
            value = _CONSTS[node.id]
            return lambda X: value
        if node.id in _COORDS:
            k = _COORDS[node.id]

            def coord(X, k=k):
                if k >= X.shape[1]:
                    raise ValidationError(f"coordinate {node.id!r} not available in dimension {X.shape[1]}")
                return X[:, k]

            return coord
        raise ValidationError(f"unknown name {node.id!r} in expression {src!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op, left, right = _BINOPS[type(node.op)], _build(node.left, src), _build(node.right, src)
        return lambda X: op(left(X), right(X))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd, ast.Not)):
        inner = _build(node.operand, src)
        if isinstance(node.op, ast.USub):
            return lambda X: np.negative(inner(X))
        if isinstance(node.op, ast.Not):
            return lambda X: np.logical_not(inner(X))
        return inner
    if isinstance(node, ast.Compare):
        parts = [_build(node.left, src)] + [_build(c, src) for c in node.comparators]
        ops = [_CMPOPS[type(o)] for o in node.ops if type(o) in _CMPOPS]
        if len(ops) != len(node.ops):
            raise ValidationError(f"unsupported comparison in {src!r}")

        def compare(X):
            vals = [p(X) for p in parts]
            out = True
            for op, a, b in zip(ops, vals, vals[1:]):
                out = np.logical_and(out, op(a, b))
            return out

        return compare
    if isinstance(node, ast.BoolOp):
        parts = [_build(v, src) for v in node.values]
        combine = np.logical_and if isinstance(node.op, ast.And) else np.logical_or

        def boolop(X):
            out = parts[0](X)
            for p in parts[1:]:
                out = combine(out, p(X))
            return out

        return boolop
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
        if node.func.id not in _FUNCS:
            raise ValidationError(f"unknown function {node.func.id!r} in expression {src!r}")
        fn, args = _FUNCS[node.func.id], [_build(a, src) for a in node.args]
        return lambda X: fn(*[a(X) for a in args])
    raise ValidationError(f"unsupported syntax in expression {src!r}")


def compile_expression(src):
    """Compile ``src`` into ``f(points) -> values`` with ``points`` of shape ``(N, dim)``."""
    try:
        tree = ast.parse(str(src).strip(), mode="eval")
    except SyntaxError as exc:
        raise ValidationError(f"cannot parse expression {src!r}: {exc.msg}") from None
    fn = _build(tree, src)

    def evaluate(points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.broadcast_to(np.asarray(fn(points), dtype=float), (points.shape[0],)).copy()

    evaluate.source = str(src)
    return evaluate
