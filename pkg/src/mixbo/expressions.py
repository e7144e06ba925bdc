"""A small, safe expression language for constraints, costs and objectives.

Expressions use Python syntax restricted to arithmetic (``+ - * / % **``,
with ``^`` accepted as a power operator), comparisons, ``and``/``or``/``not``,
numeric and string literals, variable names and a handful of math functions.
Evaluation is numpy-based, so the same compiled expression works on scalars
and on arrays of candidate values.
"""

import ast
import io
import operator
import tokenize

import numpy as np

from .exceptions import MalformedConfig

_FUNCTIONS = {
    "sqrt": np.sqrt,
    "exp": np.exp,
    "log": np.log,
    "log10": np.log10,
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "tanh": np.tanh,
    "abs": np.abs,
    "min": np.minimum,
    "max": np.maximum,
}
_CONSTANTS = {"pi": np.pi, "e": np.e}

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Mod: operator.mod,
    ast.Pow: np.power,
}
_CMPOPS = {
    ast.Lt: operator.lt,
    ast.LtE: operator.le,
    ast.Gt: operator.gt,
    ast.GtE: operator.ge,
    ast.Eq: operator.eq,
    ast.NotEq: operator.ne,
}


def _caret_to_pow(text):
    # ``^`` binds looser than ``+`` in Python, so swap the token before parsing
    try:
        toks = list(tokenize.generate_tokens(io.StringIO(text).readline))
    except (tokenize.TokenError, IndentationError):
        return text
    out = [(t.type, "**") if t.type == tokenize.OP and t.string == "^" else (t.type, t.string) for t in toks]
    return tokenize.untokenize(out)


def _eq(a, b):
    # object arrays of labels compare elementwise fine with ==, scalars too
    return np.asarray(a == b)


class Expression:
    """A compiled expression over a fixed set of variable names."""

    def __init__(self, text, names):
        self.text = text
        self.names = tuple(names)
        try:
            tree = ast.parse(_caret_to_pow(text.strip()).strip(), mode="eval")
        except SyntaxError as exc:
            raise MalformedConfig(f"cannot parse expression {text!r}: {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body

    def __repr__(self):
        return f"Expression({self.text!r})"

    def __eq__(self, other):
        return isinstance(other, Expression) and other.text == self.text

    def __hash__(self):
        return hash(self.text)

    def _check(self, node):
        if isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise MalformedConfig(f"operator {type(node.op).__name__} not allowed in {self.text!r}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.USub, ast.UAdd, ast.Not)):
                raise MalformedConfig(f"unary operator not allowed in {self.text!r}")
            self._check(node.operand)
        elif isinstance(node, ast.BoolOp):
            for v in node.values:
                self._check(v)
        elif isinstance(node, ast.Compare):
            for op in node.ops:
                if type(op) not in _CMPOPS:
                    raise MalformedConfig(f"comparison not allowed in {self.text!r}")
            self._check(node.left)
            for c in node.comparators:
                self._check(c)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
                raise MalformedConfig(f"unknown function in {self.text!r}")
            if node.keywords:
                raise MalformedConfig(f"keyword arguments not allowed in {self.text!r}")
            for a in node.args:
                self._check(a)
        elif isinstance(node, ast.Name):
            if node.id not in self.names and node.id not in _CONSTANTS:
                raise MalformedConfig(f"unknown name {node.id!r} in {self.text!r}")
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float, str, bool)):
                raise MalformedConfig(f"literal {node.value!r} not allowed in {self.text!r}")
        else:
            raise MalformedConfig(f"syntax {type(node).__name__} not allowed in {self.text!r}")

    def __call__(self, env):
        """Evaluate with ``env`` mapping variable names to scalars or arrays."""
        return self._eval(self._tree, env)

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return node.value
        if isinstance(node, ast.Name):
            if node.id in env:
                return env[node.id]
            return _CONSTANTS[node.id]
        if isinstance(node, ast.BinOp):
            left = self._eval(node.left, env)
            right = self._eval(node.right, env)
            if isinstance(node.op, (ast.Pow, ast.BitXor)):
                return np.power(np.asarray(left, dtype=float), right)
            return _BINOPS[type(node.op)](left, right)
        if isinstance(node, ast.UnaryOp):
            val = self._eval(node.operand, env)
            if isinstance(node.op, ast.USub):
                return -val
            if isinstance(node.op, ast.UAdd):
                return +val
            return np.logical_not(val)
        if isinstance(node, ast.BoolOp):
            combine = np.logical_and if isinstance(node.op, ast.And) else np.logical_or
            out = self._eval(node.values[0], env)
            for v in node.values[1:]:
                out = combine(out, self._eval(v, env))
            return out
        if isinstance(node, ast.Compare):
            left = self._eval(node.left, env)
            out = True
            for op, comp in zip(node.ops, node.comparators):
                right = self._eval(comp, env)
                if isinstance(op, ast.Eq):
                    res = _eq(left, right)
                elif isinstance(op, ast.NotEq):
                    res = np.logical_not(_eq(left, right))
                else:
                    res = _CMPOPS[type(op)](left, right)
                out = np.logical_and(out, res)
                left = right
            return out
        if isinstance(node, ast.Call):
            args = [self._eval(a, env) for a in node.args]
            fn = _FUNCTIONS[node.func.id]
            if fn in (np.minimum, np.maximum) and len(args) > 2:
                out = args[0]
                for a in args[1:]:
                    out = fn(out, a)
                return out
            return fn(*args)
        raise MalformedConfig(f"cannot evaluate {ast.dump(node)}")  # pragma: no cover
