"""Small arithmetic expression language used in family config files.

Expressions are parsed with :mod:`ast` against a whitelist and turned into
immutable trees. A tree can be printed back to source, evaluated directly,
or compiled into a Python callable for either scalar (``math``) or
vectorised (``numpy``) evaluation.

>>> e = parse_expression("sat(x1) + 0.5*v1")
>>> e.evaluate(x1=3.0, v1=0.0)
1.0
"""
from __future__ import annotations

import ast
import math
import operator as op
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ArityError, ExpressionSyntaxError, UnknownIdentifierError

# name -> (min args, max args or None for variadic)
FUNCTIONS: Dict[str, Tuple[int, Optional[int]]] = {
    "sin": (1, 1),
    "cos": (1, 1),
    "abs": (1, 1),
    "sat": (1, 1),
    "min": (2, None),
    "max": (2, None),
    "exp": (1, 1),
    "sqrt": (1, 1),
}

BINARY_OPERATORS = {
    ast.Add: ("+", op.add),
    ast.Sub: ("-", op.sub),
    ast.Mult: ("*", op.mul),
    ast.Div: ("/", op.truediv),
    ast.Pow: ("**", op.pow),
}

# x1..xd and v1..vm unless a caller passes its own variable set
DEFAULT_VARIABLE_PATTERN = re.compile(r"^[xv][1-9][0-9]*$")


def sat(u: float) -> float:
    return min(1.0, max(-1.0, u))


_SCALAR_FUNCS: Dict[str, Callable] = {
    "sin": math.sin,
    "cos": math.cos,
    "abs": abs,
    "sat": sat,
    "min": min,
    "max": max,
    "exp": math.exp,
    "sqrt": math.sqrt,
}

_NUMPY_FUNCS: Dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "abs": np.abs,
    "sat": lambda u: np.clip(u, -1.0, 1.0),
    "min": lambda *a: np.minimum.reduce(np.broadcast_arrays(*a)),
    "max": lambda *a: np.maximum.reduce(np.broadcast_arrays(*a)),
    "exp": np.exp,
    "sqrt": np.sqrt,
}

BACKENDS = {"math": _SCALAR_FUNCS, "numpy": _NUMPY_FUNCS}


# --- tree nodes -------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    args: Tuple["Node", ...]


Node = Union[Num, Var, Neg, BinOp, Call]

_OP_FUNCS = {sym: fn for sym, fn in BINARY_OPERATORS.values()}


def to_source(node: Node) -> str:
    """Fully parenthesised source text; parsing it again gives an equal tree value."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_source(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    return f"{node.func}({', '.join(to_source(a) for a in node.args)})"


def evaluate_node(node: Node, env: Mapping[str, float]) -> float:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Neg):
        return -evaluate_node(node.operand, env)
    if isinstance(node, BinOp):
        return _OP_FUNCS[node.op](evaluate_node(node.left, env), evaluate_node(node.right, env))
    return _SCALAR_FUNCS[node.func](*(evaluate_node(a, env) for a in node.args))


def free_variables(node: Node) -> FrozenSet[str]:
    if isinstance(node, Var):
        return frozenset((node.name,))
    if isinstance(node, Neg):
        return free_variables(node.operand)
    if isinstance(node, BinOp):
        return free_variables(node.left) | free_variables(node.right)
    if isinstance(node, Call):
        out: FrozenSet[str] = frozenset()
        for a in node.args:
            out |= free_variables(a)
        return out
    return frozenset()


@lru_cache(maxsize=None)
def compile_node(node: Node, argnames: Tuple[str, ...], backend: str = "math") -> Callable:
    """Compile ``node`` into ``f(*argnames)`` using the chosen backend's functions."""
    funcs = BACKENDS[backend]
    unknown = free_variables(node) - set(argnames)
    if unknown:
        raise UnknownIdentifierError(sorted(unknown)[0], source=to_source(node))
    namespace = {"__builtins__": {}}
    namespace.update({f"_f_{k}": v for k, v in funcs.items()})
    body = _emit(node)
    code = compile(f"lambda {', '.join(argnames)}: {body}", "<expression>", "eval")
    return eval(code, namespace)  # noqa: S307 - tree was built from the whitelist


def _emit(node: Node) -> str:
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{_emit(node.operand)})"
    if isinstance(node, BinOp):
        return f"({_emit(node.left)} {node.op} {_emit(node.right)})"
    return f"_f_{node.func}({', '.join(_emit(a) for a in node.args)})"


# --- public wrapper ---------------------------------------------------------


@dataclass(frozen=True)
class Expression:
    """A parsed expression together with the text it came from."""

    tree: Node
    source: str

    @property
    def variables(self) -> FrozenSet[str]:
        return free_variables(self.tree)

    def evaluate(self, env: Optional[Mapping[str, float]] = None, **values: float) -> float:
        scope = dict(env or {})
        scope.update(values)
        missing = self.variables - scope.keys()
        if missing:
            raise UnknownIdentifierError(sorted(missing)[0], source=self.source)
        return float(evaluate_node(self.tree, scope))

    def compile(self, argnames: Sequence[str], backend: str = "math") -> Callable:
        return compile_node(self.tree, tuple(argnames), backend)

    def __str__(self) -> str:
        return to_source(self.tree)


def _check_source(src: str) -> None:
    if not isinstance(src, str) or not src.strip():
        raise ExpressionSyntaxError("empty expression", source=str(src), position=0)
    for i, ch in enumerate(src):
        if ord(ch) > 127:
            raise ExpressionSyntaxError("non-ASCII character", source=src, position=i)


def _parse_tree(src: str) -> ast.expr:
    _check_source(src)
    try:
        return ast.parse(src.strip(), mode="eval").body
    except SyntaxError as e:
        pos = (e.offset - 1) if e.offset else None
        raise ExpressionSyntaxError(f"invalid syntax ({e.msg})", source=src, position=pos) from None


def _convert(node: ast.AST, src: str, allowed: Callable[[str], bool]) -> Node:
    pos = getattr(node, "col_offset", None)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionSyntaxError("only numeric literals are allowed", source=src, position=pos)
        value = float(node.value)
        if not math.isfinite(value):
            raise ExpressionSyntaxError("literal is not finite", source=src, position=pos)
        return Num(value)
    if isinstance(node, ast.Name):
        if node.id in FUNCTIONS or not allowed(node.id):
            raise UnknownIdentifierError(node.id, source=src, position=pos)
        return Var(node.id)
    if isinstance(node, ast.UnaryOp):
        operand = _convert(node.operand, src, allowed)
        if isinstance(node.op, ast.USub):
            return Neg(operand)
        if isinstance(node.op, ast.UAdd):
            return operand
    if isinstance(node, ast.BinOp) and type(node.op) in BINARY_OPERATORS:
        sym = BINARY_OPERATORS[type(node.op)][0]
        return BinOp(sym, _convert(node.left, src, allowed), _convert(node.right, src, allowed))
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.keywords:
            raise ExpressionSyntaxError("unsupported call", source=src, position=pos)
        name = node.func.id
        if name not in FUNCTIONS:
            raise UnknownIdentifierError(name, source=src, position=pos)
        lo, hi = FUNCTIONS[name]
        n = len(node.args)
        if n < lo or (hi is not None and n > hi):
            expected = str(lo) if hi == lo else f"at least {lo}"
            raise ArityError(name, expected, n, source=src, position=pos)
        return Call(name, tuple(_convert(a, src, allowed) for a in node.args))
    raise ExpressionSyntaxError(f"unsupported syntax {type(node).__name__}", source=src, position=pos)


def _allowed(variables: Optional[Iterable[str]]) -> Callable[[str], bool]:
    if variables is None:
        return lambda name: bool(DEFAULT_VARIABLE_PATTERN.match(name))
    names = frozenset(variables)
    return names.__contains__


def parse_expression(src: str, variables: Optional[Iterable[str]] = None) -> Expression:
    """
    Parse one expression.

    Parameters
    ----------
    src : str
        Non-empty ASCII text, e.g. ``"-2*x1 + sin(x1 - x2)"``.
    variables : iterable of str, optional
        Identifiers that may appear. Defaults to ``x1, x2, ...`` and ``v1, v2, ...``.

    Raises
    ------
    ExpressionSyntaxError, UnknownIdentifierError, ArityError
    """
    tree = _parse_tree(src)
    return Expression(_convert(tree, src, _allowed(variables)), src.strip())


def parse_expression_list(src: str, variables: Optional[Iterable[str]] = None) -> List[Expression]:
    """Parse ``"[e1, e2, ...]"`` (brackets optional) into a list of expressions."""
    tree = _parse_tree(src)
    allowed = _allowed(variables)
    items = tree.elts if isinstance(tree, (ast.List, ast.Tuple)) else [tree]
    if not items:
        raise ExpressionSyntaxError("empty expression list", source=src, position=0)
    out = []
    for item in items:
        text = ast.get_source_segment(src.strip(), item) or ast.unparse(item)
        out.append(Expression(_convert(item, src, allowed), text))
    return out
