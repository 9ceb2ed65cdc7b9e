"""Value expressions: tokenizer, recursive-descent parser, printer and evaluator.

Grammar::

    expr    := term (("+"|"-") term)*
    term    := factor (("*"|"/") factor)*
    factor  := "-" factor | primary
    primary := NUMBER | IDENT | IDENT "(" expr ("," expr)* ")" | "(" expr ")"

Evaluation works on Python floats and on numpy arrays alike, so the same
code path produces a single payoff or a whole column of the value table.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

__all__ = [
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "Expr",
    "ExpressionSyntaxError",
    "EvaluationError",
    "MissingVariableError",
    "DivisionByZeroError",
    "DomainError",
    "FUNCTIONS",
    "parse_expression",
    "to_text",
    "variables_of",
    "evaluate_expression",
]


class ExpressionSyntaxError(ValueError):
    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


class EvaluationError(ArithmeticError):
    """Base class for failures while evaluating an expression.

    ``index`` is the offending element when evaluating over an array.
    """

    def __init__(self, message: str, index: int | None = None):
        self.index = index
        if index is not None:
            message = f"{message} (element {index})"
        super().__init__(message)


class MissingVariableError(EvaluationError, KeyError):
    def __str__(self) -> str:
        return self.args[0]


class DivisionByZeroError(EvaluationError, ZeroDivisionError):
    pass


class DomainError(EvaluationError):
    pass


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Expr", ...]


Expr = Union[Num, Var, Neg, BinOp, Call]

# name -> (min arity, max arity); None means variadic
FUNCTIONS: dict[str, tuple[int, int | None]] = {
    "min": (2, None),
    "max": (2, None),
    "exp": (1, 1),
    "ln": (1, 1),
    "pow": (2, 2),
    "abs": (1, 1),
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/(),])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExpressionSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, pos = self.advance()
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            raise ExpressionSyntaxError(f"expected {value!r}, found {found}", pos, self.text)

    def parse(self) -> Expr:
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExpressionSyntaxError(f"unexpected token {text!r}", pos, self.text)
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(self.factor())
        return self.primary()

    def primary(self) -> Expr:
        kind, text, pos = self.advance()
        if kind == "number":
            return Num(float(text))
        if kind == "ident":
            if self.peek()[1] != "(":
                return Var(text)
            if text not in FUNCTIONS:
                raise ExpressionSyntaxError(f"unknown function {text!r}", pos, self.text)
            self.advance()
            args = [self.expr()]
            while self.peek()[1] == ",":
                self.advance()
                args.append(self.expr())
            self.expect(")")
            lo, hi = FUNCTIONS[text]
            if len(args) < lo or (hi is not None and len(args) > hi):
                raise ExpressionSyntaxError(
                    f"function {text!r} called with {len(args)} argument(s)", pos, self.text
                )
            return Call(text, tuple(args))
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise ExpressionSyntaxError(f"unexpected {found}", pos, self.text)


def parse_expression(text: str) -> Expr:
    """Parse ``text`` into an expression tree.

    Raises :class:`ExpressionSyntaxError` carrying the character position of
    the problem, including for unknown function names and bad arity.
    """
    if not text or not text.strip():
        raise ExpressionSyntaxError("empty expression", 0, text)
    return _Parser(text).parse()


def to_text(node: Expr) -> str:
    """Render ``node`` fully parenthesized; ``parse_expression`` inverts it."""
    if isinstance(node, Num):
        s = repr(float(node.value))
        return f"({s})" if node.value < 0 else s
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"-{to_text(node.operand)}"
    if isinstance(node, BinOp):
        return f"({to_text(node.left)} {node.op} {to_text(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_text(a) for a in node.args)})"
    raise TypeError(f"not an expression node: {node!r}")


def variables_of(node: Expr) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, Neg):
        return variables_of(node.operand)
    if isinstance(node, BinOp):
        return variables_of(node.left) | variables_of(node.right)
    if isinstance(node, Call):
        out: set[str] = set()
        for a in node.args:
            out |= variables_of(a)
        return out
    raise TypeError(f"not an expression node: {node!r}")


def _first_bad(mask) -> int | None:
    if np.ndim(mask) == 0:
        return None
    return int(np.flatnonzero(mask)[0])


def _eval(node: Expr, env: Mapping[str, object]):
    if isinstance(node, Num):
        return np.float64(node.value)
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise MissingVariableError(f"no value for variable {node.name!r}") from None
    if isinstance(node, Neg):
        return np.negative(_eval(node.operand, env))
    if isinstance(node, BinOp):
        a = _eval(node.left, env)
        b = _eval(node.right, env)
        if node.op == "+":
            return np.add(a, b)
        if node.op == "-":
            return np.subtract(a, b)
        if node.op == "*":
            return np.multiply(a, b)
        zero = np.equal(b, 0.0)
        if np.any(zero):
            raise DivisionByZeroError("division by zero", _first_bad(zero))
        return np.divide(a, b)
    if isinstance(node, Call):
        args = [_eval(a, env) for a in node.args]
        f = node.func
        if f == "min":
            out = args[0]
            for a in args[1:]:
                out = np.minimum(out, a)
            return out
        if f == "max":
            out = args[0]
            for a in args[1:]:
                out = np.maximum(out, a)
            return out
        if f == "exp":
            return np.exp(args[0])
        if f == "ln":
            bad = np.less_equal(args[0], 0.0)
            if np.any(bad):
                raise DomainError("ln of a non-positive number", _first_bad(bad))
            return np.log(args[0])
        if f == "pow":
            bad = np.logical_and(np.equal(args[0], 0.0), np.less(args[1], 0.0))
            if np.any(bad):
                raise DivisionByZeroError("zero raised to a negative power", _first_bad(bad))
            return np.power(args[0], args[1])
        if f == "abs":
            return np.abs(args[0])
    raise TypeError(f"not an expression node: {node!r}")


def evaluate_expression(node: Expr, assignment: Mapping[str, object]):
    """Evaluate ``node`` under ``assignment`` (variable name -> value).

    Values may be floats or equal-length numpy arrays; the result has the
    broadcast shape. Scalar input yields a Python float.

    Raises
    ------
    MissingVariableError
        A referenced variable has no value.
    DivisionByZeroError
        A divisor evaluates to exactly zero, or ``pow(0, negative)``.
    DomainError
        ``ln`` of a value <= 0.
    """
    env = {k: np.asarray(v, dtype=np.float64) if not np.isscalar(v) else np.float64(v)
           for k, v in assignment.items()}
    with np.errstate(over="ignore", invalid="ignore"):
        result = _eval(node, env)
    if np.ndim(result) == 0:
        return float(result)
    return result
