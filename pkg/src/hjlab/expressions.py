"""Tiny expression language for problem files.

Grammar (infix, left-associative, usual precedence):

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := '-' unary | atom
    atom  := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

Names: ``t`` (current time), ``T`` (horizon, only inside state-read time
arguments), ``u1..``/``v1..`` (control components), ``y1..`` (state
components, optionally read at ``t``, ``t - d``, ``T``, ``T - d``, or
``min(t, c)``), plus the functions min, max, abs, sin, cos, exp, and
``step`` (step(x) = 1 if x >= 0 else 0) restricted to arguments of the
form ``t - c`` or ``c - t`` so the discontinuity time is statically known.

Division by a non-constant denominator is guarded at runtime; a constant
zero denominator is rejected at parse time.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ExpressionError

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/(),]))"
)

_FUNCTIONS = {"min", "max", "abs", "sin", "cos", "exp", "step"}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class TimeVar:
    pass


@dataclass(frozen=True)
class HorizonVar:
    pass


@dataclass(frozen=True)
class Control:
    side: str  # "u" or "v"
    index: int  # 1-based


@dataclass(frozen=True)
class StateRead:
    index: int  # 1-based component
    kind: str  # "current" | "lag" | "terminal" | "frozen-min"
    offset: float = 0.0  # lag d, terminal lag d, or the frozen cap c


@dataclass(frozen=True)
class Func:
    name: str
    args: tuple


@dataclass(frozen=True)
class Bin:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Neg:
    arg: object


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip() == "":
                break
            raise ExpressionError(f"unexpected character {text[pos]!r}", position=pos)
        if m.group("num") is not None:
            tokens.append(("num", float(m.group("num")), pos))
        elif m.group("name") is not None:
            tokens.append(("name", m.group("name"), pos))
        else:
            tokens.append(("op", m.group("op"), pos))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens, field=None):
        self.tokens = tokens
        self.i = 0
        self.field = field

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else ("end", None, -1)

    def next(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.next()
        if val != value:
            raise ExpressionError(f"expected {value!r}, found {val!r}", position=pos, field=self.field)

    def parse(self):
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExpressionError(f"trailing input {val!r}", position=pos, field=self.field)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.next()[1]
            node = Bin(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.next()[1]
            pos = self.peek()[2]
            right = self.unary()
            if op == "/" and isinstance(right, Num) and right.value == 0.0:
                raise ExpressionError("division by constant zero", position=pos, field=self.field)
            node = Bin(op, node, right)
        return node

    def unary(self):
        if self.peek()[1] == "-":
            self.next()
            return Neg(self.unary())
        return self.atom()

    def atom(self):
        kind, val, pos = self.next()
        if kind == "num":
            return Num(val)
        if val == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "name":
            if self.peek()[1] == "(":
                self.next()
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.next()
                    args.append(self.expr())
                self.expect(")")
                return self._call(val, args, pos)
            return self._bare_name(val, pos)
        raise ExpressionError(f"unexpected token {val!r}", position=pos, field=self.field)

    def _bare_name(self, name, pos):
        if name == "t":
            return TimeVar()
        if name == "T":
            return HorizonVar()
        if name == "tau":
            return TimeVar()  # history expressions use tau for the node time
        m = re.fullmatch(r"([uvy])(\d+)", name)
        if m:
            side, idx = m.group(1), int(m.group(2))
            if idx < 1:
                raise ExpressionError(f"component index must be >= 1 in {name!r}", position=pos, field=self.field)
            if side == "y":
                return StateRead(idx, "current")
            return Control(side, idx)
        raise ExpressionError(f"unknown name {name!r}", position=pos, field=self.field)

    def _call(self, name, args, pos):
        m = re.fullmatch(r"y(\d+)", name)
        if m:
            if len(args) != 1:
                raise ExpressionError(f"state read {name} takes one time argument", position=pos, field=self.field)
            return self._state_read(int(m.group(1)), args[0], pos)
        if name not in _FUNCTIONS:
            raise ExpressionError(f"unknown function {name!r}", position=pos, field=self.field)
        if name in ("abs", "sin", "cos", "exp", "step") and len(args) != 1:
            raise ExpressionError(f"{name} takes exactly one argument", position=pos, field=self.field)
        if name in ("min", "max") and len(args) < 2:
            raise ExpressionError(f"{name} takes at least two arguments", position=pos, field=self.field)
        if name == "step":
            _step_time(args[0], pos, self.field)  # validates the t - c shape
        return Func(name, tuple(args))

    def _state_read(self, idx, arg, pos):
        if isinstance(arg, TimeVar):
            return StateRead(idx, "current")
        if isinstance(arg, HorizonVar):
            return StateRead(idx, "terminal", 0.0)
        if isinstance(arg, Bin) and arg.op == "-":
            if isinstance(arg.left, TimeVar) and isinstance(arg.right, Num):
                if arg.right.value < 0:
                    raise ExpressionError("lag must be non-negative", position=pos, field=self.field)
                return StateRead(idx, "lag", arg.right.value)
            if isinstance(arg.left, HorizonVar) and isinstance(arg.right, Num):
                if arg.right.value < 0:
                    raise ExpressionError("terminal lag must be non-negative", position=pos, field=self.field)
                return StateRead(idx, "terminal", arg.right.value)
        if isinstance(arg, Func) and arg.name == "min" and len(arg.args) == 2:
            a, b = arg.args
            if isinstance(a, TimeVar) and isinstance(b, Num):
                return StateRead(idx, "frozen-min", b.value)
            if isinstance(b, TimeVar) and isinstance(a, Num):
                return StateRead(idx, "frozen-min", a.value)
        raise ExpressionError(
            f"state read time must be t, t - d, T, T - d, or min(t, c); got y{idx}(...)",
            position=pos,
            field=self.field,
        )


def _step_time(arg, pos, fieldname):
    """Discontinuity time of a step argument of the form t - c or c - t."""
    if isinstance(arg, TimeVar):
        return 0.0
    if isinstance(arg, Bin) and arg.op == "-":
        if isinstance(arg.left, TimeVar) and isinstance(arg.right, Num):
            return arg.right.value
        if isinstance(arg.left, Num) and isinstance(arg.right, TimeVar):
            return arg.left.value
    raise ExpressionError(
        "step() argument must be of the form t - c or c - t with constant c",
        position=pos,
        field=fieldname,
    )


def parse_expression(text: str, field: str | None = None):
    try:
        tokens = _tokenize(text)
    except ExpressionError as exc:
        exc.field = field
        raise
    if not tokens:
        raise ExpressionError("empty expression", field=field)
    return _Parser(tokens, field=field).parse()


def walk(node):
    yield node
    for child in getattr(node, "args", ()) or ():
        yield from walk(child)
    for attr in ("left", "right", "arg"):
        child = getattr(node, attr, None)
        if child is not None:
            yield from walk(child)


def collect_lags(node) -> set[float]:
    return {
        sub.offset for sub in walk(node) if isinstance(sub, StateRead) and sub.kind == "lag"
    }


def collect_terminal_lags(node) -> set[float]:
    return {
        sub.offset
        for sub in walk(node)
        if isinstance(sub, StateRead) and sub.kind == "terminal"
    }


def collect_step_times(node) -> set[float]:
    out = set()
    for sub in walk(node):
        if isinstance(sub, Func) and sub.name == "step":
            out.add(_step_time(sub.args[0], None, None))
    return out


def uses(node, kinds) -> bool:
    for sub in walk(node):
        if isinstance(sub, Control) and "control" in kinds:
            return True
        if isinstance(sub, StateRead) and sub.kind in kinds:
            return True
        if isinstance(sub, TimeVar) and "time" in kinds:
            return True
    return False


def validate_context(node, context: str, n: int, field: str | None = None):
    """Reject reads that the given context does not allow."""
    allowed = {
        "dynamics": {"current", "lag"},
        "sigma": {"terminal"},
        "phi": {"current", "lag", "frozen-min"},
        "history": set(),
    }[context]
    for sub in walk(node):
        if isinstance(sub, StateRead):
            if sub.kind not in allowed:
                raise ExpressionError(
                    f"{context} expressions may not contain y-reads of kind {sub.kind!r}",
                    field=field,
                )
            if sub.index > n:
                raise ExpressionError(
                    f"state component y{sub.index} exceeds dimension n={n}", field=field
                )
        if isinstance(sub, Control) and context in ("sigma", "phi", "history"):
            raise ExpressionError(f"{context} expressions may not contain controls", field=field)
        if isinstance(sub, HorizonVar) and context in ("dynamics", "history"):
            raise ExpressionError(f"{context} expressions may not use T", field=field)
        if isinstance(sub, TimeVar) and context == "sigma":
            raise ExpressionError("sigma expressions may not depend on t", field=field)


def is_zero(node) -> bool:
    return isinstance(node, Num) and node.value == 0.0


_SCALAR_FUNCS = {
    "abs": abs,
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
}


def _apply_func(name, vals):
    if name == "min":
        out = vals[0]
        for v in vals[1:]:
            out = np.minimum(out, v)
        return out
    if name == "max":
        out = vals[0]
        for v in vals[1:]:
            out = np.maximum(out, v)
        return out
    if name == "abs":
        return np.abs(vals[0])
    if name == "sin":
        return np.sin(vals[0])
    if name == "cos":
        return np.cos(vals[0])
    if name == "exp":
        return np.exp(vals[0])
    if name == "step":
        return np.where(np.asarray(vals[0]) >= 0.0, 1.0, 0.0)
    raise ExpressionError(f"unknown function {name!r}")


def evaluate(node, env):
    """Evaluate an AST against an environment.

    env must provide: ``time()``, ``horizon()``, ``control(side, idx)``,
    ``state(read: StateRead)``.  Values may be scalars or numpy arrays;
    all operators broadcast.
    """
    if isinstance(node, Num):
        return node.value
    if isinstance(node, TimeVar):
        return env.time()
    if isinstance(node, HorizonVar):
        return env.horizon()
    if isinstance(node, Control):
        return env.control(node.side, node.index)
    if isinstance(node, StateRead):
        return env.state(node)
    if isinstance(node, Neg):
        return -evaluate(node.arg, env)
    if isinstance(node, Func):
        return _apply_func(node.name, [evaluate(a, env) for a in node.args])
    if isinstance(node, Bin):
        a = evaluate(node.left, env)
        b = evaluate(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            if np.any(np.abs(np.asarray(b)) < 1e-12):
                raise DomainError("runtime division guard: denominator too close to 0")
            return a / b
    raise ExpressionError(f"cannot evaluate node {node!r}")
