"""Small expression language with forward-mode derivative propagation.

Grammar (EBNF, whitespace insensitive, left associative):

    expr   := term (("+"|"-") term)*
    term   := factor (("*"|"/") factor)*
    factor := "-"? power
    power  := atom ("^" int)?
    atom   := number | name | name "(" expr ("," expr)? ")" | "(" expr ")"

Exponents are literal integers only, so derivatives stay exact and domains
stay simple.  Calls are restricted to a fixed set of functions; every other
name must be a declared coordinate or parameter.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

__all__ = [
    "ExprAst",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Pow",
    "Call",
    "ParseError",
    "DomainError",
    "FUNCTIONS",
    "parse",
    "eval_grad",
    "compile_eval",
    "pretty",
    "substitute",
    "variables",
]

# arity of every callable name; anything else is a coordinate/parameter
FUNCTIONS: dict[str, int] = {
    "sin": 1,
    "cos": 1,
    "tan": 1,
    "exp": 1,
    "log": 1,
    "sqrt": 1,
    "atan2": 2,
}


class ParseError(ValueError):
    """Raised for any malformed input; carries the byte offset."""

    def __init__(self, offset: int, expected: tuple[str, ...], message: str):
        self.offset = offset
        self.expected = expected
        self.message = message
        super().__init__(f"{message} at offset {offset} (expected {', '.join(expected)})")


class DomainError(ArithmeticError):
    """Evaluation hit an undefined value (log of non-positive, division by zero, ...)."""

    def __init__(self, message: str, pos: int):
        self.pos = pos
        super().__init__(f"{message} (expression offset {pos})")


@dataclass(frozen=True)
class ExprAst:
    # source offset; diagnostic only, excluded from structural equality
    pos: int = field(compare=False)


@dataclass(frozen=True)
class Num(ExprAst):
    value: float


@dataclass(frozen=True)
class Var(ExprAst):
    name: str


@dataclass(frozen=True)
class Neg(ExprAst):
    arg: ExprAst


@dataclass(frozen=True)
class BinOp(ExprAst):
    op: str  # one of + - * /
    left: ExprAst
    right: ExprAst


@dataclass(frozen=True)
class Pow(ExprAst):
    base: ExprAst
    exponent: int


@dataclass(frozen=True)
class Call(ExprAst):
    func: str
    args: tuple[ExprAst, ...]


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(src: str) -> list[tuple[str, str, int]]:
    tokens = []
    i = 0
    n = len(src)
    while i < n:
        m = _TOKEN_RE.match(src, i)
        if m is None or m.lastgroup is None:
            # skip trailing whitespace before declaring failure
            if src[i:].strip() == "":
                break
            bad = i + len(src[i:]) - len(src[i:].lstrip())
            raise ParseError(bad, ("token",), f"unexpected character {src[bad]!r}")
        kind = m.lastgroup
        text = m.group(kind)
        tokens.append((kind, text, m.start(kind)))
        i = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, src: str, declared: frozenset[str]):
        self.src = src
        self.declared = declared
        self.tokens = _tokenize(src)
        self.k = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.k]

    def advance(self) -> tuple[str, str, int]:
        tok = self.tokens[self.k]
        self.k += 1
        return tok

    def expect_op(self, op: str) -> None:
        kind, text, pos = self.peek()
        if kind != "op" or text != op:
            raise ParseError(pos, (op,), f"expected {op!r}")
        self.advance()

    def parse(self) -> ExprAst:
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(pos, ("end of input",), f"trailing input {text!r}")
        return node

    def expr(self) -> ExprAst:
        node = self.term()
        while True:
            kind, text, pos = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                node = BinOp(pos, text, node, self.term())
            else:
                return node

    def term(self) -> ExprAst:
        node = self.factor()
        while True:
            kind, text, pos = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                node = BinOp(pos, text, node, self.factor())
            else:
                return node

    def factor(self) -> ExprAst:
        kind, text, pos = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(pos, self.power())
        return self.power()

    def power(self) -> ExprAst:
        node = self.atom()
        kind, text, pos = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            node = Pow(pos, node, self.int_literal())
        return node

    def int_literal(self) -> int:
        sign = 1
        kind, text, pos = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            sign = -1
            kind, text, pos = self.peek()
        if kind != "num" or not re.fullmatch(r"\d+", text):
            raise ParseError(pos, ("integer",), "exponent must be a literal integer")
        self.advance()
        return sign * int(text)

    def atom(self) -> ExprAst:
        kind, text, pos = self.advance()
        if kind == "num":
            return Num(pos, float(text))
        if kind == "name":
            nxt_kind, nxt_text, _ = self.peek()
            if nxt_kind == "op" and nxt_text == "(":
                if text not in FUNCTIONS:
                    raise ParseError(pos, tuple(sorted(FUNCTIONS)), f"unknown function {text!r}")
                self.advance()
                args = [self.expr()]
                k2, t2, _ = self.peek()
                if k2 == "op" and t2 == ",":
                    self.advance()
                    args.append(self.expr())
                self.expect_op(")")
                arity = FUNCTIONS[text]
                if len(args) != arity:
                    raise ParseError(pos, (f"{arity} argument(s)",), f"{text} takes {arity} argument(s)")
                return Call(pos, text, tuple(args))
            if text in FUNCTIONS:
                raise ParseError(pos, ("(",), f"{text!r} is a function name")
            if text not in self.declared:
                raise ParseError(pos, tuple(sorted(self.declared)), f"undeclared name {text!r}")
            return Var(pos, text)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ParseError(pos, ("number", "name", "("), f"expected an operand, got {text!r}")


def parse(src: str, declared: Sequence[str] | frozenset[str]) -> ExprAst:
    """Parse ``src``; names must come from ``declared`` (coordinates and parameters)."""
    return _Parser(src, frozenset(declared)).parse()


def variables(ast: ExprAst) -> frozenset[str]:
    """All variable names occurring in the tree."""
    out: set[str] = set()

    def walk(node: ExprAst) -> None:
        if isinstance(node, Var):
            out.add(node.name)
        elif isinstance(node, Neg):
            walk(node.arg)
        elif isinstance(node, BinOp):
            walk(node.left)
            walk(node.right)
        elif isinstance(node, Pow):
            walk(node.base)
        elif isinstance(node, Call):
            for a in node.args:
                walk(a)

    walk(ast)
    return frozenset(out)


def substitute(ast: ExprAst, replacements: Mapping[str, ExprAst]) -> ExprAst:
    """Replace variables by subtrees (used to inline e.g. a potential V(r))."""
    if isinstance(ast, Var):
        return replacements.get(ast.name, ast)
    if isinstance(ast, Num):
        return ast
    if isinstance(ast, Neg):
        return Neg(ast.pos, substitute(ast.arg, replacements))
    if isinstance(ast, BinOp):
        return BinOp(ast.pos, ast.op, substitute(ast.left, replacements), substitute(ast.right, replacements))
    if isinstance(ast, Pow):
        return Pow(ast.pos, substitute(ast.base, replacements), ast.exponent)
    if isinstance(ast, Call):
        return Call(ast.pos, ast.func, tuple(substitute(a, replacements) for a in ast.args))
    raise TypeError(f"not an ExprAst: {ast!r}")


# ---------------------------------------------------------------------------
# evaluation with forward-mode duals


def _call_value(func: str, args: list[float], pos: int) -> float:
    if func == "sin":
        return math.sin(args[0])
    if func == "cos":
        return math.cos(args[0])
    if func == "tan":
        return math.tan(args[0])
    if func == "exp":
        return math.exp(args[0])
    if func == "log":
        if args[0] <= 0.0:
            raise DomainError(f"log of non-positive value {args[0]!r}", pos)
        return math.log(args[0])
    if func == "sqrt":
        if args[0] < 0.0:
            raise DomainError(f"sqrt of negative value {args[0]!r}", pos)
        return math.sqrt(args[0])
    if func == "atan2":
        if args[0] == 0.0 and args[1] == 0.0:
            raise DomainError("atan2(0, 0) is undefined", pos)
        return math.atan2(args[0], args[1])
    raise ValueError(f"unknown function {func!r}")


def eval_grad(
    ast: ExprAst,
    names: Sequence[str],
    values: Sequence[float],
    params: Mapping[str, float] | None = None,
) -> tuple[float, list[float]]:
    """Evaluate ``ast`` and its gradient with respect to ``names`` at ``values``.

    Parameters carry zero gradient.  The gradient is exact for the expression
    (dual-number propagation, no finite differences).
    """
    params = params or {}
    index = {name: i for i, name in enumerate(names)}
    n = len(names)

    def ev(node: ExprAst) -> tuple[float, list[float]]:
        if isinstance(node, Num):
            return node.value, [0.0] * n
        if isinstance(node, Var):
            if node.name in index:
                g = [0.0] * n
                g[index[node.name]] = 1.0
                return float(values[index[node.name]]), g
            return float(params[node.name]), [0.0] * n
        if isinstance(node, Neg):
            v, g = ev(node.arg)
            return -v, [-x for x in g]
        if isinstance(node, BinOp):
            va, ga = ev(node.left)
            vb, gb = ev(node.right)
            if node.op == "+":
                return va + vb, [x + y for x, y in zip(ga, gb)]
            if node.op == "-":
                return va - vb, [x - y for x, y in zip(ga, gb)]
            if node.op == "*":
                return va * vb, [x * vb + va * y for x, y in zip(ga, gb)]
            if vb == 0.0:
                raise DomainError("division by zero", node.pos)
            inv2 = 1.0 / (vb * vb)
            return va / vb, [(x * vb - va * y) * inv2 for x, y in zip(ga, gb)]
        if isinstance(node, Pow):
            v, g = ev(node.base)
            k = node.exponent
            if k == 0:
                return 1.0, [0.0] * n
            if v == 0.0 and k < 0:
                raise DomainError("zero raised to a negative power", node.pos)
            dv = k * v ** (k - 1)
            return v**k, [dv * x for x in g]
        if isinstance(node, Call):
            evaluated = [ev(a) for a in node.args]
            vals = [v for v, _ in evaluated]
            out = _call_value(node.func, vals, node.pos)
            if node.func == "atan2":
                (vy, gy), (vx, gx) = evaluated
                denom = vy * vy + vx * vx
                return out, [(vx * a - vy * b) / denom for a, b in zip(gy, gx)]
            v, g = evaluated[0]
            if node.func == "sin":
                d = math.cos(v)
            elif node.func == "cos":
                d = -math.sin(v)
            elif node.func == "tan":
                d = 1.0 + out * out
            elif node.func == "exp":
                d = out
            elif node.func == "log":
                d = 1.0 / v
            else:  # sqrt
                if out == 0.0:
                    raise DomainError("derivative of sqrt at zero", node.pos)
                d = 0.5 / out
            return out, [d * x for x in g]
        raise TypeError(f"not an ExprAst: {node!r}")

    return ev(ast)


# ---------------------------------------------------------------------------
# compilation: unrolled forward-mode code, ~30x faster than the tree walker


def compile_eval(
    ast: ExprAst,
    names: Sequence[str],
    params: Mapping[str, float] | None = None,
) -> Callable[[Sequence[float]], tuple[float, list[float]]]:
    """Compile ``ast`` into a function ``x -> (value, gradient)``.

    Semantically identical to :func:`eval_grad` with the same ``names`` and
    ``params`` (including raised ``DomainError``); used in flow integration and
    sampling loops where the tree walker is too slow.
    """
    params = dict(params or {})
    index = {name: i for i, name in enumerate(names)}
    n = len(names)
    lines: list[str] = []
    counter = [0]

    def fresh() -> str:
        counter[0] += 1
        return f"t{counter[0]}"

    def emit(node: ExprAst) -> tuple[str, list[str | None]]:
        # returns (value expression, gradient expressions with None meaning 0)
        if isinstance(node, Num):
            return repr(node.value), [None] * n
        if isinstance(node, Var):
            if node.name in index:
                g: list[str | None] = [None] * n
                g[index[node.name]] = "1.0"
                return f"x[{index[node.name]}]", g
            return repr(float(params[node.name])), [None] * n
        if isinstance(node, Neg):
            v, g = emit(node.arg)
            return f"(-({v}))", [None if x is None else f"(-({x}))" for x in g]
        if isinstance(node, BinOp):
            va, ga = emit(node.left)
            vb, gb = emit(node.right)
            ta, tb = fresh(), fresh()
            lines.append(f"    {ta} = {va}")
            lines.append(f"    {tb} = {vb}")
            if node.op == "+":
                return f"({ta} + {tb})", [_g_add(a, b) for a, b in zip(ga, gb)]
            if node.op == "-":
                return f"({ta} - {tb})", [_g_sub(a, b) for a, b in zip(ga, gb)]
            if node.op == "*":
                g = [
                    _g_add(
                        None if a is None else f"({a}) * {tb}",
                        None if b is None else f"{ta} * ({b})",
                    )
                    for a, b in zip(ga, gb)
                ]
                return f"({ta} * {tb})", g
            lines.append(f"    if {tb} == 0.0:")
            lines.append(f"        raise DomainError('division by zero', {node.pos})")
            ti = fresh()
            lines.append(f"    {ti} = 1.0 / {tb}")
            tv = fresh()
            lines.append(f"    {tv} = {ta} * {ti}")
            g = [
                _g_sub(
                    None if a is None else f"({a}) * {ti}",
                    None if b is None else f"{tv} * ({b}) * {ti}",
                )
                for a, b in zip(ga, gb)
            ]
            return tv, g
        if isinstance(node, Pow):
            v, g = emit(node.base)
            k = node.exponent
            if k == 0:
                return "1.0", [None] * n
            tb = fresh()
            lines.append(f"    {tb} = {v}")
            if k < 0:
                lines.append(f"    if {tb} == 0.0:")
                lines.append(f"        raise DomainError('zero raised to a negative power', {node.pos})")
            tv, td = fresh(), fresh()
            lines.append(f"    {tv} = {tb} ** {k}")
            lines.append(f"    {td} = {k} * {tb} ** {k - 1}")
            return tv, [None if x is None else f"{td} * ({x})" for x in g]
        if isinstance(node, Call):
            if node.func == "atan2":
                vy, gy = emit(node.args[0])
                vx, gx = emit(node.args[1])
                ty, tx = fresh(), fresh()
                lines.append(f"    {ty} = {vy}")
                lines.append(f"    {tx} = {vx}")
                td = fresh()
                lines.append(f"    {td} = {ty} * {ty} + {tx} * {tx}")
                lines.append(f"    if {td} == 0.0:")
                lines.append(f"        raise DomainError('atan2(0, 0) is undefined', {node.pos})")
                tv = fresh()
                lines.append(f"    {tv} = atan2({ty}, {tx})")
                g = [
                    None
                    if a is None and b is None
                    else f"({_g_sub(None if a is None else f'{tx} * ({a})', None if b is None else f'{ty} * ({b})')}) / {td}"
                    for a, b in zip(gy, gx)
                ]
                return tv, g
            v, g = emit(node.args[0])
            ta = fresh()
            lines.append(f"    {ta} = {v}")
            tv, td = fresh(), fresh()
            if node.func == "sin":
                lines.append(f"    {tv} = sin({ta})")
                lines.append(f"    {td} = cos({ta})")
            elif node.func == "cos":
                lines.append(f"    {tv} = cos({ta})")
                lines.append(f"    {td} = -sin({ta})")
            elif node.func == "tan":
                lines.append(f"    {tv} = tan({ta})")
                lines.append(f"    {td} = 1.0 + {tv} * {tv}")
            elif node.func == "exp":
                lines.append(f"    {tv} = exp({ta})")
                td = tv
            elif node.func == "log":
                lines.append(f"    if {ta} <= 0.0:")
                lines.append(f"        raise DomainError('log of non-positive value', {node.pos})")
                lines.append(f"    {tv} = log({ta})")
                lines.append(f"    {td} = 1.0 / {ta}")
            elif node.func == "sqrt":
                lines.append(f"    if {ta} < 0.0:")
                lines.append(f"        raise DomainError('sqrt of negative value', {node.pos})")
                lines.append(f"    {tv} = sqrt({ta})")
                lines.append(f"    if {tv} == 0.0:")
                lines.append(f"        raise DomainError('derivative of sqrt at zero', {node.pos})")
                lines.append(f"    {td} = 0.5 / {tv}")
            else:
                raise ValueError(f"unknown function {node.func!r}")
            return tv, [None if x is None else f"{td} * ({x})" for x in g]
        raise TypeError(f"not an ExprAst: {node!r}")

    value_expr, grad_exprs = emit(ast)
    grad_src = ", ".join("0.0" if gexpr is None else f"({gexpr})" for gexpr in grad_exprs)
    src = "def _compiled(x):\n" + "\n".join(lines) + f"\n    return ({value_expr}), [{grad_src}]\n"
    namespace: dict[str, object] = {
        "sin": math.sin,
        "cos": math.cos,
        "tan": math.tan,
        "exp": math.exp,
        "log": math.log,
        "sqrt": math.sqrt,
        "atan2": math.atan2,
        "DomainError": DomainError,
    }
    exec(compile(src, f"<expr:{pretty(ast)[:40]}>", "exec"), namespace)
    return namespace["_compiled"]  # type: ignore[return-value]


def _g_add(a: str | None, b: str | None) -> str | None:
    if a is None:
        return b
    if b is None:
        return a
    return f"({a}) + ({b})"


def _g_sub(a: str | None, b: str | None) -> str | None:
    if b is None:
        return a
    if a is None:
        return f"-({b})"
    return f"({a}) - ({b})"


# ---------------------------------------------------------------------------
# printing


def pretty(ast: ExprAst) -> str:
    """Render the tree back to source (parses to an equal tree)."""

    def prec(node: ExprAst) -> int:
        if isinstance(node, BinOp):
            return 1 if node.op in "+-" else 2
        if isinstance(node, Neg):
            return 3
        if isinstance(node, Pow):
            return 4
        return 5

    def render(node: ExprAst) -> str:
        if isinstance(node, Num):
            return repr(node.value)
        if isinstance(node, Var):
            return node.name
        if isinstance(node, Neg):
            inner = render(node.arg)
            if prec(node.arg) < prec(node):
                inner = f"({inner})"
            return f"-{inner}"
        if isinstance(node, BinOp):
            left = render(node.left)
            right = render(node.right)
            if prec(node.left) < prec(node):
                left = f"({left})"
            # subtraction/division associate left: parenthesize equal-precedence rhs
            if prec(node.right) < prec(node) or (prec(node.right) == prec(node) and node.op in "-/"):
                right = f"({right})"
            # "a + -b" needs parens to re-parse as written
            if isinstance(node.right, Neg):
                right = f"({right})"
            return f"{left} {node.op} {right}"
        if isinstance(node, Pow):
            base = render(node.base)
            if prec(node.base) <= prec(node):
                base = f"({base})"
            return f"{base}^{node.exponent}"
        if isinstance(node, Call):
            return f"{node.func}({', '.join(render(a) for a in node.args)})"
        raise TypeError(f"not an ExprAst: {ast!r}")

    return render(ast)
