"""Symbolic expressions over chart coordinates.

Grammar (used by model files and the CLI):

    expr     := term (('+'|'-') term)*
    term     := factor (('*'|'/') factor)*
    factor   := ['-'] atom ['^' integer]
    atom     := rational | ident | '(' expr ')'
              | ('exp'|'sin'|'cos') '(' expr ')'
    rational := integer ['/' integer]

Expressions are immutable trees with light normalization in the
constructors (constant folding, flattening, zero/one elimination).  The
exact zero test canonicalizes rational-only expressions to a single
fraction of expanded polynomials; anything involving exp/sin/cos falls
back to seeded sampling and says so.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .polyring import Poly, RatFunc

_FUNCTIONS = ("exp", "sin", "cos")

_SAMPLE_COUNT = 32
_SAMPLE_TOL = 1e-12
_SAMPLE_SEED = 20120521
_SAMPLE_BOX = 2.0


class ExprError(ValueError):
    """Parse or lookup failure; ``offset`` is a byte position in the source."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} at byte {offset}"
        super().__init__(message)
        self.offset = offset


class NotRationalError(ValueError):
    """Raised when a transcendental expression reaches an exact-only path."""


class Chart:
    """Ordered coordinate names for one model."""

    __slots__ = ("names", "_index")

    def __init__(self, names: Iterable[str]):
        names = tuple(names)
        seen = set()
        for nm in names:
            if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", nm):
                raise ValueError(f"bad coordinate name {nm!r}")
            if nm in _FUNCTIONS:
                raise ValueError(f"coordinate name {nm!r} is reserved")
            if nm in seen:
                raise ValueError(f"duplicate coordinate name {nm!r}")
            seen.add(nm)
        self.names = names
        self._index = {nm: i for i, nm in enumerate(names)}

    def __len__(self) -> int:
        return len(self.names)

    def __eq__(self, other) -> bool:
        return isinstance(other, Chart) and self.names == other.names

    def __repr__(self) -> str:
        return f"Chart({', '.join(self.names)})"

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown coordinate {name!r}") from None

    def extend(self, extra: Iterable[str]) -> "Chart":
        return Chart(self.names + tuple(extra))

    def direction_extension(self, prefix: str = "v") -> "Chart":
        """Chart followed by one direction component name per coordinate."""
        extra = []
        for i in range(len(self.names)):
            nm = f"{prefix}{i + 1}"
            if nm in self._index:
                nm = f"{prefix}_{self.names[i]}"
            extra.append(nm)
        return self.extend(extra)


@dataclass(frozen=True)
class Point:
    """A chart point; values are Fractions when given exactly."""

    chart: Chart
    values: tuple

    @classmethod
    def of(cls, chart: Chart, values: Sequence) -> "Point":
        if len(values) != len(chart):
            raise ValueError(f"expected {len(chart)} values, got {len(values)}")
        coerced = tuple(Fraction(v) if isinstance(v, int) else v for v in values)
        return cls(chart, coerced)

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)


class Expression:
    """Immutable expression tree node."""

    __slots__ = ("kind", "args", "value")

    def __init__(self, kind: str, args: tuple = (), value=None):
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "args", args)
        object.__setattr__(self, "value", value)

    def __setattr__(self, *_):
        raise AttributeError("Expression is immutable")

    # Arithmetic sugar so geometry code reads like formulas.
    def __add__(self, other):
        return add(self, _as_expr(other))

    def __radd__(self, other):
        return add(_as_expr(other), self)

    def __sub__(self, other):
        return add(self, neg(_as_expr(other)))

    def __rsub__(self, other):
        return add(_as_expr(other), neg(self))

    def __mul__(self, other):
        return mul(self, _as_expr(other))

    def __rmul__(self, other):
        return mul(_as_expr(other), self)

    def __truediv__(self, other):
        return div(self, _as_expr(other))

    def __rtruediv__(self, other):
        return div(_as_expr(other), self)

    def __pow__(self, exponent: int):
        return pow_(self, exponent)

    def __neg__(self):
        return neg(self)

    def __repr__(self) -> str:
        return f"Expression<{_render(self, None)}>"

    @property
    def is_const(self) -> bool:
        return self.kind == "const"

    @property
    def is_rational_only(self) -> bool:
        return rational_only(self)


def _as_expr(x) -> Expression:
    if isinstance(x, Expression):
        return x
    if isinstance(x, (int, Fraction)):
        return const(x)
    raise TypeError(f"cannot treat {type(x).__name__} as Expression")


# -- smart constructors ------------------------------------------------


def const(value) -> Expression:
    return Expression("const", (), Fraction(value))


def variable(index: int) -> Expression:
    if index < 0:
        raise ValueError("negative variable index")
    return Expression("var", (), index)


ZERO = const(0)
ONE = const(1)


def add(*children: Expression) -> Expression:
    flat: list[Expression] = []
    acc = Fraction(0)
    for ch in children:
        if ch.kind == "add":
            for sub in ch.args:
                if sub.kind == "const":
                    acc += sub.value
                else:
                    flat.append(sub)
        elif ch.kind == "const":
            acc += ch.value
        else:
            flat.append(ch)
    if acc != 0:
        flat.append(const(acc))
    if not flat:
        return ZERO
    if len(flat) == 1:
        return flat[0]
    return Expression("add", tuple(flat))


def mul(*children: Expression) -> Expression:
    flat: list[Expression] = []
    acc = Fraction(1)
    for ch in children:
        if ch.kind == "mul":
            for sub in ch.args:
                if sub.kind == "const":
                    acc *= sub.value
                else:
                    flat.append(sub)
        elif ch.kind == "const":
            acc *= ch.value
        else:
            flat.append(ch)
    if acc == 0:
        return ZERO
    if acc != 1:
        flat.insert(0, const(acc))
    if not flat:
        return ONE
    if len(flat) == 1:
        return flat[0]
    return Expression("mul", tuple(flat))


def neg(e: Expression) -> Expression:
    return mul(const(-1), e)


def div(num: Expression, den: Expression) -> Expression:
    if den.kind == "const":
        if den.value == 0:
            raise ZeroDivisionError("division by constant zero")
        return mul(const(Fraction(1) / den.value), num)
    if num.kind == "const" and num.value == 0:
        return ZERO
    return Expression("div", (num, den))


def pow_(base: Expression, exponent: int) -> Expression:
    if not isinstance(exponent, int):
        raise TypeError("exponent must be an integer")
    if exponent == 0:
        return ONE
    if exponent == 1:
        return base
    if base.kind == "const":
        if exponent < 0 and base.value == 0:
            raise ZeroDivisionError("division by constant zero")
        return const(base.value**exponent)
    if exponent < 0:
        return div(ONE, pow_(base, -exponent))
    if base.kind == "pow":
        return pow_(base.args[0], base.value * exponent)
    return Expression("pow", (base,), exponent)


def call(name: str, arg: Expression) -> Expression:
    if name not in _FUNCTIONS:
        raise ValueError(f"unknown function {name!r}")
    if arg.kind == "const" and arg.value == 0:
        return {"exp": ONE, "sin": ZERO, "cos": ONE}[name]
    return Expression(name, (arg,))


# -- structural queries --------------------------------------------------


def rational_only(e: Expression) -> bool:
    if e.kind in _FUNCTIONS:
        return False
    return all(rational_only(a) for a in e.args)


def free_vars(e: Expression) -> set[int]:
    out: set[int] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if node.kind == "var":
            out.add(node.value)
        else:
            stack.extend(node.args)
    return out


def relabel_vars(e: Expression, mapping: dict[int, int]) -> Expression:
    """Rewrite variable indices; used to move 1-variable profiles into charts."""
    if e.kind == "var":
        return variable(mapping.get(e.value, e.value))
    if not e.args:
        return e
    new_args = tuple(relabel_vars(a, mapping) for a in e.args)
    if e.kind == "add":
        return add(*new_args)
    if e.kind == "mul":
        return mul(*new_args)
    if e.kind == "div":
        return div(*new_args)
    if e.kind == "pow":
        return pow_(new_args[0], e.value)
    return call(e.kind, new_args[0])


# -- calculus ------------------------------------------------------------


def differentiate(e: Expression, index: int) -> Expression:
    k = e.kind
    if k == "const":
        return ZERO
    if k == "var":
        return ONE if e.value == index else ZERO
    if k == "add":
        return add(*(differentiate(a, index) for a in e.args))
    if k == "mul":
        parts = []
        for i, a in enumerate(e.args):
            da = differentiate(a, index)
            if da.kind == "const" and da.value == 0:
                continue
            rest = e.args[:i] + e.args[i + 1 :]
            parts.append(mul(da, *rest))
        return add(*parts) if parts else ZERO
    if k == "div":
        u, v = e.args
        du, dv = differentiate(u, index), differentiate(v, index)
        return div(mul(du, v) - mul(u, dv), mul(v, v))
    if k == "pow":
        base, n = e.args[0], e.value
        return mul(const(n), pow_(base, n - 1), differentiate(base, index))
    arg = e.args[0]
    darg = differentiate(arg, index)
    if darg.kind == "const" and darg.value == 0:
        return ZERO
    if k == "exp":
        return mul(call("exp", arg), darg)
    if k == "sin":
        return mul(call("cos", arg), darg)
    if k == "cos":
        return neg(mul(call("sin", arg), darg))
    raise ValueError(f"unknown node kind {k!r}")


def evaluate(e: Expression, point) -> object:
    """Evaluate at a Point or plain value sequence.

    Exact (Fraction) when the expression is rational-only and all inputs
    are Fractions/ints; float as soon as either side involves floats or
    transcendental functions.
    """
    values = point.values if isinstance(point, Point) else point
    memo: dict[int, object] = {}

    def walk(node: Expression):
        got = memo.get(id(node))
        if got is not None:
            return got
        k = node.kind
        if k == "const":
            r = node.value
        elif k == "var":
            try:
                r = values[node.value]
            except IndexError:
                raise ExprError(f"point has no value for variable #{node.value}") from None
        elif k == "add":
            r = sum(walk(a) for a in node.args)
        elif k == "mul":
            r = 1
            for a in node.args:
                r = r * walk(a)
        elif k == "div":
            num, den = walk(node.args[0]), walk(node.args[1])
            if den == 0:
                raise ZeroDivisionError("pole encountered during evaluation")
            r = num / den
        elif k == "pow":
            r = walk(node.args[0]) ** node.value
        elif k == "exp":
            r = math.exp(walk(node.args[0]))
        elif k == "sin":
            r = math.sin(walk(node.args[0]))
        else:
            r = math.cos(walk(node.args[0]))
        memo[id(node)] = r
        return r

    return walk(e)


def to_ratfunc(e: Expression, nvars: int) -> RatFunc:
    """Canonical single-fraction form; raises NotRationalError on exp/sin/cos."""
    memo: dict[int, RatFunc] = {}

    def walk(node: Expression) -> RatFunc:
        got = memo.get(id(node))
        if got is not None:
            return got
        k = node.kind
        if k == "const":
            r = RatFunc.const(nvars, node.value)
        elif k == "var":
            if node.value >= nvars:
                raise ExprError(f"variable #{node.value} outside chart of size {nvars}")
            r = RatFunc.var(nvars, node.value)
        elif k == "add":
            r = walk(node.args[0])
            for a in node.args[1:]:
                r = r + walk(a)
        elif k == "mul":
            r = walk(node.args[0])
            for a in node.args[1:]:
                r = r * walk(a)
        elif k == "div":
            r = walk(node.args[0]) / walk(node.args[1])
        elif k == "pow":
            r = walk(node.args[0]) ** node.value
        else:
            raise NotRationalError(f"{k} is not a rational operation")
        memo[id(node)] = r
        return r

    return walk(e)


@dataclass(frozen=True)
class ZeroCheck:
    """Outcome of is_zero; truthy iff the expression appears to vanish."""

    zero: bool
    exact: bool
    method: str

    def __bool__(self) -> bool:
        return self.zero


def is_zero(e: Expression, nvars: int | None = None) -> ZeroCheck:
    """Decide whether e vanishes identically.

    Rational-only expressions are decided exactly by expanding to a single
    fraction of expanded polynomials.  Otherwise the expression is sampled
    at 32 seeded points in [-2, 2]^m with tolerance 1e-12 and the verdict
    is flagged as probabilistic.
    """
    if nvars is None:
        fv = free_vars(e)
        nvars = (max(fv) + 1) if fv else 0
    try:
        rf = to_ratfunc(e, nvars)
        return ZeroCheck(rf.is_zero, True, "rational-normal-form")
    except NotRationalError:
        pass
    rng = np.random.default_rng(_SAMPLE_SEED)
    done = 0
    attempts = 0
    while done < _SAMPLE_COUNT:
        attempts += 1
        if attempts > 40 * _SAMPLE_COUNT:
            raise ExprError("could not sample away from poles")
        pt = [float(t) for t in rng.uniform(-_SAMPLE_BOX, _SAMPLE_BOX, size=max(nvars, 1))]
        try:
            val = evaluate(e, pt)
        except ZeroDivisionError:
            continue
        done += 1
        if abs(val) > _SAMPLE_TOL:
            return ZeroCheck(False, False, "sampled")
    return ZeroCheck(True, False, "sampled")


# -- parsing -------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<int>\d+)|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(src: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None or m.end() == pos:
            stripped = src[pos:].lstrip()
            if not stripped:
                break
            at = len(src) - len(stripped)
            raise ExprError(f"unexpected character {stripped[0]!r}", at)
        if m.lastgroup is not None:
            kind = m.lastgroup
            text = m.group(kind)
            tokens.append((kind, text, m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, tokens: list[tuple[str, str, int]], chart: Chart):
        self.tokens = tokens
        self.chart = chart
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, text, offset = self.peek()
        if kind != "op" or text != op:
            raise ExprError(f"expected {op!r}", offset)
        return self.take()

    def expr(self) -> Expression:
        node = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.take()
                rhs = self.term()
                node = node + rhs if text == "+" else node - rhs
            else:
                return node

    def term(self) -> Expression:
        node = self.factor()
        while True:
            kind, text, offset = self.peek()
            if kind == "op" and text in "*/":
                self.take()
                rhs = self.factor()
                if text == "*":
                    node = node * rhs
                else:
                    try:
                        node = node / rhs
                    except ZeroDivisionError:
                        raise ExprError("division by constant zero", offset) from None
            else:
                return node

    def factor(self) -> Expression:
        kind, text, _ = self.peek()
        negate = False
        if kind == "op" and text == "-":
            self.take()
            negate = True
        node = self.atom()
        kind, text, offset = self.peek()
        if kind == "op" and text == "^":
            self.take()
            node = self._apply_power(node, offset)
        return neg(node) if negate else node

    def _apply_power(self, base: Expression, caret_offset: int) -> Expression:
        sign = 1
        kind, text, offset = self.peek()
        if kind == "op" and text == "-":
            self.take()
            sign = -1
            kind, text, offset = self.peek()
        if kind != "int":
            raise ExprError("expected integer exponent", offset)
        self.take()
        try:
            return pow_(base, sign * int(text))
        except ZeroDivisionError:
            raise ExprError("division by constant zero", caret_offset) from None

    def atom(self) -> Expression:
        kind, text, offset = self.take()
        if kind == "int":
            return const(int(text))
        if kind == "ident":
            if text in _FUNCTIONS:
                self.expect_op("(")
                inner = self.expr()
                self.expect_op(")")
                return call(text, inner)
            try:
                return variable(self.chart.index(text))
            except KeyError:
                raise ExprError(f"unknown identifier {text!r}", offset) from None
        if kind == "op" and text == "(":
            inner = self.expr()
            self.expect_op(")")
            return inner
        if kind == "end":
            raise ExprError("unexpected end of input", offset)
        raise ExprError(f"unexpected token {text!r}", offset)


def parse(src: str, chart: Chart) -> Expression:
    """Parse one expression over the chart; ExprError carries a byte offset."""
    parser = _Parser(_tokenize(src), chart)
    node = parser.expr()
    kind, text, offset = parser.peek()
    if kind != "end":
        raise ExprError(f"unexpected token {text!r}", offset)
    return node


# -- printing ------------------------------------------------------------


def _name_of(index: int, chart: Chart | None) -> str:
    if chart is None:
        return f"x{index + 1}"
    return chart.names[index]


def _render_const(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def _atomic(e: Expression) -> bool:
    return e.kind in ("var", "exp", "sin", "cos") or (
        e.kind == "const" and e.value >= 0
    )


def _render(e: Expression, chart: Chart | None) -> str:
    k = e.kind
    if k == "const":
        return _render_const(e.value)
    if k == "var":
        return _name_of(e.value, chart)
    if k == "add":
        parts = [_render(e.args[0], chart)]
        for a in e.args[1:]:
            txt = _render(a, chart)
            if txt.startswith("-"):
                parts.append(" - " + txt[1:])
            else:
                parts.append(" + " + txt)
        return "".join(parts)
    if k == "mul":
        args = e.args
        prefix = ""
        if len(args) > 1 and args[0].kind == "const" and args[0].value == -1:
            prefix = "-"
            args = args[1:]
        parts = []
        for a in args:
            txt = _render(a, chart)
            if a.kind == "add" or (a.kind == "const" and a.value < 0 and parts):
                txt = f"({txt})"
            parts.append(txt)
        joined = "*".join(parts)
        if prefix and joined.startswith("-"):
            return joined[1:]
        return prefix + joined
    if k == "div":
        num, den = e.args
        ntxt = _render(num, chart)
        if num.kind == "add":
            ntxt = f"({ntxt})"
        dtxt = _render(den, chart)
        if not _atomic(den):
            dtxt = f"({dtxt})"
        return f"{ntxt}/{dtxt}"
    if k == "pow":
        btxt = _render(e.args[0], chart)
        if not _atomic(e.args[0]):
            btxt = f"({btxt})"
        return f"{btxt}^{e.value}"
    return f"{k}({_render(e.args[0], chart)})"


def to_string(e: Expression, chart: Chart | None = None) -> str:
    """Grammar-conformant rendering; parse(to_string(e)) evaluates equally."""
    return _render(e, chart)


# -- compiled numeric evaluation -----------------------------------------


def compile_evaluator(exprs: Sequence[Expression], nvars: int) -> Callable:
    """Compile expressions into one fast float-valued function of the point.

    Shared subtrees (the expression builders produce DAGs) are emitted once
    into local temporaries, so generated source stays linear in DAG size.
    Returns f(values) -> list of floats; ZeroDivisionError propagates for
    poles.
    """
    lines: list[str] = []
    names: dict[int, str] = {}
    counter = [0]

    def emit(node: Expression) -> str:
        nm = names.get(id(node))
        if nm is not None:
            return nm
        k = node.kind
        if k == "const":
            return repr(float(node.value))
        if k == "var":
            return f"x[{node.value}]"
        if k == "add":
            src = "(" + " + ".join(emit(a) for a in node.args) + ")"
        elif k == "mul":
            src = "(" + "*".join(emit(a) for a in node.args) + ")"
        elif k == "div":
            src = f"({emit(node.args[0])}/{emit(node.args[1])})"
        elif k == "pow":
            src = f"({emit(node.args[0])}**{node.value})"
        else:
            src = f"_{k}({emit(node.args[0])})"
        nm = f"t{counter[0]}"
        counter[0] += 1
        lines.append(f"    {nm} = {src}")
        names[id(node)] = nm
        return nm

    results = [emit(e) for e in exprs]
    body = "\n".join(lines) if lines else "    pass"
    src = (
        "def _compiled(x, _exp=_exp, _sin=_sin, _cos=_cos):\n"
        f"{body}\n"
        f"    return [{', '.join(results)}]\n"
    )
    scope = {"_exp": math.exp, "_sin": math.sin, "_cos": math.cos}
    exec(compile(src, "<jacobispec-compiled>", "exec"), scope)
    return scope["_compiled"]
