"""Scalar expressions: parser, evaluator, exact symbolic differentiation.

Grammar (EBNF, whitespace ignored between tokens)::

    expr    = term , { ("+" | "-") , term } ;
    term    = power , { ("*" | "/") , power } ;
    power   = unary , [ "^" , power ] ;            (* right associative *)
    unary   = "-" , unary | primary ;              (* binds tighter than ^ *)
    primary = number | name | call | "(" , expr , ")" ;
    call    = func , "(" , expr , [ "," , expr ] , ")" ;
    func    = "exp" | "log" | "sin" | "cos" | "tan" | "sqrt" | "abs" | "sign" | "pow" ;
    number  = digits , [ "." , [ digits ] ] , [ exponent ] | "." , digits , [ exponent ] ;
    exponent= ("e" | "E") , [ "+" | "-" ] , digits ;
    name    = letter , { letter | digit | "_" } ;

Note that unary minus binds tighter than ``^``: ``-x^2`` is ``(-x)^2``.
Names resolve to chart variables or to named constants; constant values are
supplied at evaluation time.
"""
from __future__ import annotations

import math
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Expr", "Num", "Var", "Const", "Neg", "BinOp", "Call",
    "ExprSyntaxError", "UnknownIdentifierError", "DomainError", "UnboundVariableError",
    "parse", "evaluate", "differentiate", "substitute",
    "num", "var", "const", "ZERO", "ONE", "FUNCTIONS",
]

FUNCTIONS = {"exp": 1, "log": 1, "sin": 1, "cos": 1, "tan": 1, "sqrt": 1, "abs": 1, "sign": 1, "pow": 2}


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ValueError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r} at offset {offset}")
        self.name = name
        self.offset = offset


class DomainError(ArithmeticError):
    """Function argument outside its real domain (log, sqrt, pow, division)."""


class UnboundVariableError(KeyError):
    pass


# --------------------------------------------------------------------------- nodes

class Expr:
    """Immutable expression node. Structural equality, cached hash."""

    __slots__ = ("_hash", "_fn", "_free")

    def _key(self) -> tuple:
        raise NotImplementedError

    def __hash__(self) -> int:
        try:
            return self._hash
        except AttributeError:
            h = hash(self._key())
            object.__setattr__(self, "_hash", h)
            return h

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, Expr) or type(self) is not type(other):
            return False
        return hash(self) == hash(other) and self._key() == other._key()

    def __setattr__(self, name, value):
        raise AttributeError("Expr nodes are immutable")

    # arithmetic sugar: builds simplified nodes
    def __add__(self, o): return _binop(add, self, o)
    def __radd__(self, o): return _binop(add, o, self)
    def __sub__(self, o): return _binop(sub, self, o)
    def __rsub__(self, o): return _binop(sub, o, self)
    def __mul__(self, o): return _binop(mul, self, o)
    def __rmul__(self, o): return _binop(mul, o, self)
    def __truediv__(self, o): return _binop(div, self, o)
    def __rtruediv__(self, o): return _binop(div, o, self)
    def __pow__(self, o): return _binop(power, self, o)
    def __neg__(self): return neg(self)

    def __str__(self) -> str:
        return to_string(self)

    def __repr__(self) -> str:
        return f"Expr({to_string(self)!r})"

    # convenience
    def diff(self, name: str) -> "Expr":
        return differentiate(self, name)

    def subs(self, bindings: Mapping[str, "Expr"]) -> "Expr":
        return substitute(self, bindings)

    def evaluate(self, point: Mapping[str, float], constants: Mapping[str, float] | None = None):
        return evaluate(self, point, constants)

    @property
    def free_variables(self) -> frozenset:
        try:
            return self._free
        except AttributeError:
            f = _free(self)
            object.__setattr__(self, "_free", f)
            return f

    @property
    def is_zero(self) -> bool:
        return isinstance(self, Num) and self.value == 0.0


class Num(Expr):
    __slots__ = ("value",)

    def __init__(self, value: float):
        object.__setattr__(self, "value", float(value))

    def _key(self):
        return ("num", self.value)


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        object.__setattr__(self, "name", name)

    def _key(self):
        return ("var", self.name)


class Const(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        object.__setattr__(self, "name", name)

    def _key(self):
        return ("const", self.name)


class Neg(Expr):
    __slots__ = ("arg",)

    def __init__(self, arg: Expr):
        object.__setattr__(self, "arg", arg)

    def _key(self):
        return ("neg", self.arg)


class BinOp(Expr):
    __slots__ = ("op", "left", "right")

    def __init__(self, op: str, left: Expr, right: Expr):
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    def _key(self):
        return ("bin", self.op, self.left, self.right)


class Call(Expr):
    __slots__ = ("fn", "args")

    def __init__(self, fn: str, args: tuple):
        object.__setattr__(self, "fn", fn)
        object.__setattr__(self, "args", tuple(args))

    def _key(self):
        return ("call", self.fn, self.args)


ZERO = Num(0.0)
ONE = Num(1.0)


def num(x: float) -> Num:
    return Num(x)


def var(name: str) -> Var:
    return Var(name)


def const(name: str) -> Const:
    return Const(name)


def _lift(o) -> Expr:
    if isinstance(o, Expr):
        return o
    if isinstance(o, (int, float, np.floating, np.integer)):
        return Num(float(o))
    raise TypeError(f"cannot combine Expr with {type(o).__name__}")


def _binop(fn, a, b):
    try:
        return fn(_lift(a), _lift(b))
    except TypeError:
        return NotImplemented


def _free(e: Expr) -> frozenset:
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, (Num, Const)):
        return frozenset()
    if isinstance(e, Neg):
        return e.arg.free_variables
    if isinstance(e, BinOp):
        return e.left.free_variables | e.right.free_variables
    if isinstance(e, Call):
        out = frozenset()
        for a in e.args:
            out |= a.free_variables
        return out
    raise TypeError(e)


# ------------------------------------------------------------- smart constructors
# Simplification is limited to constant folding and 0/1 identities.

def _is(e: Expr, v: float) -> bool:
    return isinstance(e, Num) and e.value == v


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if _is(a, -1.0):
        return neg(b)
    if _is(b, -1.0):
        return neg(a)
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num) and b.value != 0.0:
        return Num(a.value / b.value)
    if _is(a, 0.0) and not _is(b, 0.0):
        return ZERO
    if _is(b, 1.0):
        return a
    return BinOp("/", a, b)


def power(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        try:
            return Num(_pow_scalar(a.value, b.value))
        except (DomainError, OverflowError):
            return BinOp("^", a, b)
    if _is(b, 0.0):
        return ONE
    if _is(b, 1.0):
        return a
    if _is(a, 1.0):
        return ONE
    return BinOp("^", a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


_SCALAR_FN = {
    "exp": math.exp, "sin": math.sin, "cos": math.cos, "tan": math.tan, "abs": abs,
    "sign": lambda x: float(np.sign(x)),
}


def call(fn: str, *args: Expr) -> Expr:
    if all(isinstance(a, Num) for a in args):
        vals = [a.value for a in args]
        try:
            if fn in _SCALAR_FN:
                return Num(_SCALAR_FN[fn](*vals))
            if fn == "log" and vals[0] > 0:
                return Num(math.log(vals[0]))
            if fn == "sqrt" and vals[0] >= 0:
                return Num(math.sqrt(vals[0]))
            if fn == "pow":
                return Num(_pow_scalar(*vals))
        except (DomainError, OverflowError):
            pass
    if fn == "pow":
        return power(*args)
    return Call(fn, args)


def _pow_scalar(a: float, b: float) -> float:
    if a < 0 and not float(b).is_integer():
        raise DomainError(f"negative base {a} with non-integer exponent {b}")
    if a == 0 and b < 0:
        raise DomainError("zero base with negative exponent")
    return float(a) ** float(b)


# ------------------------------------------------------------------------ parser

_OPS = set("+-*/^(),")


def _tokenize(text: str):
    """Yield (kind, value, byte_offset)."""
    raw = text.encode("utf-8")
    i, n = 0, len(raw)
    toks = []
    while i < n:
        c = chr(raw[i])
        if c.isspace():
            i += 1
            continue
        if c in _OPS:
            toks.append(("op", c, i))
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and chr(raw[i + 1]).isdigit()):
            j = i
            while j < n and chr(raw[j]).isdigit():
                j += 1
            if j < n and chr(raw[j]) == ".":
                j += 1
                while j < n and chr(raw[j]).isdigit():
                    j += 1
            if j < n and chr(raw[j]) in "eE":
                k = j + 1
                if k < n and chr(raw[k]) in "+-":
                    k += 1
                if k < n and chr(raw[k]).isdigit():
                    while k < n and chr(raw[k]).isdigit():
                        k += 1
                    j = k
            toks.append(("num", float(raw[i:j].decode()), i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and raw[j] < 128 and (chr(raw[j]).isalnum() or chr(raw[j]) == "_"):
                j += 1
            toks.append(("name", raw[i:j].decode(), i))
            i = j
            continue
        raise ExprSyntaxError(f"unexpected character {c!r}", i)
    toks.append(("end", None, n))
    return toks


class _Parser:
    def __init__(self, text: str, chart_vars: Iterable[str], constants: Iterable[str]):
        self.toks = _tokenize(text)
        self.pos = 0
        self.vars = set(chart_vars)
        self.consts = set(constants)

    def peek(self):
        return self.toks[self.pos]

    def take(self):
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def expect(self, value):
        t = self.take()
        if t[0] != "op" or t[1] != value:
            raise ExprSyntaxError(f"expected {value!r}", t[2])
        return t

    def parse(self) -> Expr:
        e = self.expr()
        t = self.peek()
        if t[0] != "end":
            raise ExprSyntaxError("unexpected token", t[2])
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            r = self.term()
            e = add(e, r) if op == "+" else sub(e, r)
        return e

    def term(self) -> Expr:
        e = self.power()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            r = self.power()
            e = mul(e, r) if op == "*" else div(e, r)
        return e

    def power(self) -> Expr:
        base = self.unary()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return power(base, self.power())
        return base

    def unary(self) -> Expr:
        t = self.peek()
        if t[0] == "op" and t[1] == "-":
            self.take()
            return neg(self.unary())
        return self.primary()

    def primary(self) -> Expr:
        kind, val, off = self.take()
        if kind == "num":
            return Num(val)
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "name":
            if val in FUNCTIONS and self.peek()[0] == "op" and self.peek()[1] == "(":
                self.take()
                args = [self.expr()]
                while self.peek()[0] == "op" and self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                close = self.expect(")")
                if len(args) != FUNCTIONS[val]:
                    raise ExprSyntaxError(f"{val} takes {FUNCTIONS[val]} argument(s)", close[2])
                return call(val, *args)
            if val in self.vars:
                return Var(val)
            if val in self.consts:
                return Const(val)
            raise UnknownIdentifierError(val, off)
        raise ExprSyntaxError("unexpected token" if kind != "end" else "unexpected end of input", off)


def parse(text: str, chart_vars: Iterable[str] = (), constants: Iterable[str] = ()) -> Expr:
    """Parse ``text`` into an expression over ``chart_vars`` and named ``constants``."""
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    return _Parser(text, chart_vars, constants).parse()


# ------------------------------------------------------------------ serialization

def _fmt_num(v: float) -> str:
    s = repr(float(v))
    if s.endswith(".0"):
        s = s[:-2]
    return f"({s})" if v < 0 else s


def to_string(e: Expr) -> str:
    """Fully parenthesized serialization that re-parses to an equal AST."""
    if isinstance(e, Num):
        return _fmt_num(e.value)
    if isinstance(e, (Var, Const)):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_string(e.arg)})"
    if isinstance(e, BinOp):
        return f"({to_string(e.left)} {e.op} {to_string(e.right)})"
    if isinstance(e, Call):
        return f"{e.fn}({', '.join(to_string(a) for a in e.args)})"
    raise TypeError(e)


# --------------------------------------------------------------------- evaluation

_SCALAR = (float, int)


def _div(a, b):
    if isinstance(b, _SCALAR):
        if b == 0:
            raise DomainError("division by zero")
        return a / b
    if np.any(np.asarray(b) == 0):
        raise DomainError("division by zero")
    return a / b


def _log(x):
    if isinstance(x, _SCALAR):
        if x <= 0:
            raise DomainError("log of non-positive argument")
        return math.log(x)
    if np.any(np.asarray(x) <= 0):
        raise DomainError("log of non-positive argument")
    return np.log(x)


def _sqrt(x):
    if isinstance(x, _SCALAR):
        if x < 0:
            raise DomainError("sqrt of negative argument")
        return math.sqrt(x)
    if np.any(np.asarray(x) < 0):
        raise DomainError("sqrt of negative argument")
    return np.sqrt(x)


def _pow(a, b):
    if isinstance(a, _SCALAR) and isinstance(b, _SCALAR):
        if a < 0 and b != round(b):
            raise DomainError("negative base with non-integer exponent")
        if a == 0 and b < 0:
            raise DomainError("zero base with negative exponent")
        try:
            return float(a) ** b
        except OverflowError:
            return float(np.power(float(a), float(b)))
    a_arr, b_arr = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    bad = (a_arr < 0) & (b_arr != np.round(b_arr))
    if np.any(bad):
        raise DomainError("negative base with non-integer exponent")
    if np.any((a_arr == 0) & (b_arr < 0)):
        raise DomainError("zero base with negative exponent")
    return np.power(a_arr, b_arr) if (a_arr.ndim or b_arr.ndim) else float(a_arr) ** float(b_arr)


_RUNTIME = {
    "_div": _div, "_log": _log, "_sqrt": _sqrt, "_pow": _pow,
    "_exp": np.exp, "_sin": np.sin, "_cos": np.cos, "_tan": np.tan,
    "_abs": np.abs, "_sign": np.sign,
}


def _codegen(e: Expr) -> str:
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return f"V[{e.name!r}]"
    if isinstance(e, Const):
        return f"C[{e.name!r}]"
    if isinstance(e, Neg):
        return f"(-{_codegen(e.arg)})"
    if isinstance(e, BinOp):
        l, r = _codegen(e.left), _codegen(e.right)
        if e.op == "/":
            return f"_div({l}, {r})"
        if e.op == "^":
            return f"_pow({l}, {r})"
        return f"({l} {e.op} {r})"
    if isinstance(e, Call):
        name = "_pow" if e.fn == "pow" else f"_{e.fn}"
        return f"{name}({', '.join(_codegen(a) for a in e.args)})"
    raise TypeError(e)


def _interpret(e: Expr, V, C):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return V[e.name]
    if isinstance(e, Const):
        return C[e.name]
    if isinstance(e, Neg):
        return -_interpret(e.arg, V, C)
    if isinstance(e, BinOp):
        l, r = _interpret(e.left, V, C), _interpret(e.right, V, C)
        if e.op == "+":
            return l + r
        if e.op == "-":
            return l - r
        if e.op == "*":
            return l * r
        if e.op == "/":
            return _div(l, r)
        return _pow(l, r)
    if isinstance(e, Call):
        args = [_interpret(a, V, C) for a in e.args]
        return _RUNTIME["_pow" if e.fn == "pow" else f"_{e.fn}"](*args)
    raise TypeError(e)


def _compiled(e: Expr) -> Callable:
    try:
        return e._fn
    except AttributeError:
        pass
    try:
        fn = eval(f"lambda V, C: {_codegen(e)}", dict(_RUNTIME))  # noqa: S307 - generated from our own AST
    except (SyntaxError, RecursionError, MemoryError):
        fn = lambda V, C, _e=e: _interpret(_e, V, C)  # noqa: E731
    object.__setattr__(e, "_fn", fn)
    return fn


def compile_many(exprs: Sequence[Expr]) -> Callable:
    """One callable ``f(V, C) -> tuple`` evaluating every expression; used on hot paths."""
    body = ", ".join(_codegen(e) for e in exprs)
    return eval(f"lambda V, C: ({body}{',' if len(exprs) == 1 else ''})", dict(_RUNTIME))  # noqa: S307


def evaluate(e: Expr, point: Mapping[str, float], constants: Mapping[str, float] | None = None):
    """Evaluate at ``point`` (name -> float or ndarray). Arrays broadcast elementwise."""
    constants = constants or {}
    try:
        with np.errstate(all="ignore"):
            out = _compiled(e)(point, constants)
    except KeyError as exc:
        raise UnboundVariableError(f"unbound name {exc.args[0]!r}") from None
    if np.ndim(out) == 0:
        return float(out)
    return out


# ---------------------------------------------------------------- differentiation

def differentiate(e: Expr, name: str) -> Expr:
    """Exact partial derivative d e / d name (constants have zero derivative)."""
    if name not in e.free_variables:
        return ZERO
    if isinstance(e, Var):
        return ONE
    if isinstance(e, Neg):
        return neg(differentiate(e.arg, name))
    if isinstance(e, BinOp):
        u, v = e.left, e.right
        du, dv = differentiate(u, name), differentiate(v, name)
        if e.op == "+":
            return add(du, dv)
        if e.op == "-":
            return sub(du, dv)
        if e.op == "*":
            return add(mul(du, v), mul(u, dv))
        if e.op == "/":
            if dv.is_zero:
                return div(du, v)
            return div(sub(mul(du, v), mul(u, dv)), power(v, Num(2.0)))
        return _diff_pow(u, v, du, dv, name)
    if isinstance(e, Call):
        if e.fn == "pow":
            u, v = e.args
            return _diff_pow(u, v, differentiate(u, name), differentiate(v, name), name)
        (u,) = e.args
        du = differentiate(u, name)
        if e.fn == "exp":
            outer = e
        elif e.fn == "log":
            return div(du, u)
        elif e.fn == "sin":
            outer = call("cos", u)
        elif e.fn == "cos":
            outer = neg(call("sin", u))
        elif e.fn == "tan":
            outer = div(ONE, power(call("cos", u), Num(2.0)))
        elif e.fn == "sqrt":
            return div(du, mul(Num(2.0), e))
        elif e.fn == "abs":
            outer = call("sign", u)
        elif e.fn == "sign":
            return ZERO
        else:  # pragma: no cover
            raise ValueError(e.fn)
        return mul(outer, du)
    raise TypeError(e)  # pragma: no cover


def _diff_pow(u: Expr, v: Expr, du: Expr, dv: Expr, name: str) -> Expr:
    if name not in v.free_variables:
        # v * u^(v-1) * u'
        return mul(mul(v, power(u, sub(v, ONE))), du)
    if name not in u.free_variables:
        return mul(mul(power(u, v), call("log", u)), dv)
    return mul(power(u, v), add(mul(dv, call("log", u)), div(mul(v, du), u)))


# ------------------------------------------------------------------ substitution

def substitute(e: Expr, bindings: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (simultaneous, capture-free)."""
    if not bindings or not (e.free_variables & set(bindings)):
        return e
    if isinstance(e, Var):
        return bindings[e.name]
    if isinstance(e, Neg):
        return neg(substitute(e.arg, bindings))
    if isinstance(e, BinOp):
        l, r = substitute(e.left, bindings), substitute(e.right, bindings)
        return {"+": add, "-": sub, "*": mul, "/": div, "^": power}[e.op](l, r)
    if isinstance(e, Call):
        return call(e.fn, *(substitute(a, bindings) for a in e.args))
    return e
