"""Scalar formula parsing, evaluation, and exact symbolic differentiation.

Formulas are written over coordinate symbols with a deliberately small
grammar: ``+ - * /``, right-associative ``^`` with constant exponent,
unary minus, parentheses, the constant ``pi``, and the functions
``sin cos tan atan exp log sqrt abs``.  Precedence from loosest to
tightest is ``+ -``, ``* /``, unary minus, ``^`` (so ``-r^2`` means
``-(r^2)``).

Trees are immutable.  The module-level constructors (:func:`add`,
:func:`mul`, ...) fold constants and drop exact zeros, which keeps
programmatically assembled tensor component expressions compact.
Evaluation is vectorized over numpy arrays and memoizes shared
sub-trees, so derived fields that reuse components evaluate each
distinct node once per call.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "Expr",
    "Const",
    "Sym",
    "Neg",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Pow",
    "Fun",
    "ExprError",
    "ExprSyntaxError",
    "ExprDomainError",
    "parse",
    "evaluate",
    "differentiate",
    "substitute",
    "to_string",
    "symbols_of",
    "const",
    "sym",
    "neg",
    "add",
    "sub",
    "mul",
    "div",
    "powc",
    "fun",
    "esum",
    "ZERO",
    "ONE",
    "FUNCTION_NAMES",
]


class ExprError(ValueError):
    """Base class for formula errors."""


class ExprSyntaxError(ExprError):
    """Malformed source text; ``offset`` is the byte position of the fault."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class ExprDomainError(ExprError):
    """Evaluation left the real domain (log of non-positive, sqrt of negative)."""

    def __init__(self, message, point=None):
        if point is not None:
            message = f"{message} at point {point}"
        super().__init__(message)
        self.point = point


class Expr:
    """Immutable node of a parsed formula."""

    __slots__ = ()

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        return f"<{type(self).__name__} {to_string(self)!r}>"


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        object.__setattr__(self, "value", float(value))

    def __setattr__(self, name, value):  # pragma: no cover - guard rail
        raise AttributeError("Expr nodes are immutable")


class Sym(Expr):
    __slots__ = ("name",)

    def __init__(self, name):
        object.__setattr__(self, "name", name)


class Neg(Expr):
    __slots__ = ("child",)

    def __init__(self, child):
        object.__setattr__(self, "child", child)


class _Binary(Expr):
    __slots__ = ("left", "right")

    def __init__(self, left, right):
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)


class Add(_Binary):
    __slots__ = ()


class Sub(_Binary):
    __slots__ = ()


class Mul(_Binary):
    __slots__ = ()


class Div(_Binary):
    __slots__ = ()


class Pow(Expr):
    """Power with a constant real exponent."""

    __slots__ = ("base", "exponent")

    def __init__(self, base, exponent):
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "exponent", float(exponent))


class Fun(Expr):
    __slots__ = ("name", "arg")

    def __init__(self, name, arg):
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "arg", arg)


_FUNCTION_IMPL = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "atan": np.arctan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
}

FUNCTION_NAMES = frozenset(_FUNCTION_IMPL)

_FUNCTION_SCALAR = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "atan": math.atan,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "abs": abs,
}


def _wrap(value):
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float)):
        return Const(value)
    raise TypeError(f"cannot use {type(value).__name__} in an expression")


def const(value):
    return Const(value)


def sym(name):
    return Sym(name)


def neg(e):
    e = _wrap(e)
    if isinstance(e, Const):
        return Const(-e.value)
    if isinstance(e, Neg):
        return e.child
    return Neg(e)


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if isinstance(a, Const) and a.value == 0.0:
        return b
    if isinstance(b, Const) and b.value == 0.0:
        return a
    return Add(a, b)


def sub(a, b):
    a, b = _wrap(a), _wrap(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if isinstance(b, Const) and b.value == 0.0:
        return a
    if isinstance(a, Const) and a.value == 0.0:
        return neg(b)
    return Sub(a, b)


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if isinstance(a, Const):
        if a.value == 0.0:
            return ZERO
        if a.value == 1.0:
            return b
        if a.value == -1.0:
            return neg(b)
    if isinstance(b, Const):
        if b.value == 0.0:
            return ZERO
        if b.value == 1.0:
            return a
        if b.value == -1.0:
            return neg(a)
    return Mul(a, b)


def div(a, b):
    a, b = _wrap(a), _wrap(b)
    if isinstance(b, Const):
        if b.value == 0.0:
            raise ZeroDivisionError("division by constant zero")
        if isinstance(a, Const):
            return Const(a.value / b.value)
        if b.value == 1.0:
            return a
    if isinstance(a, Const) and a.value == 0.0:
        return ZERO
    return Div(a, b)


def powc(base, exponent):
    base = _wrap(base)
    exponent = float(exponent)
    if exponent == 0.0:
        return ONE
    if exponent == 1.0:
        return base
    if isinstance(base, Const):
        return Const(base.value**exponent)
    return Pow(base, exponent)


def fun(name, arg):
    if name not in _FUNCTION_IMPL:
        raise ExprError(f"unknown function '{name}'")
    arg = _wrap(arg)
    if isinstance(arg, Const):
        try:
            return Const(_FUNCTION_SCALAR[name](arg.value))
        except ValueError:
            pass  # out-of-domain constant: keep the node, eval reports the point
    return Fun(name, arg)


def esum(terms):
    total = ZERO
    for t in terms:
        total = add(total, t)
    return total


ZERO = Const(0.0)
ONE = Const(1.0)


def is_zero(e):
    return isinstance(e, Const) and e.value == 0.0


# ---------------------------------------------------------------------------
# Tokenizer / parser
# ---------------------------------------------------------------------------

_OPERATOR_CHARS = set("+-*/^(),")


def _tokenize(src):
    tokens = []
    i, n = 0, len(src)
    while i < n:
        c = src[i]
        if c.isspace():
            i += 1
            continue
        if c in _OPERATOR_CHARS:
            tokens.append((c, c, i))
            i += 1
            continue
        if c.isdigit() or c == ".":
            j = i
            while j < n and (src[j].isdigit() or src[j] == "."):
                j += 1
            if j < n and src[j] in "eE":
                k = j + 1
                if k < n and src[k] in "+-":
                    k += 1
                if k < n and src[k].isdigit():
                    while k < n and src[k].isdigit():
                        k += 1
                    j = k
            text = src[i:j]
            try:
                value = float(text)
            except ValueError:
                raise ExprSyntaxError(f"bad number literal '{text}'", i) from None
            tokens.append(("num", value, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            tokens.append(("name", src[i:j], i))
            i = j
            continue
        raise ExprSyntaxError(f"unexpected character '{c}'", i)
    tokens.append(("end", None, n))
    return tokens


class _Parser:
    def __init__(self, src, symbols):
        self.src = src
        self.tokens = _tokenize(src)
        self.pos = 0
        self.symbols = symbols

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind):
        tok = self.advance()
        if tok[0] != kind:
            raise ExprSyntaxError(f"expected '{kind}'", tok[2])
        return tok

    def parse(self):
        e = self.expression()
        tok = self.peek()
        if tok[0] != "end":
            raise ExprSyntaxError(f"unexpected '{tok[1]}'", tok[2])
        return e

    def expression(self):
        e = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.advance()[0]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self):
        e = self.unary()
        while self.peek()[0] in ("*", "/"):
            op = self.advance()[0]
            rhs = self.unary()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def unary(self):
        if self.peek()[0] == "-":
            self.advance()
            return neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "^":
            tok = self.advance()
            exponent = self.unary()
            if not isinstance(exponent, Const):
                raise ExprSyntaxError("exponent must be a constant", tok[2])
            return powc(base, exponent.value)
        return base

    def atom(self):
        kind, value, offset = self.advance()
        if kind == "num":
            return Const(value)
        if kind == "(":
            e = self.expression()
            self.expect(")")
            return e
        if kind == "name":
            if self.peek()[0] == "(":
                return self.call(value, offset)
            if value == "pi":
                return Const(math.pi)
            if self.symbols is not None and value not in self.symbols:
                raise ExprSyntaxError(f"unknown identifier '{value}'", offset)
            return Sym(value)
        raise ExprSyntaxError(f"expected a value, got '{value}'", offset)

    def call(self, name, offset):
        if name not in _FUNCTION_IMPL:
            raise ExprSyntaxError(f"unknown function '{name}'", offset)
        self.expect("(")
        args = [self.expression()]
        while self.peek()[0] == ",":
            self.advance()
            args.append(self.expression())
        self.expect(")")
        if len(args) != 1:
            raise ExprSyntaxError(
                f"function '{name}' takes 1 argument, got {len(args)}", offset
            )
        return fun(name, args[0])


def parse(src, symbols=None):
    """Parse ``src`` into an expression tree.

    When ``symbols`` is given, identifiers outside it (other than ``pi``
    and function names) raise :class:`ExprSyntaxError`.
    """
    if not isinstance(src, str):
        raise TypeError("expression source must be a string")
    return _Parser(src, None if symbols is None else frozenset(symbols)).parse()


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

class _DomainFault(Exception):
    def __init__(self, message, bad_mask):
        self.message = message
        self.bad_mask = bad_mask


def _eval(e, env, memo):
    key = id(e)
    hit = memo.get(key)
    if hit is not None:
        return hit
    if isinstance(e, Const):
        out = e.value
    elif isinstance(e, Sym):
        try:
            out = env[e.name]
        except KeyError:
            raise ExprError(f"unknown identifier '{e.name}'") from None
    elif isinstance(e, Neg):
        out = -_eval(e.child, env, memo)
    elif isinstance(e, Add):
        out = _eval(e.left, env, memo) + _eval(e.right, env, memo)
    elif isinstance(e, Sub):
        out = _eval(e.left, env, memo) - _eval(e.right, env, memo)
    elif isinstance(e, Mul):
        out = _eval(e.left, env, memo) * _eval(e.right, env, memo)
    elif isinstance(e, Div):
        out = _eval(e.left, env, memo) / _eval(e.right, env, memo)
    elif isinstance(e, Pow):
        out = _eval(e.base, env, memo) ** e.exponent
    elif isinstance(e, Fun):
        arg = np.asarray(_eval(e.arg, env, memo))
        if e.name == "log":
            bad = arg <= 0.0
            if np.any(bad):
                raise _DomainFault("log of non-positive value", bad)
        elif e.name == "sqrt":
            bad = arg < 0.0
            if np.any(bad):
                raise _DomainFault("sqrt of negative value", bad)
        out = _FUNCTION_IMPL[e.name](arg)
    else:  # pragma: no cover - exhaustive
        raise TypeError(f"not an expression node: {e!r}")
    memo[key] = out
    return out


def evaluate(e, env):
    """Evaluate ``e`` over ``env`` (symbol name -> scalar or ndarray).

    Array values broadcast together; the result is returned with the
    broadcast shape.  Domain faults raise :class:`ExprDomainError`
    carrying the first offending coordinate point.
    """
    arrays = {k: np.asarray(v, dtype=float) for k, v in env.items()}
    shape = np.broadcast_shapes(*(a.shape for a in arrays.values())) if arrays else ()
    try:
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = _eval(e, arrays, {})
    except _DomainFault as fault:
        mask = np.broadcast_to(fault.bad_mask, shape) if shape else fault.bad_mask
        idx = np.argwhere(mask)
        first = tuple(idx[0]) if idx.size else ()
        point = {k: float(np.broadcast_to(v, shape)[first]) if shape else float(v)
                 for k, v in arrays.items()}
        raise ExprDomainError(fault.message, point) from None
    out = np.asarray(out, dtype=float)
    if out.shape != shape:
        out = np.broadcast_to(out, shape).copy()
    return out


# ---------------------------------------------------------------------------
# Differentiation / substitution / printing
# ---------------------------------------------------------------------------

def _diff(e, name, memo):
    key = id(e)
    hit = memo.get(key)
    if hit is not None:
        return hit
    if isinstance(e, Const):
        out = ZERO
    elif isinstance(e, Sym):
        out = ONE if e.name == name else ZERO
    elif isinstance(e, Neg):
        out = neg(_diff(e.child, name, memo))
    elif isinstance(e, Add):
        out = add(_diff(e.left, name, memo), _diff(e.right, name, memo))
    elif isinstance(e, Sub):
        out = sub(_diff(e.left, name, memo), _diff(e.right, name, memo))
    elif isinstance(e, Mul):
        out = add(
            mul(_diff(e.left, name, memo), e.right),
            mul(e.left, _diff(e.right, name, memo)),
        )
    elif isinstance(e, Div):
        du = _diff(e.left, name, memo)
        dv = _diff(e.right, name, memo)
        if is_zero(dv):
            out = div(du, e.right)
        else:
            out = div(sub(mul(du, e.right), mul(e.left, dv)), mul(e.right, e.right))
    elif isinstance(e, Pow):
        du = _diff(e.base, name, memo)
        out = mul(mul(Const(e.exponent), powc(e.base, e.exponent - 1.0)), du)
    elif isinstance(e, Fun):
        u = e.arg
        du = _diff(u, name, memo)
        if is_zero(du):
            out = ZERO
        elif e.name == "sin":
            out = mul(fun("cos", u), du)
        elif e.name == "cos":
            out = neg(mul(fun("sin", u), du))
        elif e.name == "tan":
            out = div(du, powc(fun("cos", u), 2.0))
        elif e.name == "atan":
            out = div(du, add(ONE, powc(u, 2.0)))
        elif e.name == "exp":
            out = mul(e, du)
        elif e.name == "log":
            out = div(du, u)
        elif e.name == "sqrt":
            out = div(du, mul(Const(2.0), e))
        elif e.name == "abs":
            # d|u| = (|u|/u) du, valid away from u = 0
            out = mul(div(e, u), du)
        else:  # pragma: no cover - exhaustive
            raise ExprError(f"no derivative rule for '{e.name}'")
    else:  # pragma: no cover - exhaustive
        raise TypeError(f"not an expression node: {e!r}")
    memo[key] = out
    return out


def differentiate(e, name):
    """Exact derivative of ``e`` with respect to the symbol ``name``."""
    return _diff(e, name, {})


def _subst(e, mapping, memo):
    key = id(e)
    hit = memo.get(key)
    if hit is not None:
        return hit
    if isinstance(e, Const):
        out = e
    elif isinstance(e, Sym):
        out = mapping.get(e.name, e)
    elif isinstance(e, Neg):
        out = neg(_subst(e.child, mapping, memo))
    elif isinstance(e, Add):
        out = add(_subst(e.left, mapping, memo), _subst(e.right, mapping, memo))
    elif isinstance(e, Sub):
        out = sub(_subst(e.left, mapping, memo), _subst(e.right, mapping, memo))
    elif isinstance(e, Mul):
        out = mul(_subst(e.left, mapping, memo), _subst(e.right, mapping, memo))
    elif isinstance(e, Div):
        out = div(_subst(e.left, mapping, memo), _subst(e.right, mapping, memo))
    elif isinstance(e, Pow):
        out = powc(_subst(e.base, mapping, memo), e.exponent)
    elif isinstance(e, Fun):
        out = fun(e.name, _subst(e.arg, mapping, memo))
    else:  # pragma: no cover - exhaustive
        raise TypeError(f"not an expression node: {e!r}")
    memo[key] = out
    return out


def substitute(e, mapping):
    """Replace symbols by sub-expressions (used for chart composition)."""
    mapping = {k: _wrap(v) for k, v in mapping.items()}
    return _subst(e, mapping, {})


def symbols_of(e):
    """All symbol names appearing in ``e``."""
    names = set()
    stack = [e]
    seen = set()
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if isinstance(node, Sym):
            names.add(node.name)
        elif isinstance(node, Neg):
            stack.append(node.child)
        elif isinstance(node, _Binary):
            stack.extend((node.left, node.right))
        elif isinstance(node, Pow):
            stack.append(node.base)
        elif isinstance(node, Fun):
            stack.append(node.arg)
    return frozenset(names)


_LEVEL_ADD, _LEVEL_MUL, _LEVEL_NEG, _LEVEL_POW, _LEVEL_ATOM = 1, 2, 3, 4, 5


def _level(e):
    if isinstance(e, (Add, Sub)):
        return _LEVEL_ADD
    if isinstance(e, (Mul, Div)):
        return _LEVEL_MUL
    if isinstance(e, Neg):
        return _LEVEL_NEG
    if isinstance(e, Pow):
        return _LEVEL_POW
    return _LEVEL_ATOM


def _fmt_number(value):
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def to_string(e):
    """Render ``e`` as parseable source text."""
    if isinstance(e, Const):
        if e.value < 0:
            return f"-{_fmt_number(-e.value)}"
        return _fmt_number(e.value)
    if isinstance(e, Sym):
        return e.name
    if isinstance(e, Neg):
        return "-" + _paren(e.child, _LEVEL_NEG)
    if isinstance(e, Add):
        return _paren(e.left, _LEVEL_ADD) + "+" + _paren(e.right, _LEVEL_ADD + 1)
    if isinstance(e, Sub):
        return _paren(e.left, _LEVEL_ADD) + "-" + _paren(e.right, _LEVEL_ADD + 1)
    if isinstance(e, Mul):
        return _paren(e.left, _LEVEL_MUL) + "*" + _paren(e.right, _LEVEL_MUL + 1)
    if isinstance(e, Div):
        return _paren(e.left, _LEVEL_MUL) + "/" + _paren(e.right, _LEVEL_MUL + 1)
    if isinstance(e, Pow):
        expo = e.exponent
        expo_text = _fmt_number(expo) if expo >= 0 else "-" + _fmt_number(-expo)
        if expo < 0:
            expo_text = f"({expo_text})"
        return _paren(e.base, _LEVEL_POW + 1) + "^" + expo_text
    if isinstance(e, Fun):
        return f"{e.name}({to_string(e.arg)})"
    raise TypeError(f"not an expression node: {e!r}")


def _paren(e, minimum):
    text = to_string(e)
    if _level(e) < minimum:
        return f"({text})"
    return text
