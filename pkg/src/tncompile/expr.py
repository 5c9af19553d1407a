"""Exact multivariate Laurent polynomials over the rationals.

Both source ODE systems and compiled transcriptional networks are written in
this algebra. Coefficients are :class:`fractions.Fraction`; floats only show
up in :meth:`LaurentPolynomial.evaluate`.
"""
from __future__ import annotations

import math
import re
from fractions import Fraction
from typing import Iterable, Mapping, Union

Rational = Fraction

Number = Union[int, Fraction]


def to_rational(value) -> Fraction:
    """Exact conversion; strings and floats go through their decimal text."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite value {value!r}")
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot convert {type(value).__name__} to a rational")


class Monomial:
    """Product of symbols raised to nonzero integer powers.

    Stored as a tuple of ``(symbol, exponent)`` sorted by symbol; the empty
    tuple is the unit monomial. Ordering is plain tuple ordering, which is
    lexicographic on symbol names then exponents.
    """

    __slots__ = ("exps", "_hash")

    def __init__(self, exps: Iterable[tuple[str, int]] = ()):
        merged: dict[str, int] = {}
        for sym, e in exps:
            merged[sym] = merged.get(sym, 0) + int(e)
        self.exps = tuple(sorted((s, e) for s, e in merged.items() if e != 0))
        self._hash = hash(self.exps)

    @classmethod
    def of(cls, **exps: int) -> Monomial:
        return cls(exps.items())

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return isinstance(other, Monomial) and self.exps == other.exps

    def __lt__(self, other: Monomial):
        return self.exps < other.exps

    def __mul__(self, other: Monomial) -> Monomial:
        return Monomial(self.exps + other.exps)

    def __pow__(self, n: int) -> Monomial:
        return Monomial((s, e * n) for s, e in self.exps)

    def __truediv__(self, other: Monomial) -> Monomial:
        return self * other ** -1

    def exponent(self, symbol: str) -> int:
        for s, e in self.exps:
            if s == symbol:
                return e
        return 0

    @property
    def symbols(self) -> frozenset[str]:
        return frozenset(s for s, _ in self.exps)

    @property
    def degree(self) -> int:
        return sum(e for _, e in self.exps)

    def is_unit(self) -> bool:
        return not self.exps

    def __repr__(self):
        return f"Monomial({dict(self.exps)!r})"


ONE = Monomial()


def _format_coeff(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


class LaurentPolynomial:
    """Canonical sparse sum of monomials with nonzero rational coefficients.

    Instances are immutable. Equal polynomials have identical term maps, so
    ``==`` is exact symbolic equality.
    """

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping[Monomial, Number] | Iterable[tuple[Monomial, Number]] = ()):
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[Monomial, Fraction] = {}
        for mono, c in items:
            acc[mono] = acc.get(mono, Fraction(0)) + to_rational(c)
        self._terms = {m: acc[m] for m in sorted(acc) if acc[m] != 0}
        self._hash = None

    # -- constructors --------------------------------------------------

    @classmethod
    def constant(cls, c) -> LaurentPolynomial:
        return cls({ONE: to_rational(c)})

    @classmethod
    def symbol(cls, name: str, exponent: int = 1) -> LaurentPolynomial:
        return cls({Monomial([(name, exponent)]): 1})

    @classmethod
    def monomial(cls, coeff, **exps: int) -> LaurentPolynomial:
        return cls({Monomial(exps.items()): to_rational(coeff)})

    @classmethod
    def lift(cls, value) -> LaurentPolynomial:
        if isinstance(value, LaurentPolynomial):
            return value
        if isinstance(value, str):
            return parse_expr(value)
        return cls.constant(value)

    # -- structure -----------------------------------------------------

    @property
    def terms(self) -> dict[Monomial, Fraction]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self):
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def is_positive(self) -> bool:
        """True when every coefficient is strictly positive (zero counts)."""
        return all(c > 0 for c in self._terms.values())

    def is_monomial(self) -> bool:
        return len(self._terms) == 1

    def is_constant(self) -> bool:
        return all(m.is_unit() for m in self._terms)

    def constant_value(self) -> Fraction:
        if not self.is_constant():
            raise ValueError(f"{self} is not a constant")
        return self._terms.get(ONE, Fraction(0))

    def coefficient(self, mono: Monomial) -> Fraction:
        return self._terms.get(mono, Fraction(0))

    @property
    def symbols(self) -> frozenset[str]:
        out: set[str] = set()
        for m in self._terms:
            out.update(m.symbols)
        return frozenset(out)

    def min_exponent(self, symbol: str) -> int:
        return min((m.exponent(symbol) for m in self._terms), default=0)

    def max_exponent(self, symbol: str) -> int:
        return max((m.exponent(symbol) for m in self._terms), default=0)

    # -- arithmetic ----------------------------------------------------

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = LaurentPolynomial.constant(other)
        if not isinstance(other, LaurentPolynomial):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    def __neg__(self):
        return LaurentPolynomial({m: -c for m, c in self._terms.items()})

    def __pos__(self):
        return self

    def __add__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        return LaurentPolynomial(list(self._terms.items()) + list(other._terms.items()))

    __radd__ = __add__

    def __sub__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        return LaurentPolynomial(
            (m1 * m2, c1 * c2)
            for m1, c1 in self._terms.items()
            for m2, c2 in other._terms.items()
        )

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if not isinstance(n, int):
            raise TypeError("exponent must be an integer")
        if n < 0:
            if not self.is_monomial():
                raise ValueError(
                    f"negative power of a {len(self)}-term expression is not a Laurent polynomial"
                )
            (m, c), = self._terms.items()
            return LaurentPolynomial({m ** n: c ** n})
        result = LaurentPolynomial.constant(1)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def __truediv__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        if other.is_zero():
            raise ZeroDivisionError("division by the zero polynomial")
        if not other.is_monomial():
            raise ValueError("divisor must be a single Laurent monomial")
        return self * other ** -1

    # -- the operations the compiler needs -----------------------------

    def evaluate(self, point: Mapping[str, float]) -> float:
        """Float value at ``point``, summed term by term."""
        total = 0.0
        for mono, c in self._terms.items():
            val = float(c)
            for sym, e in mono.exps:
                try:
                    x = point[sym]
                except KeyError:
                    raise KeyError(f"unbound symbol {sym!r}") from None
                if e < 0 and x == 0:
                    raise ZeroDivisionError(f"{sym} = 0 appears with exponent {e}")
                val *= float(x) ** e
            total += val
        return total

    def substitute(self, bindings: Mapping[str, LaurentPolynomial]) -> LaurentPolynomial:
        """Replace bound symbols by polynomials and renormalize.

        A symbol used with a negative exponent may only be bound to a
        single monomial, otherwise the result leaves the Laurent ring.
        """
        bindings = {s: LaurentPolynomial.lift(b) for s, b in bindings.items()}
        for sym, b in bindings.items():
            if not b.is_monomial() and self.min_exponent(sym) < 0:
                raise ValueError(
                    f"cannot substitute multi-term expression for {sym!r}, "
                    "which appears with a negative exponent"
                )
        cache: dict[tuple[str, int], LaurentPolynomial] = {}
        out: list[tuple[Monomial, Fraction]] = []
        for mono, c in self._terms.items():
            term = LaurentPolynomial({Monomial(
                (s, e) for s, e in mono.exps if s not in bindings): c})
            for s, e in mono.exps:
                if s in bindings:
                    key = (s, e)
                    if key not in cache:
                        cache[key] = bindings[s] ** e
                    term = term * cache[key]
            out.extend(term._terms.items())
        return LaurentPolynomial(out)

    def split_signs(self) -> tuple[LaurentPolynomial, LaurentPolynomial]:
        """``(p_plus, p_minus)``, both positive, with ``self == p_plus - p_minus``."""
        plus = {m: c for m, c in self._terms.items() if c > 0}
        minus = {m: -c for m, c in self._terms.items() if c < 0}
        return LaurentPolynomial(plus), LaurentPolynomial(minus)

    # -- printing ------------------------------------------------------

    def to_string(self) -> str:
        if not self._terms:
            return "0"
        parts: list[str] = []
        for i, (mono, c) in enumerate(self._terms.items()):
            text = _format_term(mono, abs(c))
            if i == 0:
                parts.append(text if c > 0 else "-" + text)
            else:
                parts.append((" + " if c > 0 else " - ") + text)
        return "".join(parts)

    __str__ = to_string

    def __repr__(self):
        return f"LaurentPolynomial({self.to_string()!r})"


def _format_term(mono: Monomial, c: Fraction) -> str:
    num = [s if e == 1 else f"{s}^{e}" for s, e in mono.exps if e > 0]
    den = [s if e == -1 else f"{s}^{-e}" for s, e in mono.exps if e < 0]
    if num:
        text = "*".join(num) if c == 1 else _format_coeff(c) + "*" + "*".join(num)
    else:
        text = _format_coeff(c)
    return text + "".join("/" + d for d in den)


def _coerce(value):
    if isinstance(value, LaurentPolynomial):
        return value
    if isinstance(value, (int, Fraction)):
        return LaurentPolynomial.constant(value)
    return NotImplemented


def evaluate(p: LaurentPolynomial, point: Mapping[str, float]) -> float:
    return p.evaluate(point)


def substitute(p: LaurentPolynomial, bindings: Mapping[str, LaurentPolynomial]) -> LaurentPolynomial:
    return p.substitute(bindings)


def split_signs(p: LaurentPolynomial) -> tuple[LaurentPolynomial, LaurentPolynomial]:
    return p.split_signs()


# ---------------------------------------------------------------------------
# Parser

class ExprSyntaxError(ValueError):
    def __init__(self, message: str, text: str = "", pos: int | None = None):
        self.text = text
        self.pos = pos
        where = f" at position {pos}" if pos is not None else ""
        super().__init__(f"{message}{where}: {text!r}" if text else message)


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {text[bad]!r}", text, bad)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    # expr   := term (('+'|'-') term)*
    # term   := unary (('*'|'/') unary)*
    # unary  := ('+'|'-') unary | factor
    # factor := base ('^' int)?
    # base   := ident | number | '(' expr ')'

    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ExprSyntaxError(message, self.text, tok[2])

    def expect(self, value):
        tok = self.take()
        if tok[1] != value or tok[0] != "op":
            raise self.error(f"expected {value!r}", tok)
        return tok

    def parse(self) -> LaurentPolynomial:
        if self.peek()[0] == "end":
            raise self.error("empty expression")
        result = self.expr()
        if self.peek()[0] != "end":
            raise self.error(f"unexpected token {self.peek()[1]!r}")
        return result

    def expr(self):
        result = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            result = result + rhs if op == "+" else result - rhs
        return result

    def term(self):
        result = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            tok = self.take()
            rhs = self.unary()
            if tok[1] == "*":
                result = result * rhs
            else:
                if rhs.is_zero():
                    raise self.error("division by zero", tok)
                if not rhs.is_monomial():
                    raise self.error(
                        "division by a multi-term expression; divisors must be "
                        "Laurent monomials", tok)
                result = result / rhs
        return result

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in ("+", "-"):
            self.take()
            inner = self.unary()
            return -inner if tok[1] == "-" else inner
        return self.factor()

    def factor(self):
        base = self.base()
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "^":
            self.take()
            n = self.integer()
            if n < 0 and not base.is_monomial():
                raise self.error("negative power of a multi-term expression", tok)
            if n < 0 and base.is_zero():
                raise self.error("negative power of zero", tok)
            return base ** n
        return base

    def integer(self) -> int:
        paren = False
        if self.peek()[1] == "(" and self.peek()[0] == "op":
            self.take()
            paren = True
        sign = 1
        while self.peek()[0] == "op" and self.peek()[1] in ("+", "-"):
            if self.take()[1] == "-":
                sign = -sign
        tok = self.take()
        if tok[0] != "num" or not tok[1].isdigit():
            raise self.error("exponent must be an integer literal", tok)
        if paren:
            self.expect(")")
        return sign * int(tok[1])

    def base(self):
        tok = self.take()
        kind, value, _ = tok
        if kind == "num":
            return LaurentPolynomial.constant(Fraction(value))
        if kind == "ident":
            return LaurentPolynomial.symbol(value)
        if kind == "op" and value == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        if kind == "end":
            raise self.error("unexpected end of expression", tok)
        raise self.error(f"unexpected token {value!r}", tok)


def parse_expr(text: str) -> LaurentPolynomial:
    """Parse an arithmetic expression into its canonical Laurent polynomial.

    >>> print(parse_expr("x^2/y^3 + 4*z^5 + 5/x - 6/w^2"))
    -6/w^2 + 5/x + x^2/y^3 + 4*z^5
    """
    return _Parser(text).parse()
