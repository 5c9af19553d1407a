"""Polynomial / Laurent ODE systems, reaction networks and source-level transforms."""
from __future__ import annotations

import enum
import re
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .expr import LaurentPolynomial, Monomial, parse_expr, to_rational


class Representation(enum.Enum):
    RATIO = "ratio"
    DIRECT = "direct"


@dataclass(frozen=True)
class Diagnostic:
    variable: str
    message: str
    severity: str = "warning"

    def __str__(self):
        return f"{self.severity}: {self.variable}: {self.message}"


@dataclass(frozen=True, eq=True)
class ODESystem:
    """Named variables with Laurent right-hand sides and initial values.

    ``representation`` defaults to ratio for every variable; ``placeholders``
    are externally driven nonnegative signals that have no ODE of their own.
    """

    variables: tuple[str, ...]
    rhs: Mapping[str, LaurentPolynomial]
    initial: Mapping[str, Fraction]
    representation: Mapping[str, Representation] = field(default_factory=dict)
    placeholders: frozenset[str] = frozenset()

    def __post_init__(self):
        variables = tuple(self.variables)
        if len(set(variables)) != len(variables):
            raise ValueError("duplicate variable names")
        rhs = {v: LaurentPolynomial.lift(self.rhs.get(v, 0)) for v in variables}
        extra = set(self.rhs) - set(variables)
        if extra:
            raise ValueError(f"rhs given for undeclared variables {sorted(extra)}")
        initial = {v: to_rational(self.initial.get(v, 0)) for v in variables}
        for v, x0 in initial.items():
            if x0 < 0:
                raise ValueError(f"initial value of {v} is negative ({x0})")
        rep = {v: Representation(self.representation.get(v, Representation.RATIO))
               for v in variables}
        placeholders = frozenset(self.placeholders)
        clash = placeholders & set(variables)
        if clash:
            raise ValueError(f"placeholders {sorted(clash)} are also variables")
        known = set(variables) | placeholders
        for v, p in rhs.items():
            unknown = p.symbols - known
            if unknown:
                raise ValueError(
                    f"rhs of {v} uses undeclared symbols {sorted(unknown)}")
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "rhs", rhs)
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "representation", rep)
        object.__setattr__(self, "placeholders", placeholders)

    def __hash__(self):
        return hash((self.variables, tuple(self.rhs[v] for v in self.variables)))

    @classmethod
    def from_strings(cls, odes: Mapping[str, str], initial: Mapping[str, object],
                     direct: Iterable[str] = (), placeholders: Iterable[str] = ()):
        """Convenience constructor: ``{"x": "y - 2", ...}``."""
        direct = set(direct)
        return cls(
            variables=tuple(odes),
            rhs={v: parse_expr(t) for v, t in odes.items()},
            initial={v: to_rational(initial.get(v, 0)) for v in odes},
            representation={v: Representation.DIRECT if v in direct else Representation.RATIO
                            for v in odes},
            placeholders=frozenset(placeholders),
        )

    def replace(self, **changes) -> ODESystem:
        fields = dict(variables=self.variables, rhs=self.rhs, initial=self.initial,
                      representation=self.representation, placeholders=self.placeholders)
        fields.update(changes)
        return ODESystem(**fields)

    def ratio_variables(self) -> list[str]:
        return [v for v in self.variables if self.representation[v] is Representation.RATIO]

    def direct_variables(self) -> list[str]:
        return [v for v in self.variables if self.representation[v] is Representation.DIRECT]

    def __str__(self):
        lines = [f"{v}' = {self.rhs[v]}    [{v}(0) = {self.initial[v]}]" for v in self.variables]
        return "\n".join(lines)


def hungarian_quotient(sys: ODESystem, v: str) -> LaurentPolynomial | None:
    """``q`` with ``p_minus == v * q`` if every negative monomial carries ``v``.

    The test is syntactic: each monomial of the negative part must have
    exponent at least 1 in ``v``. Returns None otherwise.
    """
    if v not in sys.rhs:
        raise KeyError(v)
    _, minus = sys.rhs[v].split_signs()
    if any(m.exponent(v) < 1 for m in minus):
        return None
    return minus / LaurentPolynomial.symbol(v)


def is_hungarian(sys: ODESystem, v: str) -> bool:
    return hungarian_quotient(sys, v) is not None


@dataclass(frozen=True)
class Reaction:
    reactants: Counter
    products: Counter
    rate_constant: Fraction

    def __post_init__(self):
        object.__setattr__(self, "reactants", Counter(self.reactants))
        object.__setattr__(self, "products", Counter(self.products))
        object.__setattr__(self, "rate_constant", to_rational(self.rate_constant))
        if self.rate_constant <= 0:
            raise ValueError(f"rate constant must be positive, got {self.rate_constant}")
        for side in (self.reactants, self.products):
            if any(n <= 0 for n in side.values()):
                raise ValueError("stoichiometric coefficients must be positive")

    def __hash__(self):
        return hash((tuple(sorted(self.reactants.items())),
                     tuple(sorted(self.products.items())), self.rate_constant))

    @property
    def species(self) -> list[str]:
        seen = dict.fromkeys(list(self.reactants) + list(self.products))
        return list(seen)

    def __str__(self):
        return f"{_format_side(self.reactants)} ->{{{_fmt(self.rate_constant)}}} {_format_side(self.products)}"


def _fmt(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def _format_side(side: Counter) -> str:
    if not side:
        return "0"
    return " + ".join(s if n == 1 else f"{n}{s}" for s, n in side.items())


_SPECIES = re.compile(r"^\s*(\d*)\s*\*?\s*([A-Za-z_][A-Za-z0-9_]*)\s*$")
_ARROW = re.compile(r"(<->|->)((?:\{[^}]*\})+)")


def _parse_side(text: str) -> Counter:
    text = text.strip()
    if text in ("0", "empty", "∅", ""):
        return Counter()
    out: Counter = Counter()
    for part in text.split("+"):
        m = _SPECIES.match(part)
        if not m:
            raise ValueError(f"cannot parse species term {part.strip()!r}")
        out[m.group(2)] += int(m.group(1) or 1)
    return out


def parse_reactions(text: str, constants: Mapping[str, Fraction] | None = None) -> list[Reaction]:
    """Parse ``A + 2B ->{k} 3C`` or ``X <->{30}{0.5} 2X``.

    Rate braces hold an expression that must reduce to a positive constant
    once ``constants`` are substituted.
    """
    m = _ARROW.search(text)
    if not m:
        raise ValueError(f"no reaction arrow in {text!r}")
    rates = re.findall(r"\{([^}]*)\}", m.group(2))
    lhs = _parse_side(text[:m.start()])
    rhs = _parse_side(text[m.end():])
    bindings = {k: LaurentPolynomial.constant(c) for k, c in (constants or {}).items()}

    def rate(expr: str) -> Fraction:
        p = parse_expr(expr).substitute(bindings)
        if not p.is_constant():
            raise ValueError(f"rate {expr!r} is not a constant")
        return p.constant_value()

    if m.group(1) == "->":
        if len(rates) != 1:
            raise ValueError(f"irreversible reaction needs one rate: {text!r}")
        return [Reaction(lhs, rhs, rate(rates[0]))]
    if len(rates) != 2:
        raise ValueError(f"reversible reaction needs two rates: {text!r}")
    return [Reaction(lhs, rhs, rate(rates[0])), Reaction(rhs, lhs, rate(rates[1]))]


def reactions_to_odes(crn: Iterable[Reaction], initial: Mapping[str, object]) -> ODESystem:
    """Mass-action ODEs of a reaction network.

    Each reaction contributes ``(net stoichiometry) * k * prod(reactant^mult)``
    to every species it changes.
    """
    crn = list(crn)
    order: dict[str, None] = {}
    for r in crn:
        order.update(dict.fromkeys(r.species))
    order.update(dict.fromkeys(initial))
    species = list(order)
    rhs = {s: LaurentPolynomial() for s in species}
    for r in crn:
        rate = LaurentPolynomial({Monomial(r.reactants.items()): r.rate_constant})
        for s in set(r.reactants) | set(r.products):
            net = r.products.get(s, 0) - r.reactants.get(s, 0)
            if net:
                rhs[s] = rhs[s] + net * rate
    return ODESystem(
        variables=tuple(species),
        rhs=rhs,
        initial={s: to_rational(initial.get(s, 0)) for s in species},
    )


def shift_variable(sys: ODESystem, v: str, c) -> ODESystem:
    """Replace ``v`` by ``v - c`` in every rhs and raise ``v``'s initial value by ``c``.

    Trajectories of the new ``v`` are the old ones plus ``c``.
    """
    if v not in sys.rhs:
        raise KeyError(v)
    c = to_rational(c)
    if c == 0:
        return sys
    shifted = LaurentPolynomial.symbol(v) - c
    binding = {v: shifted}
    rhs = {}
    for w, p in sys.rhs.items():
        if p.min_exponent(v) < 0:
            raise ValueError(
                f"{v} appears with a negative exponent in the rhs of {w}; "
                "shifting would leave the Laurent ring")
        rhs[w] = p.substitute(binding)
    initial = dict(sys.initial)
    initial[v] = initial[v] + c
    if initial[v] < 0:
        raise ValueError(f"shift makes the initial value of {v} negative")
    return sys.replace(rhs=rhs, initial=initial)


def check_positivity_preconditions(sys: ODESystem) -> list[Diagnostic]:
    """Flag variables the compiler can only handle if they stay bounded away from 0."""
    out = []
    for v in sys.ratio_variables():
        if is_hungarian(sys, v):
            continue
        if sys.initial[v] == 0:
            out.append(Diagnostic(
                v, "not in Hungarian form and starts at 0; compiled rates would be singular",
                "error"))
        else:
            out.append(Diagnostic(
                v, "not in Hungarian form; must remain bounded-positive along the trajectory"))
    return out
