"""Compile ODE systems into transcriptional networks.

Every ratio variable ``v`` becomes a pair ``v_T``, ``v_B`` whose quotient
follows ``v``. Each compiled rhs has the shape ``production - gamma * self``
with a positive Laurent production term and one shared ``gamma``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .expr import LaurentPolynomial, Monomial, to_rational
from .odesys import ODESystem, Representation, hungarian_quotient

TOP_SUFFIX = "_T"
BOTTOM_SUFFIX = "_B"


class Mode(enum.Enum):
    STABLE = "stable"
    WARMUP = "warmup"


class CompileError(ValueError):
    pass


def top_name(v: str) -> str:
    return v + TOP_SUFFIX


def bottom_name(v: str) -> str:
    return v + BOTTOM_SUFFIX


def ratio_bindings(pairing: Mapping[str, tuple[str, str]]) -> dict[str, LaurentPolynomial]:
    return {v: LaurentPolynomial.symbol(t) * LaurentPolynomial.symbol(b, -1)
            for v, (t, b) in pairing.items()}


@dataclass(frozen=True)
class TNSystem:
    """A compiled network plus the bookkeeping needed to read it back.

    ``splits`` keeps, for each pair, the positive and negative parts of the
    source rhs after ratio substitution; bias events recompile a pair from
    them.
    """

    base: ODESystem
    pairing: Mapping[str, tuple[str, str]]
    gamma: Fraction
    beta: Fraction
    hungarian: Mapping[str, bool] = field(default_factory=dict)
    mode: Mode = Mode.STABLE
    splits: Mapping[str, tuple[LaurentPolynomial, LaurentPolynomial]] = field(default_factory=dict)
    source: ODESystem | None = field(default=None, compare=False)

    def __hash__(self):
        return hash((self.base, self.gamma, self.beta, self.mode))

    @property
    def direct_variables(self) -> list[str]:
        paired = {s for pair in self.pairing.values() for s in pair}
        return [w for w in self.base.variables if w not in paired]

    @property
    def original_variables(self) -> list[str]:
        """Source-level names: one per pair plus the direct variables, in base order."""
        owner = {}
        for v, (t, b) in self.pairing.items():
            owner[t] = owner[b] = v
        out: dict[str, None] = {}
        for w in self.base.variables:
            out[owner.get(w, w)] = None
        return list(out)

    @classmethod
    def from_base(cls, base: ODESystem, gamma, beta, mode: Mode = Mode.STABLE,
                  pairing: Mapping[str, tuple[str, str]] | None = None) -> TNSystem:
        """Rebuild a TNSystem from printed network equations.

        Pairs are recognised by the ``_T``/``_B`` suffixes unless ``pairing``
        is given; the per-pair splits are recovered by exact division.
        """
        gamma, beta = to_rational(gamma), to_rational(beta)
        if pairing is None:
            names = set(base.variables)
            pairing = {}
            for w in base.variables:
                if w.endswith(TOP_SUFFIX):
                    v = w[: -len(TOP_SUFFIX)]
                    if bottom_name(v) in names:
                        pairing[v] = (w, bottom_name(v))
        b = beta if mode is Mode.STABLE else Fraction(0)
        splits = {}
        for v, (t, bt) in pairing.items():
            T, B = LaurentPolynomial.symbol(t), LaurentPolynomial.symbol(bt)
            plus = (base.rhs[t] - b * T / B + gamma * T) / B
            minus = (base.rhs[bt] - b + gamma * B) * T / B ** 2
            splits[v] = (plus, minus)
        return cls(base=base, pairing=dict(pairing), gamma=gamma, beta=beta,
                   hungarian={v: minus_free_of_top(splits[v][1], pairing[v][0]) for v in pairing},
                   mode=mode, splits=splits)


def minus_free_of_top(minus: LaurentPolynomial, top: str) -> bool:
    return all(m.exponent(top) >= 1 for m in minus)


def _pair_rhs(t: str, b: str, plus: LaurentPolynomial, minus: LaurentPolynomial,
              gamma: Fraction, beta: Fraction, mode: Mode):
    T, B = LaurentPolynomial.symbol(t), LaurentPolynomial.symbol(b)
    top = plus * B - gamma * T
    bottom = minus * B ** 2 / T - gamma * B
    if mode is Mode.STABLE:
        top = top + beta * T / B
        bottom = bottom + beta
    return top, bottom


def compile(sys: ODESystem, gamma=None, beta=1, mode: Mode | str = Mode.STABLE,
            denominators: Mapping[str, object] | None = None,
            gamma_t_end: float = 25.0, gamma_margin: float = 1.1) -> TNSystem:
    """Build the transcriptional network that ratio-implements ``sys``.

    For a ratio variable with ``v' = p_plus - p_minus``::

        v_T' = beta*v_T/v_B + p_plus*v_B - gamma*v_T
        v_B' = beta + p_minus*v_B^2/v_T - gamma*v_B

    with every ratio variable ``u`` inside ``p_plus``/``p_minus`` replaced by
    ``u_T/u_B``. Warmup mode drops the two beta terms. Direct variables keep
    their rhs (after the same substitution) and must already be in network
    form. Canonical Laurent arithmetic cancels the ``1/v_T`` factor for
    Hungarian variables.

    When ``gamma`` is None it is estimated from a simulation of ``sys``.
    """
    mode = Mode(mode)
    beta = to_rational(beta)
    if gamma is None:
        gamma = estimate_gamma(sys, gamma_t_end, gamma_margin)
    gamma = to_rational(gamma)
    if gamma <= 0:
        raise CompileError(f"gamma must be positive, got {gamma}")
    if beta <= 0:
        raise CompileError(f"beta must be positive, got {beta}")
    denominators = {v: to_rational(d) for v, d in (denominators or {}).items()}

    for ph in sys.placeholders:
        for v, p in sys.rhs.items():
            for m in p:
                if m.exponent(ph) not in (0, 1):
                    raise CompileError(
                        f"placeholder {ph} appears with exponent {m.exponent(ph)} in rhs of {v}; "
                        "only exponent 1 is allowed")

    ratio_vars = sys.ratio_variables()
    pairing = {v: (top_name(v), bottom_name(v)) for v in ratio_vars}
    taken = set(sys.variables) | set(sys.placeholders)
    for v, (t, b) in pairing.items():
        if t in taken or b in taken:
            raise CompileError(f"compiled names for {v} collide with existing symbols")
    bindings = ratio_bindings(pairing)

    variables: list[str] = []
    rhs: dict[str, LaurentPolynomial] = {}
    initial: dict[str, Fraction] = {}
    hungarian: dict[str, bool] = {}
    splits = {}
    for v in sys.variables:
        if sys.representation[v] is Representation.DIRECT:
            p = sys.rhs[v].substitute(bindings)
            problems = _tn_violations(v, p, gamma)
            if problems:
                raise CompileError(
                    f"direct variable {v} is not in network form with gamma={gamma}: "
                    + "; ".join(problems))
            variables.append(v)
            rhs[v] = p
            initial[v] = sys.initial[v]
            continue
        q = hungarian_quotient(sys, v)
        hungarian[v] = q is not None
        if q is None and sys.initial[v] == 0:
            raise CompileError(
                f"{v} is not in Hungarian form and has initial value 0; "
                "its bottom factor would divide by zero")
        plus, minus = sys.rhs[v].split_signs()
        plus, minus = plus.substitute(bindings), minus.substitute(bindings)
        t, b = pairing[v]
        rhs[t], rhs[b] = _pair_rhs(t, b, plus, minus, gamma, beta, mode)
        d = denominators.get(v, Fraction(1))
        if d <= 0:
            raise CompileError(f"denominator scale for {v} must be positive")
        initial[t], initial[b] = sys.initial[v] * d, d
        variables += [t, b]
        splits[v] = (plus, minus)

    base = ODESystem(
        variables=tuple(variables), rhs=rhs, initial=initial,
        representation={w: Representation.DIRECT for w in variables},
        placeholders=sys.placeholders,
    )
    tn = TNSystem(base=base, pairing=pairing, gamma=gamma, beta=beta,
                  hungarian=hungarian, mode=mode, splits=splits, source=sys)
    report = validate_tn(base, gamma)
    if not report.valid:
        raise CompileError("compiled system is not a transcriptional network:\n" + str(report))
    return tn


def with_bias(tn: TNSystem, biases: Mapping[str, object]) -> TNSystem:
    """Recompile pairs with a constant added to the source rhs.

    A positive bias joins ``p_plus``, a negative one joins ``p_minus`` as
    its absolute value. Direct variables get the constant added as is.
    """
    if not biases:
        return tn
    rhs = dict(tn.base.rhs)
    splits = dict(tn.splits)
    for v, c in biases.items():
        c = to_rational(c)
        if c == 0:
            continue
        if v in tn.pairing:
            plus, minus = tn.splits[v]
            if c > 0:
                plus = plus + c
            else:
                minus = minus - c
            t, b = tn.pairing[v]
            rhs[t], rhs[b] = _pair_rhs(t, b, plus, minus, tn.gamma, tn.beta, tn.mode)
            splits[v] = (plus, minus)
        elif v in tn.base.rhs:
            rhs[v] = rhs[v] + c
        else:
            raise KeyError(f"no variable {v!r} to bias")
    return TNSystem(base=tn.base.replace(rhs=rhs), pairing=tn.pairing, gamma=tn.gamma,
                    beta=tn.beta, hungarian=tn.hungarian, mode=tn.mode, splits=splits,
                    source=tn.source)


# ---------------------------------------------------------------------------

@dataclass
class ValidationReport:
    gamma: Fraction
    violations: list[tuple[str, Monomial, Fraction]]

    @property
    def valid(self) -> bool:
        return not self.violations

    def __str__(self):
        if self.valid:
            return f"valid transcriptional network (gamma={self.gamma})"
        lines = [f"{len(self.violations)} violation(s) with gamma={self.gamma}:"]
        for v, m, c in self.violations:
            term = LaurentPolynomial({m: c})
            lines.append(f"  {v}: negative monomial {term}")
        return "\n".join(lines)


def _tn_violations(v: str, p: LaurentPolynomial, gamma: Fraction) -> list[str]:
    production = p + gamma * LaurentPolynomial.symbol(v)
    return [str(LaurentPolynomial({m: c})) for m, c in production.items() if c < 0]


def validate_tn(sys: ODESystem, gamma) -> ValidationReport:
    """Check that every ``rhs(w) + gamma*w`` is a positive Laurent polynomial."""
    gamma = to_rational(gamma)
    violations = []
    for w in sys.variables:
        production = sys.rhs[w] + gamma * LaurentPolynomial.symbol(w)
        violations += [(w, m, c) for m, c in production.items() if c < 0]
    if gamma <= 0:
        violations.append(("gamma", Monomial(), gamma))
    return ValidationReport(gamma, violations)


# ---------------------------------------------------------------------------

def round_up_rational(x: float, digits: int = 2) -> Fraction:
    """Smallest decimal with ``digits`` significant digits that is >= x."""
    if x <= 0:
        raise ValueError("expected a positive value")
    e = math.floor(math.log10(x)) - (digits - 1)
    unit = Fraction(10) ** e
    scaled = Fraction(x) / unit
    # absorb float noise just above a representable value
    n = math.ceil(scaled - Fraction(1, 10 ** 9))
    return n * unit


def quotient_bounds(sys: ODESystem, traj, events=(), placeholder_impls=None) -> dict[str, float]:
    """Per ratio variable, the largest ``p_minus / v`` seen along ``traj``.

    Hungarian variables use the exact quotient polynomial, so they stay
    finite at ``v == 0``. Active bias events are folded into ``p_minus``.
    """
    from .sim import placeholder_env, SetBias

    impls = dict(placeholder_impls or {})
    bias_events = sorted((e for e in events if isinstance(e.action, SetBias)),
                         key=lambda e: e.time)
    names = list(traj.values)
    cols = [traj.values[n] for n in names]
    sup: dict[str, float] = {v: 0.0 for v in sys.ratio_variables()}
    quotients = {v: hungarian_quotient(sys, v) for v in sup}
    minus_parts = {v: sys.rhs[v].split_signs()[1] for v in sup}
    bias: dict[str, Fraction] = {}
    k = 0
    for i, t in enumerate(traj.times):
        while k < len(bias_events) and bias_events[k].time <= t:
            a = bias_events[k].action
            bias[a.variable] = to_rational(a.constant)
            k += 1
        point = {n: float(c[i]) for n, c in zip(names, cols)}
        for ph in sys.placeholders:
            point[ph] = impls[ph](placeholder_env(point, None))
        for v in sup:
            x = point[v]
            extra = -bias[v] if bias.get(v, 0) < 0 else 0
            q = quotients[v]
            if q is not None:
                val = q.evaluate(point)
                if extra:
                    if x <= 0:
                        raise ZeroDivisionError(f"{v} vanishes at t={t} under a negative bias")
                    val += float(extra) / x
            else:
                if x <= 0:
                    raise ZeroDivisionError(
                        f"non-Hungarian variable {v} reaches {x} at t={t}")
                val = (minus_parts[v].evaluate(point) + float(extra)) / x
            if not math.isfinite(val):
                raise ValueError(f"p_minus/{v} is not finite at t={t}")
            sup[v] = max(sup[v], val)
    return sup


def estimate_gamma(sys: ODESystem, t_end: float = 25.0, margin: float = 1.1, *,
                   events=(), placeholder_impls=None, params=None) -> Fraction:
    """Empirical decay constant: ``margin`` times the largest ``p_minus/v`` seen.

    Simulates the source system over ``[0, t_end]`` and rounds the result up
    to two significant digits. Systems without negative terms get 1.
    """
    from .sim import SimParams, integrate

    if margin < 1:
        raise ValueError("margin must be at least 1")
    if params is None:
        params = SimParams(t_end=t_end)
    traj = integrate(sys, params, events, placeholder_impls)
    sup = max(quotient_bounds(sys, traj, events, placeholder_impls).values(), default=0.0)
    if sup <= 0:
        return Fraction(1)
    return round_up_rational(margin * sup)


def add_tracker(tn: TNSystem, name: str, target: Sequence[tuple[object, str]],
                gamma_track=None) -> TNSystem:
    """Add a direct factor relaxing toward ``sum(c * v_T/v_B)``.

    ``name' = g*(sum(c_i * v_i_T/v_i_B) - name)`` with ``g`` equal to the
    network's gamma; another rate would put a second decay constant in the
    network. A target entry whose variable is ``"1"`` contributes the bare
    constant ``c``.
    """
    g = tn.gamma if gamma_track is None else to_rational(gamma_track)
    if g <= 0:
        raise ValueError("tracking rate must be positive")
    if g != tn.gamma:
        raise ValueError(
            f"tracking rate {g} differs from the network decay constant {tn.gamma}")
    if name in tn.base.variables or name in tn.base.placeholders or name in tn.pairing:
        raise ValueError(f"name {name!r} is already used")
    production = LaurentPolynomial()
    for c, v in target:
        c = to_rational(c)
        if c <= 0:
            raise ValueError(f"tracker coefficient for {v} must be positive, got {c}")
        if v == "1":
            production = production + c
            continue
        if v not in tn.pairing:
            raise KeyError(f"{v} is not a ratio pair of the network")
        t, b = tn.pairing[v]
        production = production + c * LaurentPolynomial.symbol(t) / LaurentPolynomial.symbol(b)
    rhs = dict(tn.base.rhs)
    rhs[name] = g * production - g * LaurentPolynomial.symbol(name)
    initial = dict(tn.base.initial)
    initial[name] = Fraction(0)
    base = ODESystem(
        variables=tn.base.variables + (name,), rhs=rhs, initial=initial,
        representation={w: Representation.DIRECT for w in tn.base.variables + (name,)},
        placeholders=tn.base.placeholders,
    )
    return TNSystem(base=base, pairing=tn.pairing, gamma=tn.gamma, beta=tn.beta,
                    hungarian=tn.hungarian, mode=tn.mode, splits=tn.splits, source=tn.source)
