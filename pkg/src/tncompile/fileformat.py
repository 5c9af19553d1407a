"""Line-oriented system files.

::

    # comment
    const a = 1/10
    var x = 2
    direct x
    placeholder f = exp(-2*(x-3)^2)
    ode x' = y - 2
    A + 2B ->{k} 3C
    X <->{30}{0.5} 2X
    gamma 5/2
    beta 1
    mode stable            # only in compiled networks
    event 10 set x 10 1    # ratio reset (top, bottom)
    event 12 set x 4       # direct reset
    event 30 bias v 6
    sim t_end 25 points 1000 rtol 1e-8 atol 1e-10 max_step 0.5
    verify ratio_tol 1e-3 horizon 1

``gamma`` may be referenced inside ``ode`` lines; it resolves to the gamma
used for compilation.
"""
from __future__ import annotations

import ast
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping

from .expr import LaurentPolynomial, parse_expr, to_rational
from .odesys import ODESystem, Reaction, Representation, parse_reactions, reactions_to_odes
from .sim import Event, SetBias, SetDirect, SetRatio, SimParams
from .transform import Mode, TNSystem


class FormatError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = ""):
        self.line = line
        where = f"{source}:{line}: " if line is not None else ""
        super().__init__(where + message)


_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"


def _fmt(c) -> str:
    if isinstance(c, float):
        return str(int(c)) if c.is_integer() else repr(c)
    c = to_rational(c)
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def _number(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"not a number: {text!r}") from None


# -- placeholder implementations -------------------------------------------

_MATH_NAMES = {name: getattr(math, name) for name in (
    "exp", "log", "log10", "sqrt", "sin", "cos", "tan", "tanh", "sinh", "cosh",
    "atan", "pi", "e", "fabs")}
_MATH_NAMES.update(abs=abs, min=min, max=max)
_ALLOWED = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Constant, ast.Name, ast.Load,
            ast.Call, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)


class PlaceholderExpr:
    """Arithmetic expression over state names, evaluated at simulation time."""

    def __init__(self, text: str):
        self.text = text.strip()
        tree = ast.parse(self.text.replace("^", "**"), mode="eval")
        for node in ast.walk(tree):
            if not isinstance(node, _ALLOWED):
                raise ValueError(f"unsupported syntax in placeholder expression {text!r}")
            if isinstance(node, ast.Call) and not (
                    isinstance(node.func, ast.Name) and node.func.id in _MATH_NAMES):
                raise ValueError(f"unknown function in placeholder expression {text!r}")
        self.names = sorted({n.id for n in ast.walk(tree) if isinstance(n, ast.Name)}
                            - set(_MATH_NAMES))
        self._code = compile(tree, "<placeholder>", "eval")

    def __call__(self, env: Mapping[str, float]) -> float:
        scope = {n: env[n] for n in self.names}
        return float(eval(self._code, {"__builtins__": {}, **_MATH_NAMES}, scope))

    def __eq__(self, other):
        return isinstance(other, PlaceholderExpr) and other.text == self.text

    def __repr__(self):
        return f"PlaceholderExpr({self.text!r})"


# -- the file model ---------------------------------------------------------

@dataclass
class SystemFile:
    constants: dict[str, Fraction] = field(default_factory=dict)
    initial: dict[str, Fraction] = field(default_factory=dict)
    direct: list[str] = field(default_factory=list)
    placeholders: dict[str, PlaceholderExpr | None] = field(default_factory=dict)
    odes: dict[str, LaurentPolynomial] = field(default_factory=dict)
    reactions: list[Reaction] = field(default_factory=list)
    gamma: Fraction | None = None
    beta: Fraction | None = None
    mode: Mode | None = None
    events: list[Event] = field(default_factory=list)
    sim: dict[str, float] = field(default_factory=dict)
    verify: dict[str, float] = field(default_factory=dict)

    @property
    def is_network(self) -> bool:
        return self.mode is not None

    def sim_params(self, **overrides) -> SimParams:
        opts = {"t_end": 10.0}
        opts.update(self.sim)
        opts.update({k: v for k, v in overrides.items() if v is not None})
        return SimParams(
            t_end=float(opts["t_end"]),
            sample_points=int(opts.get("points", 1000)),
            rel_tol=float(opts.get("rtol", 1e-8)),
            abs_tol=float(opts.get("atol", 1e-10)),
            max_step=float(opts["max_step"]) if opts.get("max_step") else None,
        )

    def placeholder_impls(self) -> dict:
        missing = [n for n, impl in self.placeholders.items() if impl is None]
        if missing:
            raise FormatError(f"no implementation given for placeholders {missing}")
        return dict(self.placeholders)

    def to_system(self, gamma=None) -> ODESystem:
        """Source ODE system with constants (and ``gamma``) substituted."""
        bindings = {k: LaurentPolynomial.constant(v) for k, v in self.constants.items()}
        g = self.gamma if gamma is None else to_rational(gamma)
        if g is not None:
            bindings.setdefault("gamma", LaurentPolynomial.constant(g))
        rhs: dict[str, LaurentPolynomial] = {}
        for v, p in self.odes.items():
            if "gamma" in p.symbols and "gamma" not in bindings:
                raise FormatError(f"ode for {v} uses gamma but no gamma is set")
            rhs[v] = p.substitute(bindings)
        if self.reactions:
            crn = reactions_to_odes(self.reactions, {})
            for s in crn.variables:
                if s in rhs:
                    raise FormatError(f"{s} has both an ode line and reactions")
                if s not in self.initial:
                    raise FormatError(f"species {s} has no var declaration")
                rhs[s] = crn.rhs[s]
        variables = list(self.initial)
        for v in rhs:
            if v not in self.initial:
                raise FormatError(f"ode for undeclared variable {v}")
        for v in variables:
            rhs.setdefault(v, LaurentPolynomial())
        return ODESystem(
            variables=tuple(variables),
            rhs=rhs,
            initial=dict(self.initial),
            representation={v: Representation.DIRECT if v in self.direct else Representation.RATIO
                            for v in variables},
            placeholders=frozenset(self.placeholders),
        )

    def to_network(self) -> TNSystem:
        if not self.is_network:
            raise FormatError("file is not a compiled network (no mode line)")
        base = ODESystem(
            variables=tuple(self.initial),
            rhs={v: self.odes.get(v, LaurentPolynomial()) for v in self.initial},
            initial=dict(self.initial),
            representation={v: Representation.DIRECT for v in self.initial},
            placeholders=frozenset(self.placeholders),
        )
        return TNSystem.from_base(base, self.gamma, self.beta or 1, self.mode)

    def dumps(self) -> str:
        return print_system_file(self)


def _parse_event(rest: str) -> Event:
    parts = rest.split()
    if len(parts) < 4:
        raise ValueError("event needs: <time> set|bias <variable> <value...>")
    time, kind, var, *vals = parts
    t = float(_number(time))
    nums = [_number(x) for x in vals]
    if kind == "set" and len(nums) == 2:
        return Event(t, SetRatio(var, nums[0], nums[1]))
    if kind == "set" and len(nums) == 1:
        return Event(t, SetDirect(var, nums[0]))
    if kind == "bias" and len(nums) == 1:
        return Event(t, SetBias(var, nums[0]))
    raise ValueError(f"cannot parse event {rest!r}")


def _key_values(rest: str) -> dict[str, float]:
    parts = rest.split()
    if len(parts) % 2:
        raise ValueError("expected key/value pairs")
    out = {}
    for k, v in zip(parts[::2], parts[1::2]):
        out[k] = float(_number(v))
    return out


_SIM_KEYS = {"t_end", "points", "rtol", "atol", "max_step"}
_VERIFY_KEYS = {"ratio_tol", "horizon"}


def parse_system_file(text: str, source: str = "<string>") -> SystemFile:
    sf = SystemFile()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            _parse_line(sf, line)
        except FormatError:
            raise
        except (ValueError, KeyError) as exc:
            raise FormatError(str(exc), lineno, source) from None
    return sf


def _resolve_constant(sf: SystemFile, text: str) -> Fraction:
    bindings = {k: LaurentPolynomial.constant(v) for k, v in sf.constants.items()}
    p = parse_expr(text).substitute(bindings)
    if not p.is_constant():
        raise ValueError(f"{text!r} is not a constant expression")
    return p.constant_value()


def _parse_line(sf: SystemFile, line: str) -> None:
    keyword, _, rest = line.partition(" ")
    rest = rest.strip()
    if "->" in line and keyword not in ("ode", "placeholder"):
        sf.reactions.extend(parse_reactions(line, sf.constants))
        return
    if keyword == "const":
        m = re.fullmatch(rf"({_IDENT})\s*=\s*(.+)", rest)
        if not m:
            raise ValueError("expected: const <name> = <value>")
        sf.constants[m.group(1)] = _resolve_constant(sf, m.group(2))
    elif keyword == "var":
        m = re.fullmatch(rf"({_IDENT})\s*(?:=\s*(.+))?", rest)
        if not m:
            raise ValueError("expected: var <name> = <initial value>")
        if m.group(1) in sf.initial:
            raise ValueError(f"variable {m.group(1)} declared twice")
        value = _resolve_constant(sf, m.group(2)) if m.group(2) else Fraction(0)
        if value < 0:
            raise ValueError(f"initial value of {m.group(1)} is negative")
        sf.initial[m.group(1)] = value
    elif keyword == "direct":
        sf.direct.extend(rest.replace(",", " ").split())
    elif keyword == "placeholder":
        m = re.fullmatch(rf"({_IDENT})\s*(?:=\s*(.+))?", rest)
        if not m:
            raise ValueError("expected: placeholder <name> [= <expression>]")
        sf.placeholders[m.group(1)] = PlaceholderExpr(m.group(2)) if m.group(2) else None
    elif keyword == "ode":
        m = re.fullmatch(rf"({_IDENT})\s*'\s*=\s*(.+)", rest)
        if not m:
            raise ValueError("expected: ode <name>' = <expression>")
        if m.group(1) in sf.odes:
            raise ValueError(f"second ode for {m.group(1)}")
        sf.odes[m.group(1)] = parse_expr(m.group(2))
    elif keyword == "gamma":
        sf.gamma = _resolve_constant(sf, rest)
    elif keyword == "beta":
        sf.beta = _resolve_constant(sf, rest)
    elif keyword == "mode":
        sf.mode = Mode(rest)
    elif keyword == "event":
        sf.events.append(_parse_event(rest))
    elif keyword == "sim":
        opts = _key_values(rest)
        unknown = set(opts) - _SIM_KEYS
        if unknown:
            raise ValueError(f"unknown sim settings {sorted(unknown)}")
        sf.sim.update(opts)
    elif keyword == "verify":
        opts = _key_values(rest)
        unknown = set(opts) - _VERIFY_KEYS
        if unknown:
            raise ValueError(f"unknown verify settings {sorted(unknown)}")
        sf.verify.update(opts)
    else:
        raise ValueError(f"unknown directive {keyword!r}")


def _fmt_event(e: Event) -> str:
    a = e.action
    t = _fmt(e.time)
    if isinstance(a, SetRatio):
        return f"event {t} set {a.variable} {_fmt(a.top)} {_fmt(a.bottom)}"
    if isinstance(a, SetDirect):
        return f"event {t} set {a.variable} {_fmt(a.value)}"
    return f"event {t} bias {a.variable} {_fmt(a.constant)}"


def print_system_file(sf: SystemFile, header: str = "") -> str:
    lines = [f"# {h}" if h else "#" for h in header.splitlines()] if header else []
    lines += [f"const {k} = {_fmt(v)}" for k, v in sf.constants.items()]
    lines += [f"var {v} = {_fmt(x)}" for v, x in sf.initial.items()]
    if sf.direct:
        lines.append("direct " + " ".join(sf.direct))
    for name, impl in sf.placeholders.items():
        lines.append(f"placeholder {name}" + (f" = {impl.text}" if impl else ""))
    lines += [f"ode {v}' = {p}" for v, p in sf.odes.items()]
    lines += [str(r) for r in sf.reactions]
    if sf.gamma is not None:
        lines.append(f"gamma {_fmt(sf.gamma)}")
    if sf.beta is not None:
        lines.append(f"beta {_fmt(sf.beta)}")
    if sf.mode is not None:
        lines.append(f"mode {sf.mode.value}")
    lines += [_fmt_event(e) for e in sf.events]
    if sf.sim:
        lines.append("sim " + " ".join(f"{k} {_fmt(v)}" for k, v in sf.sim.items()))
    if sf.verify:
        lines.append("verify " + " ".join(f"{k} {_fmt(v)}" for k, v in sf.verify.items()))
    return "\n".join(lines) + "\n"


def network_file(tn: TNSystem, like: SystemFile | None = None) -> SystemFile:
    """File model of a compiled network, carrying over placeholders, events and sim settings."""
    like = like or SystemFile()
    return SystemFile(
        initial=dict(tn.base.initial),
        placeholders={p: like.placeholders.get(p) for p in sorted(tn.base.placeholders)},
        odes=dict(tn.base.rhs),
        gamma=tn.gamma,
        beta=tn.beta if tn.mode is Mode.STABLE else None,
        mode=tn.mode,
        events=list(like.events),
        sim=dict(like.sim),
        verify=dict(like.verify),
    )


def load(path) -> SystemFile:
    path = Path(path)
    return parse_system_file(path.read_text(), str(path))
