"""Numerical integration of Laurent ODE systems with timed interventions.

The integrator is Dormand-Prince 5(4) with PI step-size control and the
standard fourth-order continuous extension, sampled on a uniform grid.
Events split the run into epochs; integration restarts at every event time.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

from .expr import LaurentPolynomial, to_rational
from .odesys import ODESystem
from .transform import TNSystem, with_bias

PlaceholderFn = Callable[[Mapping[str, float]], float]


class SimulationError(RuntimeError):
    """Integration stopped early; ``partial`` holds the samples produced so far."""

    def __init__(self, message: str, t: float, partial: Trajectory | None = None):
        super().__init__(message)
        self.t = t
        self.partial = partial


class BlowUpError(SimulationError):
    pass


class StepSizeUnderflow(SimulationError):
    pass


class PlaceholderError(SimulationError):
    pass


@dataclass(frozen=True)
class SimParams:
    t_end: float
    sample_points: int = 1000
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float | None = None
    max_steps: int = 1_000_000

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.sample_points < 1:
            raise ValueError("sample_points must be at least 1")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_step is not None and not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.sample_points + 1)


# -- events -----------------------------------------------------------------

@dataclass(frozen=True)
class SetRatio:
    variable: str
    top: float
    bottom: float

    def __post_init__(self):
        if not self.bottom > 0:
            raise ValueError("bottom value must be positive")
        if self.top < 0:
            raise ValueError("top value must be nonnegative")


@dataclass(frozen=True)
class SetDirect:
    variable: str
    value: float

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("value must be nonnegative")


@dataclass(frozen=True)
class SetBias:
    variable: str
    constant: Fraction

    def __post_init__(self):
        object.__setattr__(self, "constant", to_rational(self.constant))


Action = Union[SetRatio, SetDirect, SetBias]


@dataclass(frozen=True)
class Event:
    time: float
    action: Action

    def __post_init__(self):
        if self.time < 0:
            raise ValueError("event time must be nonnegative")


def schedule(events: Iterable[Event]) -> list[Event]:
    """Events sorted by time; ties keep their given order."""
    return sorted(events, key=lambda e: e.time)


# -- trajectories -----------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    values: dict[str, np.ndarray]
    event_marks: tuple[int, ...] = ()

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    @property
    def variables(self) -> list[str]:
        return list(self.values)

    def at(self, t: float) -> dict[str, float]:
        i = int(np.argmin(np.abs(self.times - t)))
        return {k: float(v[i]) for k, v in self.values.items()}

    def truncated(self, n: int) -> Trajectory:
        """The first ``n`` samples."""
        return Trajectory(self.times[:n], {k: v[:n] for k, v in self.values.items()},
                          tuple(m for m in self.event_marks if m < n))

    def with_columns(self, extra: Mapping[str, np.ndarray]) -> Trajectory:
        values = dict(self.values)
        values.update(extra)
        return Trajectory(self.times, values, self.event_marks)

    def to_csv(self, columns: Sequence[str] | None = None) -> str:
        columns = list(columns or self.values)
        buf = io.StringIO()
        buf.write(",".join(["t"] + columns) + "\n")
        cols = [self.times] + [self.values[c] for c in columns]
        for row in zip(*cols):
            buf.write(",".join(format(float(x), ".17g") for x in row) + "\n")
        return buf.getvalue()

    def write_csv(self, path, columns: Sequence[str] | None = None) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(self.to_csv(columns))


# -- right-hand side code generation ----------------------------------------

def _term_code(mono, coeff: Fraction, names: Mapping[str, str]) -> str:
    num, den = [], []
    for s, e in mono.exps:
        ref = names[s]
        if e > 0:
            num.append(ref if e == 1 else f"{ref}**{e}")
        else:
            den.append(ref if e == -1 else f"{ref}**{-e}")
    c = float(coeff)
    text = "*".join([repr(c)] + num) if (c != 1.0 or not num) else "*".join(num)
    if den:
        text += "/(" + "*".join(den) + ")"
    return text


def poly_code(p: LaurentPolynomial, names: Mapping[str, str]) -> str:
    if p.is_zero():
        return "0.0"
    return " + ".join(_term_code(m, c, names) for m, c in p.items())


def placeholder_env(state: Mapping[str, float],
                    pairing: Mapping[str, tuple[str, str]] | None) -> dict[str, float]:
    """State as seen by placeholder functions: variables plus pair ratios."""
    env = dict(state)
    for v, (t, b) in (pairing or {}).items():
        env.setdefault(v, state[t] / state[b] if state[b] != 0 else math.inf)
    return env


def _checked(name: str) -> Callable[[float], float]:
    def check(value):
        value = float(value)
        if not math.isfinite(value) or value < 0:
            raise PlaceholderError(f"placeholder {name} returned {value}", math.nan)
        return value
    return check


def build_rhs(variables: Sequence[str], rhs: Mapping[str, LaurentPolynomial],
              placeholders: Iterable[str] = (),
              impls: Mapping[str, PlaceholderFn] | None = None,
              pairing: Mapping[str, tuple[str, str]] | None = None):
    """Generate ``f(t, y) -> list`` evaluating ``rhs`` in ``variables`` order.

    Placeholders are evaluated from the current state on every call.
    """
    placeholders = sorted(placeholders)
    impls = impls or {}
    missing = [p for p in placeholders if p not in impls]
    if missing:
        raise ValueError(f"no implementation bound for placeholders {missing}")
    names = {v: f"_y{i}" for i, v in enumerate(variables)}
    names.update({p: f"_p{i}" for i, p in enumerate(placeholders)})
    ns: dict[str, object] = {"_env": placeholder_env, "_pairing": dict(pairing or {})}
    lines = ["def _rhs(t, y):"]
    if variables:
        lines.append(f"    {', '.join(names[v] for v in variables)}, = y")
    if placeholders:
        state = ", ".join(f"{v!r}: {names[v]}" for v in variables)
        lines.append(f"    _state = _env({{{state}}}, _pairing)")
        for i, p in enumerate(placeholders):
            ns[f"_impl{i}"] = impls[p]
            ns[f"_chk{i}"] = _checked(p)
            lines.append(f"    {names[p]} = _chk{i}(_impl{i}(_state))")
    body = ", ".join(poly_code(rhs[v], names) for v in variables)
    lines.append(f"    return [{body}]")
    exec("\n".join(lines), ns)
    return ns["_rhs"]


# -- Dormand-Prince 5(4) ----------------------------------------------------

_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = np.array(_A[6] + (0.0,))
# fifth-order minus embedded fourth-order weights
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension
_D = np.array([-12715105075 / 11282082432, 0.0, 87487479700 / 32700410799,
               -10690763975 / 1880347072, 701980252875 / 199316789632,
               -1453857185 / 822651844, 69997945 / 29380423])
_A_ROWS = [np.array(r) for r in _A]

_SAFETY = 0.9
_BETA = 0.04
_EXPO = 0.2 - 0.75 * _BETA
_FAC_MIN, _FAC_MAX = 0.2, 10.0
_H_MIN = 16 * np.finfo(float).eps
# growth factor over the epoch's start that turns a step collapse into a blow-up
_RUNAWAY = 1e6


def _eval(f, t, y):
    """Derivative at ``(t, y)``; None when the rhs is undefined or non-finite."""
    try:
        k = np.array(f(t, y), dtype=float)
    except (ZeroDivisionError, OverflowError):
        return None
    except PlaceholderError as exc:
        raise PlaceholderError(str(exc), t) from None
    return k if np.isfinite(k).all() else None


def _norm(x, scale):
    if not x.size:
        return 0.0
    r = x / scale
    return math.sqrt(float(r @ r) / r.size)


def _initial_step(f, t0, y0, f0, rtol, atol, span, max_step):
    scale = atol + rtol * np.abs(y0)
    d0, d1 = _norm(y0, scale), _norm(f0, scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span, max_step)
    f1 = _eval(f, t0 + h0, y0 + h0 * f0)
    d2 = _norm(f1 - f0, scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span, max_step)


def dopri5(f, t0: float, t1: float, y0: np.ndarray, sample_times: np.ndarray,
           rtol: float, atol: float, max_step: float | None = None,
           max_steps: int = 1_000_000):
    """Integrate ``y' = f(t, y)`` from ``t0`` to ``t1``.

    Returns ``(samples, y1)`` where ``samples[i]`` is the dense-output value
    at ``sample_times[i]`` (all within ``[t0, t1]``). Raises
    :class:`BlowUpError` on non-finite states and :class:`StepSizeUnderflow`
    when the step collapses; both carry the last time reached and the
    samples filled so far as ``exc.samples``.
    """
    y = np.array(y0, dtype=float)
    out = np.empty((len(sample_times), y.size))
    state = {"j": 0}
    try:
        y = _dopri5_loop(f, t0, t1, y, sample_times, out, state, rtol, atol, max_step,
                          max_steps)
    except SimulationError as exc:
        exc.samples = out[:state["j"]]
        raise
    return out, y


def _dopri5_loop(f, t0, t1, y, sample_times, out, state, rtol, atol, max_step, max_steps):
    n_samples = len(sample_times)
    j = 0
    while j < n_samples and sample_times[j] <= t0:
        out[j] = y
        j += 1
    state["j"] = j
    span = t1 - t0
    if span <= 0 or y.size == 0:
        out[j:] = y
        state["j"] = n_samples
        return y
    max_step = span if max_step is None else min(max_step, span)

    t = t0
    y_scale = 1.0 + float(np.max(np.abs(y)))
    k1 = _eval(f, t, y)
    if k1 is None:
        raise BlowUpError(f"derivative undefined or non-finite at t={t}", t)
    h = _initial_step(f, t, y, k1, rtol, atol, span, max_step)
    K = np.empty((7, y.size))
    facold = 1e-4
    rejected = False
    nonfinite = False
    steps = 0
    while t < t1:
        steps += 1
        if steps > max_steps:
            raise StepSizeUnderflow(f"too many steps before t={t}", t)
        if h < _H_MIN * max(abs(t), 1.0):
            if nonfinite or float(np.max(np.abs(y))) > _RUNAWAY * y_scale:
                raise BlowUpError(f"solution blows up near t={t}", t)
            raise StepSizeUnderflow(f"step size underflow at t={t}", t)
        last = t + h >= t1
        if last:
            h = t1 - t
        K[0] = k1
        ok = True
        for s in range(1, 7):
            ys = y + h * (_A_ROWS[s] @ K[:s])
            k = _eval(f, t + _C[s] * h, ys)
            if k is None:
                ok = False
                break
            K[s] = k
        if not ok or not np.isfinite(ys).all():
            h *= 0.25
            rejected = nonfinite = True
            continue
        y_new = ys  # last stage point is the fifth-order solution (FSAL)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = _norm(h * (_E @ K), scale)
        if not math.isfinite(err):
            h *= 0.25
            rejected = nonfinite = True
            continue
        fac11 = err ** _EXPO
        fac = fac11 / facold ** _BETA
        fac = max(1 / _FAC_MAX, min(1 / _FAC_MIN, fac / _SAFETY))
        h_new = h / fac
        if err <= 1.0:
            nonfinite = False
            facold = max(err, 1e-4)
            t_new = t1 if last else t + h
            if j < n_samples and sample_times[j] <= t_new:
                ydiff = y_new - y
                bspl = h * K[0] - ydiff
                r4 = ydiff - h * K[6] - bspl
                r5 = h * (_D @ K)
                while j < n_samples and sample_times[j] <= t_new:
                    th = (sample_times[j] - t) / h
                    th1 = 1.0 - th
                    out[j] = y + th * (ydiff + th1 * (bspl + th * (r4 + th1 * r5)))
                    j += 1
                state["j"] = j
            t, y, k1 = t_new, y_new, K[6].copy()
            if rejected:
                h_new = min(h_new, h)
            rejected = False
            h = min(h_new, max_step)
        else:
            h = h / min(1 / _FAC_MIN, fac11 / _SAFETY)
            rejected = True
    out[j:] = y
    state["j"] = n_samples
    return y


# -- systems ----------------------------------------------------------------

SystemLike = Union[ODESystem, TNSystem]


def _epoch_system(system: SystemLike, biases: Mapping[str, Fraction]):
    if isinstance(system, TNSystem):
        return with_bias(system, biases).base
    if not biases:
        return system
    rhs = dict(system.rhs)
    for v, c in biases.items():
        if v not in rhs:
            raise KeyError(f"no variable {v!r} to bias")
        rhs[v] = rhs[v] + c
    return system.replace(rhs=rhs)


def _apply(action: Action, state: dict[str, float], system: SystemLike,
           biases: dict[str, Fraction]) -> None:
    pairing = system.pairing if isinstance(system, TNSystem) else {}
    v = action.variable
    if isinstance(action, SetBias):
        biases[v] = action.constant
        return
    if isinstance(action, SetRatio):
        if v in pairing:
            t, b = pairing[v]
            state[t], state[b] = float(action.top), float(action.bottom)
        elif v in state:
            state[v] = float(action.top) / float(action.bottom)
        else:
            raise KeyError(f"event targets unknown variable {v!r}")
        return
    if v in pairing:
        t, b = pairing[v]
        state[t] = float(action.value) * state[b]
    elif v in state:
        state[v] = float(action.value)
    else:
        raise KeyError(f"event targets unknown variable {v!r}")


def integrate(system: SystemLike, params: SimParams | None = None,
              events: Iterable[Event] = (),
              placeholder_impls: Mapping[str, PlaceholderFn] | None = None) -> Trajectory:
    """Simulate an ODE system or a compiled network on ``params.grid``.

    Events fire in time order; the sample at an event time shows the
    post-event state. On blow-up the raised error carries the partial
    trajectory up to the last finite time.
    """
    params = params or SimParams(t_end=1.0)
    base = system.base if isinstance(system, TNSystem) else system
    pairing = system.pairing if isinstance(system, TNSystem) else None
    variables = list(base.variables)
    grid = params.grid
    events = [e for e in schedule(events) if e.time <= params.t_end]
    state = {v: float(base.initial[v]) for v in variables}
    biases: dict[str, Fraction] = {}
    out = np.empty((grid.size, len(variables)))
    marks: list[int] = []
    rhs_cache: dict[tuple, Callable] = {}

    def rhs_for(b):
        key = tuple(sorted(b.items()))
        if key not in rhs_cache:
            sys_e = _epoch_system(system, b)
            rhs_cache[key] = build_rhs(variables, sys_e.rhs, base.placeholders,
                                       placeholder_impls, pairing)
        return rhs_cache[key]

    t = 0.0
    i = 0  # next grid index to fill
    ev = 0
    while True:
        while ev < len(events) and events[ev].time <= t:
            _apply(events[ev].action, state, system, biases)
            mark = int(np.searchsorted(grid, events[ev].time, side="left"))
            if mark < grid.size and (not marks or marks[-1] != mark):
                marks.append(mark)
            ev += 1
        t_next = events[ev].time if ev < len(events) else params.t_end
        # grid points in [t, t_next), plus t_end on the final epoch
        if ev < len(events):
            stop = int(np.searchsorted(grid, t_next, side="left"))
        else:
            stop = grid.size
        y0 = np.array([state[v] for v in variables])
        try:
            samples, y1 = dopri5(rhs_for(biases), t, t_next, y0, grid[i:stop],
                                 params.rel_tol, params.abs_tol, params.max_step,
                                 params.max_steps)
        except SimulationError as exc:
            got = getattr(exc, "samples", np.empty((0, len(variables))))
            out[i:i + len(got)] = got
            partial = _partial(grid, out, i + len(got), variables, marks)
            raise type(exc)(str(exc), exc.t, partial) from None
        out[i:stop] = samples
        i = stop
        state = dict(zip(variables, map(float, y1)))
        t = t_next
        if ev >= len(events):
            break
    return Trajectory(grid, {v: out[:, k].copy() for k, v in enumerate(variables)},
                      tuple(marks))


def _partial(grid, out, n, variables, marks):
    return Trajectory(grid[:n], {v: out[:n, k].copy() for k, v in enumerate(variables)},
                      tuple(m for m in marks if m < n))
