"""Checks that a compiled network stably ratio-implements its source."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .expr import LaurentPolynomial, to_rational
from .odesys import ODESystem
from .sim import SimParams, SimulationError, Trajectory, integrate
from .transform import Mode, TNSystem, ratio_bindings

BARRIER_SLACK = 1e-6
# Warmup factors decay together towards 0; only relative error control keeps
# their quotient meaningful once they fall below any fixed absolute tolerance.
WARMUP_ABS_TOL = 1e-300


class PairingMismatch(ValueError):
    pass


def symbolic_ratio_identity(sys: ODESystem, tn: TNSystem,
                            biases: Mapping[str, object] | None = None
                            ) -> dict[str, LaurentPolynomial]:
    """Residual of the quotient rule for every pair; zero means exact.

    For each pair computes ``(T'*B - T*B')/B^2 - rhs(v)`` with every ratio
    variable of ``rhs(v)`` written as ``u_T/u_B``. ``biases`` adds constants
    to the source side, for checking a network recompiled with
    :func:`~tncompile.transform.with_bias`.
    """
    missing = set(sys.ratio_variables()) ^ set(tn.pairing)
    if missing:
        raise PairingMismatch(f"pairing does not match ratio variables: {sorted(missing)}")
    bindings = ratio_bindings(tn.pairing)
    biases = {v: to_rational(c) for v, c in (biases or {}).items()}
    out = {}
    for v, (t, b) in tn.pairing.items():
        T, B = LaurentPolynomial.symbol(t), LaurentPolynomial.symbol(b)
        d_ratio = (tn.base.rhs[t] * B - T * tn.base.rhs[b]) / B ** 2
        target = (sys.rhs[v] + biases.get(v, 0)).substitute(bindings)
        out[v] = d_ratio - target
    return out


def ratio_values(tn_traj: Trajectory, pairing: Mapping[str, tuple[str, str]]) -> dict[str, np.ndarray]:
    with np.errstate(divide="ignore", invalid="ignore"):
        return {v: tn_traj[t] / tn_traj[b] for v, (t, b) in pairing.items()}


def ratio_error(orig: Trajectory, tn_traj: Trajectory, pairing: Mapping[str, tuple[str, str]],
                horizon: float | None = None) -> dict[str, float]:
    """Max absolute gap between each source variable and its network reading.

    Paired variables are read as ``v_T/v_B``; the rest are compared
    directly. A nonpositive bottom sample gives ``inf``.
    """
    if len(orig.times) != len(tn_traj.times) or not np.allclose(orig.times, tn_traj.times):
        raise ValueError("trajectories are not on a shared sample grid")
    keep = slice(None) if horizon is None else orig.times <= horizon + 1e-12
    out = {}
    for v in orig.variables:
        if v in pairing:
            t, b = pairing[v]
            bottom = tn_traj[b][keep]
            if np.any(bottom <= 0):
                out[v] = math.inf
                continue
            reading = tn_traj[t][keep] / bottom
        elif v in tn_traj.values:
            reading = tn_traj[v][keep]
        else:
            continue
        out[v] = float(np.max(np.abs(orig[v][keep] - reading)))
    return out


@dataclass
class BookendResult:
    minimum: float
    maximum: float
    floor: float
    passed: bool


def bookend_check(tn_traj: Trajectory, tn: TNSystem) -> dict[str, BookendResult]:
    """Bottom factors must stay above ``min(start, beta/gamma)`` and everything finite.

    The start value is re-taken after every event, since resets may move a
    bottom factor below the barrier legitimately.
    """
    barrier = float(tn.beta / tn.gamma)
    all_finite = all(np.all(np.isfinite(col)) for col in tn_traj.values.values())
    out = {}
    for v, (t, b) in tn.pairing.items():
        col = tn_traj[b]
        starts = [col[0]] + [col[i] for i in tn_traj.event_marks if i < len(col)]
        floor = min(min(starts), barrier)
        lo, hi = float(np.min(col)), float(np.max(col))
        ok = all_finite and lo >= floor - BARRIER_SLACK and math.isfinite(float(np.max(tn_traj[t])))
        out[v] = BookendResult(lo, hi, floor, bool(ok))
    return out


def conservation_check(traj: Trajectory, weights: Mapping[str, object], expected) -> float:
    """Largest deviation of ``sum(w_i * x_i)`` from ``expected`` over the samples."""
    total = np.zeros_like(traj.times)
    for v, w in weights.items():
        total = total + float(to_rational(w)) * traj[v]
    return float(np.max(np.abs(total - float(to_rational(expected)))))


# ---------------------------------------------------------------------------

@dataclass
class VerificationReport:
    max_ratio_error: dict[str, float]
    bookends: dict[str, BookendResult]
    symbolic_identity: dict[str, bool]
    residuals: dict[str, LaurentPolynomial] = field(default_factory=dict)
    conservation_checks: dict[str, float] = field(default_factory=dict)
    ratio_tol: float = 1e-6
    conservation_tol: float = 1e-6
    horizon: float | None = None
    check_bookends: bool = True
    error: str | None = None
    network_failure: str | None = None

    @property
    def ratio_ok(self) -> bool:
        return self.network_failure is None and all(e <= self.ratio_tol for e in self.max_ratio_error.values())

    @property
    def bookend_ok(self) -> bool:
        return self.network_failure is None and all(r.passed for r in self.bookends.values())

    @property
    def identity_ok(self) -> bool:
        return all(self.symbolic_identity.values())

    @property
    def conservation_ok(self) -> bool:
        return all(r <= self.conservation_tol for r in self.conservation_checks.values())

    @property
    def verdict(self) -> bool:
        return (self.error is None and self.identity_ok and self.ratio_ok
                and (self.bookend_ok or not self.check_bookends) and self.conservation_ok)

    def to_text(self) -> str:
        lines = []
        for v, ok in self.symbolic_identity.items():
            lines.append(f"symbolic_identity.{v}={'pass' if ok else 'fail'}")
            if not ok:
                lines.append(f"symbolic_residual.{v}={self.residuals[v]}")
        for v, e in self.max_ratio_error.items():
            lines.append(f"max_ratio_error.{v}={e:.6g}")
        for v, r in self.bookends.items():
            lines.append(f"bottom_min.{v}={r.minimum:.6g}")
            lines.append(f"bottom_max.{v}={r.maximum:.6g}")
            lines.append(f"bottom_floor.{v}={r.floor:.6g}")
            lines.append(f"bookend.{v}={'pass' if r.passed else 'fail'}")
        for name, r in self.conservation_checks.items():
            lines.append(f"conservation.{name}={r:.6g}")
        lines.append(f"ratio_tol={self.ratio_tol:g}")
        if self.horizon is not None:
            lines.append(f"ratio_horizon={self.horizon:g}")
        lines.append(f"ratio={'pass' if self.ratio_ok else 'fail'}")
        lines.append(f"bookend={'pass' if self.bookend_ok else 'fail'}")
        lines.append(f"identity={'pass' if self.identity_ok else 'fail'}")
        if self.network_failure:
            lines.append(f"network_failure={self.network_failure}")
        if self.error:
            lines.append(f"error={self.error}")
        lines.append(f"verdict={'pass' if self.verdict else 'fail'}")
        return "\n".join(lines) + "\n"


def verify(sys: ODESystem, tn: TNSystem, params: SimParams, events=(),
           placeholder_impls=None, ratio_tol: float = 1e-6, horizon: float | None = None,
           conservation: Mapping[str, tuple[Mapping[str, object], object]] | None = None,
           network_params: SimParams | None = None) -> VerificationReport:
    """Symbolic identity, co-simulation and bookend checks in one report.

    The network is simulated with ``network_params`` when given. Otherwise it
    shares ``params``, except that warmup networks get a vanishing absolute
    tolerance.
    """
    if network_params is None:
        network_params = params
        if tn.mode is Mode.WARMUP:
            network_params = dataclasses.replace(params, abs_tol=WARMUP_ABS_TOL)
    residuals = symbolic_ratio_identity(sys, tn)
    identity = {v: r.is_zero() for v, r in residuals.items()}
    try:
        orig = integrate(sys, params, events, placeholder_impls)
    except SimulationError as exc:
        return VerificationReport({}, {}, identity, residuals, ratio_tol=ratio_tol,
                                  horizon=horizon, error=f"source simulation failed: {exc}")
    failure = None
    try:
        comp = integrate(tn, network_params, events, placeholder_impls)
    except SimulationError as exc:
        # a network that cannot be integrated where its source can is a failed check
        failure = f"stopped at t={exc.t:.10g}: {exc}"
        comp = exc.partial
    if comp is not None and len(comp.times) < len(orig.times):
        orig = orig.truncated(len(comp.times))
    errors = ratio_error(orig, comp, tn.pairing, horizon) if comp is not None else {}
    bookends = bookend_check(comp, tn) if comp is not None else {}
    checks = {}
    for name, (weights, expected) in (conservation or {}).items():
        checks[name] = conservation_check(orig, weights, expected)
    return VerificationReport(errors, bookends, identity, residuals, checks,
                              ratio_tol=ratio_tol, horizon=horizon, network_failure=failure)
