import dataclasses
import math
from fractions import Fraction

import numpy as np
import pytest

from tncompile.corpus import compile_example, corpus_run, load_example
from tncompile.expr import parse_expr
from tncompile.odesys import ODESystem
from tncompile.sim import SimParams, Trajectory, integrate
from tncompile.transform import Mode, compile
from tncompile.verify import (PairingMismatch, bookend_check, conservation_check, ratio_error,
                              symbolic_ratio_identity, verify)


def sine_cosine():
    return load_example("sine_cosine").to_system()


def drop_beta_top_term(tn, v):
    t, b = tn.pairing[v]
    rhs = dict(tn.base.rhs)
    rhs[t] = rhs[t] - tn.beta * parse_expr(f"{t}/{b}")
    return dataclasses.replace(tn, base=tn.base.replace(rhs=rhs))


# -- symbolic identity ------------------------------------------------------

@pytest.mark.parametrize("mode", [Mode.STABLE, Mode.WARMUP])
def test_identity_holds_for_sine_cosine(mode):
    tn = compile(sine_cosine(), gamma=Fraction(5, 2), mode=mode)
    assert all(r.is_zero() for r in symbolic_ratio_identity(sine_cosine(), tn).values())


@pytest.mark.parametrize("name", ["bubble_sort", "schlogl", "willamowski_rossler", "pid",
                                  "extremum"])
def test_identity_holds_for_corpus(name):
    _, sys, tn = compile_example(name)
    assert all(r.is_zero() for r in symbolic_ratio_identity(sys, tn).values())


def test_dropping_beta_monomial_breaks_identity():
    tn = compile(sine_cosine(), gamma=Fraction(5, 2), beta=1)
    res = symbolic_ratio_identity(sine_cosine(), drop_beta_top_term(tn, "x"))
    assert res["y"].is_zero()
    # d(T/B) loses beta*(T/B)/B = beta*x_T/x_B^2
    assert res["x"] == -parse_expr("x_T/x_B^2")


def test_pairing_mismatch():
    tn = compile(sine_cosine(), gamma=Fraction(5, 2))
    other = ODESystem.from_strings({"x": "-x"}, {"x": 1})
    with pytest.raises(PairingMismatch):
        symbolic_ratio_identity(other, tn)


# -- ratio error ------------------------------------------------------------

def test_identical_trajectories_with_unit_bottoms():
    t = np.linspace(0, 1, 5)
    x = np.sin(t) + 2
    orig = Trajectory(t, {"x": x})
    net = Trajectory(t, {"x_T": x.copy(), "x_B": np.ones_like(t)})
    assert ratio_error(orig, net, {"x": ("x_T", "x_B")}) == {"x": 0.0}


def test_nonpositive_bottom_reads_as_infinite():
    t = np.linspace(0, 1, 3)
    orig = Trajectory(t, {"x": np.ones(3)})
    net = Trajectory(t, {"x_T": np.ones(3), "x_B": np.array([1.0, 0.0, 1.0])})
    assert ratio_error(orig, net, {"x": ("x_T", "x_B")}) == {"x": math.inf}


def test_grid_mismatch():
    orig = Trajectory(np.linspace(0, 1, 3), {"x": np.ones(3)})
    net = Trajectory(np.linspace(0, 1, 4), {"x_T": np.ones(4), "x_B": np.ones(4)})
    with pytest.raises(ValueError):
        ratio_error(orig, net, {"x": ("x_T", "x_B")})


def test_sine_cosine_co_simulation():
    orig, comp = corpus_run("sine_cosine")
    _, _, tn = compile_example("sine_cosine")
    errs = ratio_error(orig, comp, tn.pairing)
    assert max(errs.values()) <= 1e-6


def test_willamowski_rossler_short_horizon():
    orig, comp = corpus_run("willamowski_rossler")
    _, _, tn = compile_example("willamowski_rossler")
    assert max(ratio_error(orig, comp, tn.pairing, horizon=1.0).values()) <= 1e-3


def test_direct_variables_compared_directly():
    orig, comp = corpus_run("extremum", t_end=20)
    _, _, tn = compile_example("extremum")
    errs = ratio_error(orig, comp, tn.pairing)
    assert "x" in errs and errs["x"] <= 1e-5


# -- bookends ---------------------------------------------------------------

def test_stable_sine_cosine_bookended():
    _, comp = corpus_run("sine_cosine")
    _, _, tn = compile_example("sine_cosine")
    res = bookend_check(comp, tn)
    assert all(r.passed for r in res.values())
    assert all(0 < r.minimum <= r.maximum < 10 for r in res.values())
    assert all(r.floor == pytest.approx(0.4) for r in res.values())


def test_start_on_barrier_stays_above_it():
    gamma, beta = Fraction(5, 2), Fraction(1)
    d = beta / gamma
    tn = compile(sine_cosine(), gamma=gamma, beta=beta, denominators={"x": d, "y": d})
    tr = integrate(tn, SimParams(t_end=25))
    for t, b in tn.pairing.values():
        assert tr[b].min() >= float(d) - 1e-6
    assert all(r.passed for r in bookend_check(tr, tn).values())


def test_warmup_drift_is_flagged():
    orig, comp = corpus_run("sine_cosine", mode=Mode.WARMUP,
                            params=SimParams(t_end=100, abs_tol=1e-300))
    _, _, tn = compile_example("sine_cosine", mode=Mode.WARMUP)
    res = bookend_check(comp, tn)
    assert not any(r.passed for r in res.values())
    # the factors leave the envelope [beta/gamma * 0.5, 10 * initial]
    for (t, b), r in zip(tn.pairing.values(), res.values()):
        assert r.minimum < float(tn.beta / tn.gamma) * 0.5 or r.maximum > 10 * comp[b][0]
    assert max(ratio_error(orig, comp, tn.pairing).values()) <= 1e-6


def test_non_finite_values_fail():
    tn = compile(sine_cosine(), gamma=Fraction(5, 2))
    t = np.linspace(0, 1, 3)
    vals = {v: np.ones(3) for v in tn.base.variables}
    vals["y_T"] = np.array([1.0, np.inf, 1.0])
    res = bookend_check(Trajectory(t, vals), tn)
    assert not res["x"].passed and not res["y"].passed


@pytest.mark.parametrize("name", ["sine_cosine", "schlogl", "pid"])
def test_raising_beta_never_lowers_bottom_minimum(name):
    sf, sys, _ = compile_example(name)
    mins = []
    for beta in (Fraction(1, 2), 1, 2, 4):
        tn = compile(sys, gamma=sf.gamma, beta=beta)
        tr = integrate(tn, sf.sim_params(), sf.events)
        mins.append(min(r.minimum for r in bookend_check(tr, tn).values()))
    assert all(a <= b + 1e-9 for a, b in zip(mins, mins[1:])), mins


# -- conservation -----------------------------------------------------------

def test_bubble_conservation():
    orig, comp = corpus_run("bubble_sort")
    assert conservation_check(orig, {f"x{i}": 1 for i in range(1, 5)}, 13) <= 1e-6


def test_zero_weights_residual_is_expected_value():
    orig, _ = corpus_run("bubble_sort", t_end=1)
    assert conservation_check(orig, {"x1": 0, "x2": 0}, 13) == 13


def test_sine_cosine_is_not_conserved():
    orig, _ = corpus_run("sine_cosine")
    assert conservation_check(orig, {"x": 1, "y": 1}, 4) > 0.5


# -- reports ----------------------------------------------------------------

def test_report_for_sine_cosine_passes():
    sys = sine_cosine()
    tn = compile(sys, gamma=Fraction(5, 2))
    report = verify(sys, tn, SimParams(t_end=25))
    assert report.verdict
    text = report.to_text()
    assert "verdict=pass" in text and "symbolic_identity.x=pass" in text
    assert all("=" in line for line in text.splitlines())


def test_warmup_report_fails_only_on_bookends():
    sys = sine_cosine()
    tn = compile(sys, gamma=Fraction(5, 2), mode=Mode.WARMUP)
    report = verify(sys, tn, SimParams(t_end=100))
    assert report.identity_ok and report.ratio_ok
    assert not report.bookend_ok and not report.verdict


def test_report_with_conservation():
    _, sys, tn = compile_example("bubble_sort")
    weights = {f"x{i}": 1 for i in range(1, 5)}
    report = verify(sys, tn, SimParams(t_end=50), conservation={"sum": (weights, 13)})
    assert report.conservation_ok and report.verdict
    assert "conservation.sum=" in report.to_text()


def test_corrupted_network_fails():
    sys = sine_cosine()
    tn = drop_beta_top_term(compile(sys, gamma=Fraction(5, 2)), "x")
    report = verify(sys, tn, SimParams(t_end=25))
    assert not report.identity_ok and not report.verdict
    assert "symbolic_residual.x=" in report.to_text()
