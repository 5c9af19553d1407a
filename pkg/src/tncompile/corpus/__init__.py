"""The six worked example systems, shipped as system files.

``corpus_run(name)`` compiles one of them and simulates the source and the
network on the same sample grid.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path

from ..fileformat import SystemFile, load
from ..sim import integrate
from ..transform import Mode, compile

FILES = {
    "sine_cosine": "sine_cosine.tn",
    "bubble_sort": "bubble_sort.tn",
    "schlogl": "schlogl.crn",
    "willamowski_rossler": "willamowski_rossler.crn",
    "pid": "pid.tn",
    "extremum": "extremum.tn",
}


def corpus_path(name: str) -> Path:
    if name not in FILES:
        raise KeyError(f"unknown corpus example {name!r}; choose from {sorted(FILES)}")
    return Path(str(resources.files(__package__) / FILES[name]))


def load_example(name: str) -> SystemFile:
    return load(corpus_path(name))


def compile_example(name: str, *, initial=None, gamma=None, beta=None, mode=Mode.STABLE):
    """``(file, source system, network)`` for a corpus example.

    ``initial`` overrides source initial values.
    """
    sf = load_example(name)
    g = gamma if gamma is not None else sf.gamma
    sys = sf.to_system(gamma=g)
    if initial:
        init = dict(sys.initial)
        init.update(initial)
        sys = sys.replace(initial=init)
    tn = compile(sys, gamma=g, beta=beta if beta is not None else (sf.beta or 1), mode=mode)
    return sf, sys, tn


def corpus_run(name: str, *, initial=None, t_end=None, gamma=None, beta=None,
               mode=Mode.STABLE, events=None, params=None):
    """Compile and co-simulate a corpus example.

    Returns ``(original, compiled)`` trajectories on one shared sample grid.
    """
    sf, sys, tn = compile_example(name, initial=initial, gamma=gamma, beta=beta, mode=mode)
    params = params or sf.sim_params(t_end=t_end)
    events = sf.events if events is None else events
    impls = sf.placeholder_impls() if sf.placeholders else None
    return integrate(sys, params, events, impls), integrate(tn, params, events, impls)
