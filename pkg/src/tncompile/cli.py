"""Command line front end: ``tncompile compile|simulate|verify|gamma``.

Inputs are system files (``.tn`` or ``.crn``) or the name of a bundled
example. Exit status is 0 on success, 1 when a check fails or a simulation
stops early, and 2 on malformed input or other errors.
"""
from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import corpus
from .expr import to_rational
from .fileformat import FormatError, SystemFile, load, network_file, print_system_file
from .odesys import check_positivity_preconditions
from .sim import SimulationError, integrate
from .svg import write_plot
from .transform import CompileError, Mode, TNSystem, compile, estimate_gamma
from .verify import verify

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2
DEFAULT_MARGIN = 1.1


class UsageError(Exception):
    pass


def load_input(arg: str) -> tuple[SystemFile, str]:
    path = Path(arg)
    if path.exists():
        return load(path), path.name
    if arg in corpus.FILES:
        return corpus.load_example(arg), corpus.FILES[arg]
    raise UsageError(f"no such file or bundled example: {arg}")


def _rational(text: str) -> Fraction:
    try:
        return to_rational(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from exc


def _fmt_gamma(g: Fraction) -> str:
    return str(g.numerator) if g.denominator == 1 else format(float(g), ".10g")


def _gamma_horizon(sf: SystemFile, t_end=None) -> float:
    return float(t_end if t_end is not None else sf.sim.get("t_end", 25.0))


def _estimate(sf: SystemFile, t_end=None, margin=DEFAULT_MARGIN) -> Fraction:
    source = sf.to_system()
    params = sf.sim_params(t_end=_gamma_horizon(sf, t_end))
    impls = sf.placeholder_impls() if sf.placeholders else None
    return estimate_gamma(source, margin=margin, events=sf.events,
                          placeholder_impls=impls, params=params)


def _compile(sf: SystemFile, args, note: list[str]) -> tuple[object, TNSystem]:
    """Source system and network for ``sf`` under the command line options."""
    if sf.is_network:
        raise UsageError("input is already a compiled network")
    gamma = args.gamma if args.gamma is not None else sf.gamma
    if gamma is None:
        gamma = _estimate(sf)
        note.append(f"gamma {_fmt_gamma(gamma)} estimated "
                    f"(margin {DEFAULT_MARGIN}, t_end {_gamma_horizon(sf):g})")
    else:
        note.append(f"gamma {_fmt_gamma(to_rational(gamma))}")
    beta = args.beta if args.beta is not None else (sf.beta or 1)
    source = sf.to_system(gamma=gamma)
    for diag in check_positivity_preconditions(source):
        if diag.severity != "error":
            print(diag, file=sys.stderr)
    return source, compile(source, gamma=gamma, beta=beta, mode=Mode(args.mode))


def ratio_columns(traj, tn: TNSystem) -> dict[str, np.ndarray]:
    with np.errstate(divide="ignore", invalid="ignore"):
        return {f"{t}/{b}": traj[t] / traj[b] for t, b in tn.pairing.values()}


# -- subcommands ------------------------------------------------------------

def cmd_compile(args) -> int:
    sf, name = load_input(args.input)
    note = [f"transcriptional network compiled from {name}"]
    _, tn = _compile(sf, args, note)
    note.append(f"mode {tn.mode.value}")
    text = print_system_file(network_file(tn, like=sf), header="\n".join(note))
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _write(path, text: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def cmd_simulate(args) -> int:
    sf, _ = load_input(args.input)
    tn = None
    if sf.is_network:
        tn = sf.to_network()
        system = tn
    elif args.compile:
        _, tn = _compile(sf, args, [])
        system = tn
    else:
        system = sf.to_system()
    params = sf.sim_params(t_end=args.t_end, points=args.points, rtol=args.rtol, atol=args.atol)
    impls = sf.placeholder_impls() if sf.placeholders else None
    status = EXIT_OK
    try:
        traj = integrate(system, params, sf.events, impls)
    except SimulationError as exc:
        traj = exc.partial
        print(f"simulation stopped: {exc}; last finite time {exc.t:.10g}", file=sys.stderr)
        status = EXIT_FAIL
    if traj is None:
        return EXIT_FAIL
    columns = dict(traj.values)
    if tn is not None:
        columns.update(ratio_columns(traj, tn))
    table = traj.with_columns(columns)
    if args.csv and args.csv != "-":
        table.write_csv(args.csv)
    elif not args.svg or args.csv == "-":
        sys.stdout.write(table.to_csv())
    if args.svg:
        if args.plot:
            names = [n.strip() for n in args.plot.split(",") if n.strip()]
        elif tn is not None:
            names = list(ratio_columns(traj, tn))
        else:
            names = list(traj.values)
        missing = [n for n in names if n not in columns]
        if missing:
            raise UsageError(f"cannot plot unknown series {missing}")
        write_plot(args.svg, table.times, {n: table[n] for n in names}, title=args.title or "")
    return status


def cmd_verify(args) -> int:
    sf, name = load_input(args.input)
    if sf.is_network:
        raise UsageError("verify takes the source system, not a network")
    if args.tn_file:
        net_file = load(args.tn_file)
        tn = net_file.to_network()
        source = sf.to_system(gamma=tn.gamma)
    else:
        source, tn = _compile(sf, args, [])
    params = sf.sim_params(t_end=args.t_end, points=args.points, rtol=args.rtol, atol=args.atol)
    ratio_tol = args.ratio_tol if args.ratio_tol is not None else sf.verify.get("ratio_tol", 1e-6)
    horizon = args.horizon if args.horizon is not None else sf.verify.get("horizon")
    impls = sf.placeholder_impls() if sf.placeholders else None
    report = verify(source, tn, params, sf.events, impls, ratio_tol=float(ratio_tol),
                    horizon=None if horizon is None else float(horizon))
    sys.stdout.write(f"system={name}\nmode={tn.mode.value}\ngamma={_fmt_gamma(tn.gamma)}\n"
                     f"beta={_fmt_gamma(tn.beta)}\nt_end={params.t_end:g}\n")
    sys.stdout.write(report.to_text())
    if report.error:
        return EXIT_ERROR
    return EXIT_OK if report.verdict else EXIT_FAIL


def cmd_gamma(args) -> int:
    sf, _ = load_input(args.input)
    if sf.is_network:
        raise UsageError("gamma estimation needs the source system")
    g = _estimate(sf, args.t_end, args.margin)
    print(_fmt_gamma(g))
    return EXIT_OK


# -- argument parsing -------------------------------------------------------

def _compile_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gamma", type=_rational, help="decay constant (default: file, else estimated)")
    p.add_argument("--beta", type=_rational, help="bottom-factor production constant")
    p.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.STABLE.value)


def _sim_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--t-end", type=float)
    p.add_argument("--points", type=int)
    p.add_argument("--rtol", type=float)
    p.add_argument("--atol", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tncompile",
        description="Compile polynomial ODEs into transcriptional networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="write the compiled network")
    p.add_argument("input")
    _compile_options(p)
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("simulate", help="integrate a system or network to CSV/SVG")
    p.add_argument("input")
    _sim_options(p)
    p.add_argument("--csv", help="CSV output file ('-' for stdout)")
    p.add_argument("--svg", help="SVG plot output file")
    p.add_argument("--plot", help="comma separated series to plot")
    p.add_argument("--title")
    p.add_argument("--compile", action="store_true", help="compile a source system first")
    _compile_options(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="compile, co-simulate and check the network")
    p.add_argument("input")
    _sim_options(p)
    _compile_options(p)
    p.add_argument("--tn-file", help="check this network instead of compiling")
    p.add_argument("--ratio-tol", type=float)
    p.add_argument("--horizon", type=float, help="compare ratios only up to this time")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gamma", help="estimate the decay constant")
    p.add_argument("input")
    p.add_argument("--t-end", type=float)
    p.add_argument("--margin", type=float, default=DEFAULT_MARGIN)
    p.set_defaults(func=cmd_gamma)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, FormatError, CompileError, SimulationError, ValueError,
            KeyError, ZeroDivisionError, OSError) as exc:
        print(f"tncompile {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
