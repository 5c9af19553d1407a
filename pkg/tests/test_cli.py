import math
import xml.etree.ElementTree as ET

import pytest

from tncompile.cli import main
from tncompile.corpus import FILES, corpus_path, load_example
from tncompile.fileformat import (FormatError, PlaceholderExpr, load, parse_system_file,
                                  print_system_file)
from tncompile.svg import nice_ticks

SINE_NETWORK = """\
var x_T = 2
var x_B = 1
var y_T = 1
var y_B = 1
ode x_T' = x_T/x_B + x_B*y_T/y_B - 5/2*x_T
ode x_B' = 1 - 5/2*x_B + 2*x_B^2/x_T
ode y_T' = y_T/y_B + 2*y_B - 5/2*y_T
ode y_B' = 1 + x_T*y_B^2/x_B/y_T - 5/2*y_B
gamma 5/2
beta 1
mode stable
"""


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def body(text):
    return "".join(line + "\n" for line in text.splitlines()
                   if line and not line.startswith("#"))


# -- compile ----------------------------------------------------------------

def test_compile_sine_cosine(capsys):
    code, out, err = run(capsys, "compile", "sine_cosine", "--gamma", "2.5")
    assert code == 0
    assert body(out).startswith(SINE_NETWORK)
    assert "not in Hungarian form" in err
    assert out.splitlines()[0] == "# transcriptional network compiled from sine_cosine.tn"


def test_compile_to_file_and_reload(tmp_path, capsys):
    out = tmp_path / "net.tn"
    assert run(capsys, "compile", "sine_cosine", "--out", str(out))[0] == 0
    tn = load(out).to_network()
    assert tn.pairing == {"x": ("x_T", "x_B"), "y": ("y_T", "y_B")}


def test_compile_warmup_has_no_beta(capsys):
    code, out, _ = run(capsys, "compile", "sine_cosine", "--mode", "warmup")
    assert code == 0
    assert "mode warmup" in out
    assert not any(line.startswith("beta") for line in out.splitlines())
    assert "ode x_B' = -5/2*x_B + 2*x_B^2/x_T" in out


def test_compile_reports_estimated_gamma(tmp_path, capsys):
    src = tmp_path / "decay.tn"
    src.write_text("var y = 1\node y' = -3*y\n")
    code, out, _ = run(capsys, "compile", str(src))
    assert code == 0
    assert "# gamma 3.3 estimated (margin 1.1, t_end 25)" in out
    assert "gamma 33/10" in out


def test_compile_crn_input(capsys):
    code, out, _ = run(capsys, "compile", "willamowski_rossler")
    assert code == 0 and "gamma 55" in out


@pytest.mark.parametrize("text,fragment", [
    ("var x = 1\node x' = x/(x + 1)\n", "Laurent monomial"),
    ("var x = 1\node x' = y\n", "undeclared"),
    ("var x = -1\node x' = -x\n", "negative"),
    ("var x = 1\nfrobnicate\n", "bad.tn:2:"),
])
def test_bad_input_exits_2(tmp_path, capsys, text, fragment):
    src = tmp_path / "bad.tn"
    src.write_text(text)
    code, out, err = run(capsys, "compile", str(src), "--gamma", "2")
    assert code == 2 and out == ""
    assert fragment in err


def test_missing_input_exits_2(capsys):
    code, _, err = run(capsys, "compile", "no_such_thing")
    assert code == 2 and "no such file" in err


def test_zero_initial_non_hungarian_exits_2(tmp_path, capsys):
    src = tmp_path / "z.tn"
    src.write_text("var x = 0\nvar y = 1\node x' = 1 - y\node y' = -y\n")
    code, _, err = run(capsys, "compile", str(src), "--gamma", "2")
    assert code == 2 and "Hungarian" in err


# -- simulate ---------------------------------------------------------------

def test_simulate_network_csv(tmp_path, capsys):
    net = tmp_path / "net.tn"
    run(capsys, "compile", "sine_cosine", "--out", str(net))
    csv = tmp_path / "out.csv"
    assert run(capsys, "simulate", str(net), "--csv", str(csv), "--points", "1")[0] == 0
    lines = csv.read_text().splitlines()
    assert lines[0] == "t,x_T,x_B,y_T,y_B,x_T/x_B,y_T/y_B"
    assert len(lines) == 3
    assert lines[1] == "0,2,1,1,1,2,1"
    t, *vals = map(float, lines[2].split(","))
    assert t == 25 and abs(vals[4] - (2 - math.sin(25))) < 1e-6


def test_simulate_source_to_stdout(capsys):
    code, out, _ = run(capsys, "simulate", "bubble_sort", "--points", "2", "--t-end", "1")
    assert code == 0
    assert out.splitlines()[0].startswith("t,")
    assert len(out.splitlines()) == 4


def test_simulate_svg(tmp_path, capsys):
    svg = tmp_path / "plot.svg"
    code, _, _ = run(capsys, "simulate", "sine_cosine", "--compile", "--svg", str(svg),
                     "--title", "sine cosine")
    assert code == 0
    root = ET.parse(svg).getroot()
    ns = {"s": "http://www.w3.org/2000/svg"}
    lines = root.findall(".//s:polyline[@class='series']", ns)
    assert len(lines) == 2
    assert root.find(".//s:g[@class='legend']", ns) is not None
    text = svg.read_text()
    assert "sine cosine" in text and "x_T/x_B" in text


def test_simulate_svg_selected_series(tmp_path, capsys):
    svg = tmp_path / "plot.svg"
    code, _, _ = run(capsys, "simulate", "schlogl", "--svg", str(svg), "--plot", "x,y")
    assert code == 0 and svg.read_text().count('class="series"') == 2
    code, _, err = run(capsys, "simulate", "schlogl", "--svg", str(svg), "--plot", "q")
    assert code == 2 and "unknown series" in err


def test_simulate_applies_events(capsys):
    code, out, _ = run(capsys, "simulate", "schlogl", "--compile", "--points", "25")
    assert code == 0
    rows = {float(r.split(",")[0]): r.split(",") for r in out.splitlines()[1:]}
    header = out.splitlines()[0].split(",")
    xi = header.index("x_T/x_B")
    assert float(rows[5.0][xi]) == pytest.approx(0.9)
    assert float(rows[12.0][xi]) == pytest.approx(0.5)


def test_simulate_blow_up_exits_1(tmp_path, capsys):
    src = tmp_path / "blow.crn"
    src.write_text("var X = 1\n2X ->{1} 3X\n")
    csv = tmp_path / "out.csv"
    code, _, err = run(capsys, "simulate", str(src), "--t-end", "2", "--csv", str(csv))
    assert code == 1
    assert "simulation stopped" in err and "last finite time" in err
    last = float(csv.read_text().splitlines()[-1].split(",")[0])
    assert last <= 1


def test_simulate_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(capsys, "simulate", "pid", "--compile", "--csv", str(a))
    run(capsys, "simulate", "pid", "--compile", "--csv", str(b))
    assert a.read_bytes() == b.read_bytes()
    n1, n2 = tmp_path / "n1.tn", tmp_path / "n2.tn"
    run(capsys, "compile", "extremum", "--out", str(n1))
    run(capsys, "compile", "extremum", "--out", str(n2))
    assert n1.read_bytes() == n2.read_bytes()


# -- verify and gamma -------------------------------------------------------

def test_verify_sine_cosine_passes(capsys):
    code, out, _ = run(capsys, "verify", "sine_cosine")
    assert code == 0
    assert "verdict=pass" in out and "system=sine_cosine.tn" in out


def test_verify_warmup_fails_on_bookends(capsys):
    code, out, _ = run(capsys, "verify", "sine_cosine", "--mode", "warmup", "--t-end", "100")
    assert code == 1
    assert "ratio=pass" in out and "bookend=fail" in out


def test_verify_corrupted_network(tmp_path, capsys):
    net = tmp_path / "net.tn"
    run(capsys, "compile", "sine_cosine", "--out", str(net))
    text = net.read_text().replace("ode x_B' = 1 - 5/2*x_B", "ode x_B' = 5 - 5/2*x_B")
    net.write_text(text)
    code, out, _ = run(capsys, "verify", "sine_cosine", "--tn-file", str(net))
    assert code == 1
    assert "identity=fail" in out and "symbolic_residual.x=" in out


def test_verify_rejects_network_input(tmp_path, capsys):
    net = tmp_path / "net.tn"
    run(capsys, "compile", "sine_cosine", "--out", str(net))
    assert run(capsys, "verify", str(net))[0] == 2


def test_gamma_command(capsys):
    assert run(capsys, "gamma", "sine_cosine", "--margin", "1.0") == (0, "2.3\n", "")
    assert run(capsys, "gamma", "sine_cosine")[1] == "2.5\n"


# -- file format ------------------------------------------------------------

@pytest.mark.parametrize("name", sorted(FILES))
def test_corpus_files_round_trip(name):
    sf = load_example(name)
    again = parse_system_file(print_system_file(sf))
    assert again.to_system() == sf.to_system()
    assert again.events == sf.events
    assert (again.gamma, again.beta) == (sf.gamma, sf.beta)
    assert print_system_file(again) == print_system_file(sf)


@pytest.mark.parametrize("name", sorted(FILES))
def test_compiled_networks_round_trip(name, capsys):
    sf = load_example(name)
    code, out, _ = run(capsys, "compile", name)
    assert code == 0
    net = parse_system_file(out)
    again = parse_system_file(print_system_file(net))
    assert again.to_network() == net.to_network()


def test_corpus_path_exists():
    for name in FILES:
        assert corpus_path(name).exists()


def test_error_carries_line_number():
    with pytest.raises(FormatError) as info:
        parse_system_file("var x = 1\node x' = -x\nevent a set x 1\n")
    assert info.value.line == 3


def test_placeholder_expression():
    f = PlaceholderExpr("exp(-2*(x-3)^2) + 1")
    assert f.names == ["x"]
    assert f({"x": 3.0}) == 2.0
    with pytest.raises(ValueError):
        PlaceholderExpr("__import__('os')")
    with pytest.raises(ValueError):
        PlaceholderExpr("open(x)")


def test_nice_ticks():
    assert nice_ticks(0, 25) == [0, 5, 10, 15, 20, 25]
    ticks = nice_ticks(0.93, 3.07)
    assert ticks[0] >= 0.93 and ticks[-1] <= 3.07 and len(ticks) >= 3
