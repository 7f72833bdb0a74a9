import json

import pytest

from lagen import cli as cli_mod
from lagen.cli import main, parse_verify, run, scaled_problem
from lagen.expr import struct_equal
from lagen.parser import ParseError, parse_input
from lagen.problems import PROBLEMS, problem_source

TIKHONOV = """
Matrix A(5000, 50) <FullRank>
Matrix G(50, 50)
Vector b(5000)
x := inv(trans(A) * A + trans(G) * G) * trans(A) * b
"""

SMALL_TIKHONOV = """
n = 30
m = 6
Matrix A(n, m) <FullRank>
Scalar alpha <PositiveScalar>
Vector b(n)
x := inv(trans(A) * A + alpha * alpha * I(m)) * trans(A) * b
"""


def test_parse_tikhonov():
    p = parse_input(TIKHONOV)
    A = p.declarations["A"]
    assert (A.rows, A.cols) == (5000, 50) and "FullRank" in {q.value for q in A.properties}
    (a,) = p.assignments
    assert a.lhs.key == "x" and (a.lhs.rows, a.lhs.cols) == (50, 1)


def test_parse_trivial_assignment():
    p = parse_input("Matrix A(3, 3)\nX := A\n")
    assert p.assignments[0].rhs.key == "A"


@pytest.mark.parametrize("text,line,col,fragment", [
    ("Matrix A(3,4)\nMatrix B(3,4)\nX := A * B\n", 3, 8, "nonconformable"),
    ("Matrix A(3,3)\nX := A * Q\n", 2, 10, "undeclared symbol Q"),
    ("Matrix A(3,3) <Shiny>\nX := A\n", 1, 16, "unknown property"),
    ("Matrix A(3,3)\nX := A +\n", 2, 9, "unexpected"),
])
def test_parse_errors_carry_positions(text, line, col, fragment):
    with pytest.raises(ParseError) as info:
        parse_input(text)
    assert (info.value.line, info.value.col) == (line, col)
    assert fragment in info.value.message


@pytest.mark.parametrize("name", sorted(PROBLEMS))
def test_source_round_trip(name):
    p = parse_input(problem_source(name))
    q = parse_input(p.to_source())
    assert [a.lhs.key for a in p.assignments] == [a.lhs.key for a in q.assignments]
    for a, b in zip(p.assignments, q.assignments):
        assert struct_equal(a.rhs, b.rhs)
    assert {k: (o.rows, o.cols, o.properties) for k, o in p.declarations.items()} == \
        {k: (o.rows, o.cols, o.properties) for k, o in q.declarations.items()}


def test_verify_spec_parsing():
    assert parse_verify("n=200 m=20") == ({"n": 200, "m": 20}, None)
    assert parse_verify("n=8,seed=3") == ({"n": 8}, 3)
    assert parse_verify(None) == ({}, None)


def test_size_overrides_and_base_scale():
    p = scaled_problem(SMALL_TIKHONOV, {"n": 12})
    assert (p.declarations["A"].rows, p.declarations["A"].cols) == (12, 6)
    literal = "Matrix A(40, 10)\nMatrix B(10, 20)\nX := A * B\n"
    q = scaled_problem(literal, {"n": 8})
    assert (q.declarations["A"].rows, q.declarations["A"].cols) == (8, 2)
    assert (q.declarations["B"].rows, q.declarations["B"].cols) == (2, 4)


def write(tmp_path, text, name="p.la"):
    f = tmp_path / name
    f.write_text(text)
    return str(f)


def test_run_prints_program(tmp_path, capsys):
    assert main(["run", write(tmp_path, SMALL_TIKHONOV)]) == 0
    out = capsys.readouterr().out
    assert "potrf(" in out and "getrf" not in out
    assert "# naive baseline:" in out


def test_exit_code_for_parse_error(tmp_path, capsys):
    assert main(["run", write(tmp_path, "Matrix A(3,3)\nX := A * Q\n")]) == 1
    assert "undeclared symbol" in capsys.readouterr().err


def test_exit_codes_for_usage_errors(tmp_path):
    assert main(["run"]) == 1
    assert main(["run", "--problem", "nope"]) == 1
    assert main(["run", str(tmp_path / "missing.la")]) == 1
    assert main(["run", "--problem", "j", "--k", "0"]) == 1
    assert main(["run", "--problem", "j", "--verify", "n"]) == 1


def test_exit_code_when_no_solution():
    assert main(["run", "--problem", "a", "--max-nodes", "5"]) == 2


def test_exit_code_when_verification_fails(monkeypatch, tmp_path):
    monkeypatch.setattr(cli_mod, "VERIFY_TOLERANCE", -1.0)
    assert main(["run", write(tmp_path, SMALL_TIKHONOV), "--verify", "n=20"]) == 3


def test_verify_passes_on_compiled_sizes(tmp_path, capsys):
    assert main(["run", write(tmp_path, SMALL_TIKHONOV), "--verify", "n=200 m=20"]) == 0
    out = capsys.readouterr().out
    assert "verification (seed 1): passed" in out
    assert "potrf(" in out


def test_k_programs_are_sorted():
    report = run(problem_source("j"), k=3)
    assert len(report.programs) == 3 and report.costs == sorted(report.costs)
    assert report.total_flops == report.costs[0]


def test_json_report(tmp_path):
    out = tmp_path / "r.json"
    dot = tmp_path / "g.dot"
    assert main(["run", "--problem", "b_optimality", "--format", "json", "--out", str(out),
                 "--dump-graph", str(dot), "--verify", "n=16 m=6 seed=2"]) == 0
    d = json.loads(out.read_text())
    assert d["schema"] == 1
    assert d["total_flops"] == d["programs"][0]["total_flops"] == d["programs"][0]["cost"]
    assert d["naive_flops"] >= d["total_flops"]
    assert d["graph"]["nodes"] >= d["graph"]["terminals"] >= 1
    assert d["merging"]["enabled"] is True
    assert d["verification"]["passed"] and d["verification"]["seed"] == 2
    assert d["sizes"]["A"] == [6, 16]
    assert dot.read_text().startswith("digraph")


def test_no_merge_flag_grows_the_graph():
    merged = run(problem_source("distributive"), threshold=None)
    plain = run(problem_source("distributive"), threshold=None, merge=False)
    assert plain.nodes > merged.nodes and plain.total_flops == merged.total_flops
    assert plain.merges == 0 < merged.merges


def test_constructive_is_close_to_exhaustive():
    text = problem_source("j")
    ex = run(text).total_flops
    co = run(text, strategy="constructive").total_flops
    assert ex <= co <= 1.5 * ex


def test_problems_listing(capsys):
    assert main(["problems"]) == 0
    listed = [line.split()[0] for line in capsys.readouterr().out.splitlines()]
    assert listed == list(PROBLEMS)
