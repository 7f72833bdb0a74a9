import numpy as np
import pytest

from lagen.codegen import (LivenessError, analyze_liveness, assign_memory, emit, insert_format_conversions,
                           load_json, lower, overwritable)
from lagen.derivation import SearchConfig, SymbolicProgram, derive
from lagen.expr import Operand, mul, sym
from lagen.kernels import KernelCall, default_db
from lagen.oracle.evaluate import compare, eval_problem, eval_program, eval_symbolic
from lagen.oracle.instances import InstanceGenerator
from lagen.problem import make_problem
from lagen.problems import load_problem
from lagen.properties import Property

DB = default_db()


def best(problem, **kw):
    return derive(problem, SearchConfig(**kw)).best_programs(1)[0]


def kernel_steps(exe):
    return [s for s in exe.steps if s["op"] == "kernel"]


@pytest.fixture(scope="module")
def b_optimality():
    p = load_problem("b_optimality", {"n": 12, "m": 5})
    return p, best(p)


def test_b_optimality_reuses_dead_buffers(b_optimality):
    _, prog = b_optimality
    exe = lower(prog)
    steps = kernel_steps(exe)
    solves = [s for s in steps if s["kernel"] == "trsv"]
    assert len(solves) == 2 and all(s["out"] == ["b"] for s in solves)
    assert steps[-1]["kernel"] == "gemv" and steps[-1]["out"] == ["c"]
    assert exe.outputs == {"x": "c"}
    # A is read again after the scaling, so the scaling works on a copy
    copies = [s for s in exe.steps if s["op"] == "copy"]
    assert [c["src"] for c in copies] == ["A"]


def test_b_optimality_liveness(b_optimality):
    _, prog = b_optimality
    live = analyze_liveness(prog)
    assert live["A"].defined == -1
    out = dict(prog.outputs)["x"]
    assert live[out].output and not overwritable(live, out, live[out].last_use)
    last_b = live["b"].last_use
    assert overwritable(live, "b", last_b)
    assert not overwritable(live, "b", last_b - 1) or last_b == 0


def test_liveness_rejects_use_before_definition():
    A = Operand("A", 3, 3)
    call = KernelCall("gemm", (("X", "A"), ("Y", "T9")), ("T1",), 54,
                      flags=(("transA", False), ("transB", False)))
    prog = SymbolicProgram((call,), 54, {"A": A, "T1": Operand("T1", 3, 3)}, ("A",),
                           (("X", "T1"),), {})
    with pytest.raises(LivenessError):
        analyze_liveness(prog)


def test_trivial_program_is_one_copy():
    A = sym("A", 4, 3)
    p = make_problem([A], [("X", A)])
    exe = lower(best(p))
    assert [s["op"] for s in exe.steps] == ["copy"]
    assert exe.outputs["X"] != exe.inputs["A"]
    env = InstanceGenerator(1).environment(p.declarations)
    assert compare(eval_program(exe, env).outputs["X"], env["A"]) == 0


def test_operand_read_twice_is_not_overwritten():
    L = sym("L", 6, 6, "LowerTriangular")
    p = make_problem([L], [("X", mul(L, L))])
    exe = lower(best(p))
    (k,) = kernel_steps(exe)
    assert k["kernel"] == "trmm"
    assert "L" not in k["out"]
    env = InstanceGenerator(2).environment(p.declarations)
    assert compare(eval_program(exe, env).outputs["X"], env["L"] @ env["L"]) <= 1e-12


def test_outputs_are_never_inputs_to_later_overwrites():
    p = load_problem("distributive")
    exe = lower(best(p))
    out_buf = exe.outputs["X"]
    writes = [i for i, s in enumerate(exe.steps) if s["op"] == "kernel" and out_buf in s["out"]]
    assert writes and writes[-1] == max(i for i, s in enumerate(exe.steps) if s["op"] == "kernel")


def cholesky_then_gemm():
    S = Operand("S", 5, 5, frozenset({Property.SPD}))
    B = Operand("B", 5, 3)
    L = Operand("L", 5, 5, frozenset({Property.LOWER_TRIANGULAR}), is_factor=True)
    X = Operand("T1", 5, 3)
    calls = (
        KernelCall("potrf", (("A", "S"),), ("L",), 5 ** 3 // 3, computes="Cholesky of S"),
        KernelCall("gemm", (("X", "L"), ("Y", "B")), ("T1",), 2 * 5 * 5 * 3,
                   flags=(("transA", False), ("transB", False)), computes="L * B"),
    )
    return SymbolicProgram(calls, sum(c.flops for c in calls),
                           {o.name: o for o in (S, B, L, X)}, ("S", "B"), (("X", "T1"),), {})


def test_factor_is_converted_before_a_full_format_kernel():
    exe = lower(cholesky_then_gemm())
    ops = [(s["op"], s.get("kernel") or s.get("to")) for s in exe.steps]
    i = ops.index(("kernel", "gemm"))
    assert ops[i - 1] == ("convert", "full")
    conv = exe.steps[i - 1]
    assert conv["from"] == "lower" and conv["moves"] > 0
    env = InstanceGenerator(3).environment({"S": Operand("S", 5, 5, frozenset({Property.SPD})),
                                            "B": Operand("B", 5, 3)})
    got = eval_program(exe, env).outputs["X"]
    want = np.linalg.cholesky(env["S"]) @ env["B"]
    assert compare(got, want) <= 1e-12


def test_conversion_pass_is_idempotent():
    exe = lower(cholesky_then_gemm())
    assert insert_format_conversions(exe) == exe


def test_missing_conversion_is_detected_by_the_oracle():
    exe = assign_memory(cholesky_then_gemm())
    env = InstanceGenerator(3).environment({"S": Operand("S", 5, 5, frozenset({Property.SPD})),
                                            "B": Operand("B", 5, 3)})
    with pytest.raises(RuntimeError):
        eval_program(exe, env)


@pytest.mark.parametrize("name", ["b_optimality", "distributive", "chain3", "j", "d", "tikhonov_alpha"])
def test_json_round_trip(name):
    exe = lower(best(load_problem(name, {"n": 12, "m": 5} if name in ("b_optimality", "j", "d") else None)))
    assert load_json(emit(exe, "json")) == exe


def test_unknown_schema_is_rejected():
    with pytest.raises(ValueError):
        load_json('{"schema": 99}')


def test_pseudo_code_lists_every_kernel(b_optimality):
    exe = lower(b_optimality[1])
    text = emit(exe, "pseudo")
    for k in exe.kernels:
        assert f"{k}(" in text
    assert f"# total: {exe.total_flops} flops" in text
    with pytest.raises(ValueError):
        emit(exe, "fortran")


SIZES = {
    "a": {"n": 10, "m": 6},
    "d": {"n": 10, "m": 6},
    "f": {"n": 10, "m": 6},
    "g": {"n": 10, "m": 6},
    "i": {"l": 4, "n": 7, "m": 9},
    "j": {"n": 10, "m": 6},
    "k": {"n": 10, "m": 6},
    "l": {"n": 10, "m": 6},
    "m": {"n": 10, "m": 6},
    "b_optimality": {"n": 10, "m": 6},
    "restoration": {"n": 8, "m": 4},
    "tikhonov_alpha": {"n": 10, "m": 4},
}


@pytest.mark.parametrize("name", sorted(SIZES))
def test_lowering_preserves_values_and_flops(name):
    p = load_problem(name, SIZES[name])
    for prog in derive(p, SearchConfig(max_nodes=5000)).best_programs(3):
        exe = lower(prog)
        env = InstanceGenerator(7).environment(p.declarations)
        sym_run = eval_symbolic(prog, env)
        low_run = eval_program(exe, env)
        expected = eval_problem(p, env)
        for k in expected:
            assert compare(low_run.outputs[k], sym_run.outputs[k]) <= 1e-10
            assert compare(low_run.outputs[k], expected[k]) <= 1e-8
        assert exe.total_flops == prog.cost == low_run.flops
