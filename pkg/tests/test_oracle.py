import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lagen.expr import Identity, inv, mul, sym
from lagen.oracle import reference as ref
from lagen.oracle.chain import all_parenthesizations, brute_force_chain, gemm_cost
from lagen.oracle.evaluate import (SingularMatrix, compare, convert, eval_expression, eval_problem,
                                   gauss_inverse)
from lagen.oracle.instances import (InstanceGenerator, condition_ok, dump_matrix, load_matrix,
                                    satisfies)
from lagen.problems import load_problem
from lagen.properties import Property

P = Property


def test_compare_is_relative_above_unit_norm():
    b = np.full((2, 2), 10.0)
    assert compare(b + 0.01, b) == pytest.approx(0.02 / 20)
    assert compare(np.zeros((2, 2)) + 1e-3, np.zeros((2, 2))) == pytest.approx(2e-3)
    with pytest.raises(ValueError):
        compare(np.zeros((2, 2)), np.zeros((2, 3)))


def test_identity_product():
    A = sym("A", 3, 4)
    env = InstanceGenerator(1).environment([A.operand])
    got = eval_expression(mul(A, Identity(4)), env)
    assert compare(got, env["A"]) == 0


def test_inverse_of_product_against_factors():
    A, B = sym("A", 8, 8), sym("B", 8, 8)
    env = InstanceGenerator(2).environment([A.operand, B.operand])
    lhs = eval_expression(inv(mul(A, B)), env)
    rhs = eval_expression(mul(inv(B), inv(A)), env)
    assert compare(lhs, rhs) <= 1e-10
    assert compare(lhs @ env["A"] @ env["B"], np.eye(8)) <= 1e-12


def test_gauss_inverse_matches_numpy_and_rejects_singular():
    a = InstanceGenerator(5).general(7, 7)
    assert compare(gauss_inverse(a), np.linalg.inv(a)) <= 1e-12
    s = np.ones((3, 3))
    with pytest.raises(SingularMatrix):
        gauss_inverse(s)
    S = sym("S", 3, 3)
    with pytest.raises(SingularMatrix):
        eval_expression(inv(S), {"S": s})


def test_missing_and_misshaped_values():
    A = sym("A", 2, 3)
    with pytest.raises(KeyError):
        eval_expression(A, {})
    with pytest.raises(ValueError):
        eval_expression(A, {"A": np.zeros((3, 2))})


def test_reference_gemm_counts_flops():
    ctr = ref.FlopCounter()
    a, b = np.ones((4, 4)), np.ones((4, 4))
    out = ref.gemm(None, a, b, ctr=ctr)
    assert ctr.flops == 128 == gemm_cost(4, 4, 4)
    assert np.all(out == 4)


def test_reference_solves():
    g = InstanceGenerator(3)
    L, B = g.triangular(6, True), g.general(6, 4)
    assert compare(ref.trsm(None, L, B, lower=True), np.linalg.solve(L, B)) <= 1e-12
    assert compare(ref.trsm(None, L, B, lower=True, trans_t=True), np.linalg.solve(L.T, B)) <= 1e-12
    Bt = g.general(4, 6)
    assert compare(ref.trmm(None, L, Bt, side="R"), Bt @ L) <= 1e-12


def test_format_conversions_round_trip():
    a = InstanceGenerator(4).triangular(5, True)
    assert compare(convert(convert(a, "full", "lower"), "lower", "full"), a) == 0
    d = np.diag([1.0, 2.0, 3.0])
    assert compare(convert(convert(d, "full", "diagonal"), "diagonal", "full"), d) == 0
    p = np.eye(4)[[2, 0, 3, 1]]
    assert compare(convert(convert(p, "full", "permutation"), "permutation", "full"), p) == 0


def test_instances_are_deterministic():
    ops = [sym("A", 5, 3).operand, sym("S", 4, 4, "SPD").operand]
    a = InstanceGenerator(9).environment(ops)
    b = InstanceGenerator(9).environment(ops)
    c = InstanceGenerator(10).environment(ops)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert not np.array_equal(a["A"], c["A"])


CASES = [
    (("SPD",), 6, 6),
    (("Symmetric",), 6, 6),
    (("LowerTriangular",), 6, 6),
    (("UpperTriangular",), 6, 6),
    (("Diagonal",), 6, 6),
    (("Orthogonal",), 6, 6),
    (("Permutation",), 6, 6),
    (("FullRank",), 9, 4),
    (("FullRank",), 4, 9),
    (("SPSD",), 5, 5),
]


@pytest.mark.parametrize("props,rows,cols", CASES)
@pytest.mark.parametrize("seed", [1, 2, 3])
def test_instances_satisfy_their_properties(props, rows, cols, seed):
    op = sym("X", rows, cols, *props).operand
    value = InstanceGenerator(seed).operand(op)
    assert value.shape == (rows, cols)
    for p in op.properties:
        assert satisfies(value, p), p
    assert condition_ok(value, 1e6) or P.PERMUTATION in op.properties or rows != cols


def test_satisfies_rejects_counterexamples():
    assert not satisfies(np.array([[1.0, 2.0], [0.0, 1.0]]), P.SYMMETRIC)
    assert not satisfies(np.array([[1.0, 0.0], [0.0, -1.0]]), P.SPD)
    assert not satisfies(np.array([[1.0, 1.0], [0.0, 1.0]]), P.LOWER_TRIANGULAR)
    assert not satisfies(np.ones((3, 3)), P.FULL_RANK)
    assert satisfies(np.array([[1.0, 1.0], [1.0, 1.0]]), P.SPSD)


def test_matrix_dump_round_trip(tmp_path):
    a = InstanceGenerator(6).general(3, 5)
    text = dump_matrix(a)
    assert text.splitlines()[0] == "3 5"
    assert np.array_equal(load_matrix(text), a)
    path = tmp_path / "m.txt"
    with open(path, "w") as fh:
        dump_matrix(a, fh)
    assert np.array_equal(load_matrix(path.read_text()), a)
    with pytest.raises(ValueError):
        load_matrix("2 2\n1 2 3")


def test_brute_force_chain_examples():
    assert brute_force_chain([10, 100, 5, 50]) == (15_000, "((AB)C)")
    assert brute_force_chain([3, 4]) == (0, "A")
    assert brute_force_chain([2, 2, 2]) == (16, "(AB)")
    with pytest.raises(ValueError):
        brute_force_chain([5])


def test_parenthesization_count_is_catalan():
    assert [len(all_parenthesizations(n)) for n in range(1, 7)] == [1, 1, 2, 5, 14, 42]


def _cost_of(paren: str, dims) -> int:
    """Evaluate the cost of a parenthesization string by a stack walk."""
    stack = []
    idx = 0
    for ch in paren:
        if ch.isalpha():
            stack.append((dims[idx], dims[idx + 1], 0))
            idx += 1
        elif ch == ")":
            (m, k, c1), (_, n, c2) = stack[-2], stack[-1]
            stack[-2:] = [(m, n, c1 + c2 + gemm_cost(m, k, n))]
    return stack[0][2]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 40), min_size=2, max_size=7))
def test_brute_force_is_the_minimum_over_all_orders(dims):
    best, paren = brute_force_chain(dims)
    costs = [_cost_of(p, dims) for p in all_parenthesizations(len(dims) - 1)]
    assert best == min(costs) == _cost_of(paren, dims)


def test_problem_a_is_finite_and_reproducible():
    p = load_problem("a", {"n": 40, "m": 8})
    runs = [eval_problem(p, InstanceGenerator(1).environment(p.declarations)) for _ in range(2)]
    for k, v in runs[0].items():
        assert np.all(np.isfinite(v))
        assert np.array_equal(v, runs[1][k])


def test_least_squares_matches_numpy():
    p = load_problem("j", {"n": 20, "m": 6})
    env = InstanceGenerator(2).environment(p.declarations)
    (x,) = eval_problem(p, env).values()
    A, G, b = env["A"], env["G"], env["b"].reshape(-1, 1)
    assert compare(x, np.linalg.solve(A.T @ A + G.T @ G, A.T @ b)) <= 1e-10
