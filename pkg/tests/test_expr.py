import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from lagen.expr import (DimensionError, Inverse, Plus, T, Times, add, inv, mul, normal_form,
                        struct_equal, sym, to_source, neg, sub)
from lagen.oracle.evaluate import compare, eval_expression
from lagen.parser import parse_expression
from lagen.rewrite import (apply_special_rules, detect_common_subexprs, fresh_namer,
                           product_of_sums, push_up_inverses, representations)

from support import ExprGen, environment, scramble, POOL

A, B, C, D, E = (sym(n, 4, 4) for n in "ABCDE")


def nf_equal(a, b):
    return normal_form(a).ident == normal_form(b).ident


def test_inverse_of_product_reverses():
    assert nf_equal(inv(mul(A, B)), mul(inv(B), inv(A)))


def test_transpose_of_sum_distributes():
    assert nf_equal(T(add(A, B)), add(T(A), T(B)))


def test_distributivity_expands():
    assert nf_equal(mul(A, add(B, C)), add(mul(A, B), mul(A, C)))


def test_symbol_is_normal():
    assert normal_form(A) is A or normal_form(A).ident == A.ident


def test_summands_are_sorted():
    e = normal_form(add(C, A, B))
    assert isinstance(e, Plus)
    assert [t.key for t in e.terms] == ["A", "B", "C"]


def test_double_transpose_and_inverse_cancel():
    assert nf_equal(T(T(A)), A)
    assert nf_equal(inv(inv(A)), A)


def test_inverse_transpose_has_one_canonical_leaf():
    assert normal_form(inv(T(A))).ident == normal_form(T(inv(A))).ident


def test_inverse_of_sum_stays_opaque():
    e = normal_form(inv(add(A, B)))
    assert isinstance(e, Inverse) and isinstance(e.child, Plus)


def test_literal_coefficients_fold_exactly():
    e = normal_form(add(mul(Fraction(1, 2), A), mul(Fraction(1, 2), A)))
    assert e.ident == A.ident
    assert normal_form(mul(Fraction(2, 3), Fraction(3, 2), B)).ident == B.ident


def test_subtraction_is_a_coefficient():
    e = normal_form(sub(A, B))
    assert isinstance(e, Plus)
    neg_terms = [t for t in e.terms if isinstance(t, Times) and t.coeff == -1]
    assert len(neg_terms) == 1


def test_dimension_mismatch_reports_subterm():
    X = sym("X", 2, 3)
    with pytest.raises(DimensionError):
        mul(X, X)
    with pytest.raises(DimensionError):
        add(X, T(X))
    with pytest.raises(DimensionError):
        inv(X)


def test_struct_equal_examples():
    assert struct_equal(T(mul(A, B, C)), mul(T(C), T(B), T(A)))
    assert struct_equal(mul(A, add(B, C)), add(mul(A, B), mul(A, C)))
    assert not struct_equal(mul(A, B), mul(B, A))


def test_product_of_sums_factors_common_prefix():
    e = normal_form(add(mul(A, B), mul(A, C)))
    pos = [v.expr for v in representations(e) if v.label == "product-of-sums"]
    assert len(pos) == 1
    assert isinstance(pos[0], Times) and pos[0].factors[0] == A
    assert isinstance(pos[0].factors[1], Plus)
    assert struct_equal(pos[0], mul(A, add(B, C)))


def test_restoration_product_of_sums():
    n, m = 6, 3
    Hd, H = sym("Hd", n, m), sym("H", m, n)
    y, x = sym("y", m, 1), sym("x", n, 1)
    e = normal_form(add(mul(Hd, y), x, neg(mul(Hd, H, x))))
    pos = product_of_sums(e)
    assert struct_equal(pos, e)
    # H† appears once, as the left factor of a sum
    assert to_source(pos).count("Hd") == 1


def test_representations_of_plain_product_is_only_itself():
    assert [v.expr.ident for v in representations(normal_form(mul(A, B)))] == \
        [normal_form(mul(A, B)).ident]


def test_inverse_push_up():
    e = normal_form(mul(inv(B), inv(A), C))
    up = push_up_inverses(e)
    assert isinstance(up, Times) and isinstance(up.factors[0], Inverse)
    assert struct_equal(up, e)


def test_common_subexpression_modulo_transpose_and_inverse():
    e = normal_form(add(mul(inv(A), B), mul(T(B), T(inv(A)))))
    cands = detect_common_subexprs(e)
    assert cands and cands[0].count == 2
    assert struct_equal(cands[0].expr, mul(inv(A), B))


def test_no_common_subexpression_in_single_product():
    assert detect_common_subexprs(normal_form(mul(A, B))) == []


def test_common_subexpression_sites_do_not_overlap():
    e = normal_form(mul(A, B, A, B, A, B))
    for c in detect_common_subexprs(e):
        spans = sorted((s.path, s.term, s.start, s.end) for s in c.sites)
        for (p1, t1, s1, e1), (p2, t2, s2, e2) in zip(spans, spans[1:]):
            if (p1, t1) == (p2, t2):
                assert e1 <= s2


def test_special_rule_symmetric_update():
    X, Y = sym("X", 5, 3), sym("Y", 5, 3)
    e = normal_form(add(mul(T(X), X), mul(T(X), Y), mul(T(Y), X)))
    out = apply_special_rules(e, fresh_namer("W"))
    assert len(out) == 1
    rewritten, aux = out[0]
    (w, definition), = aux
    assert struct_equal(definition, add(Y, mul(Fraction(1, 2), X)))
    assert struct_equal(rewritten, add(mul(T(X), w), mul(T(w), X)))


def test_special_rule_needs_all_three_summands():
    X = sym("X", 5, 3)
    assert apply_special_rules(normal_form(mul(T(X), X))) == []


def test_representations_are_value_equal():
    rng = random.Random(7)
    env = environment(3)
    gen = ExprGen(rng)
    checked = 0
    for _ in range(200):
        e = normal_form(gen())
        for v in representations(e):
            got = eval_expression(v.inlined(), env)
            assert compare(got, eval_expression(e, env)) <= 1e-10
            assert struct_equal(v.inlined(), e)
            checked += 1
    assert checked > 200


def test_source_round_trip():
    rng = random.Random(11)
    gen = ExprGen(rng)
    symbols = {s.key: s for s in POOL}
    from support import ALPHA
    symbols["alpha"] = ALPHA
    for _ in range(200):
        e = gen()
        back = parse_expression(to_source(e), symbols)
        assert struct_equal(back, e)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_normal_form_properties(seed):
    rng = random.Random(seed)
    e = ExprGen(rng)()
    nf = normal_form(e)
    assert normal_form(nf).ident == nf.ident
    env = environment(seed % 5)
    assert compare(eval_expression(nf, env), eval_expression(e, env)) <= 1e-10
    other = scramble(e, rng)
    assert struct_equal(e, other)
    assert compare(eval_expression(other, env), eval_expression(e, env)) <= 1e-10


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
def test_struct_equal_is_sound(s1, s2):
    a = ExprGen(random.Random(s1))(3, 3)
    b = ExprGen(random.Random(s2))(3, 3)
    if struct_equal(a, b):
        env = environment(1)
        assert compare(eval_expression(a, env), eval_expression(b, env)) <= 1e-10
    assert struct_equal(a, a)
    assert struct_equal(a, b) == struct_equal(b, a)
