"""Property inference for compound expressions."""

from __future__ import annotations

from functools import lru_cache

from .expr import (Expr, Identity, Inverse, Plus, Symbol, Times, Transpose, atom_transpose,
                   normal_form)
from .properties import Property, closure

P = Property

_KEPT_BY_TRANSPOSE = frozenset({P.DIAGONAL, P.SYMMETRIC, P.SPD, P.SPSD, P.ORTHOGONAL,
                                P.IDENTITY, P.FULL_RANK, P.PERMUTATION, P.POSITIVE_SCALAR})
_KEPT_BY_INVERSE = frozenset({P.LOWER_TRIANGULAR, P.UPPER_TRIANGULAR, P.DIAGONAL, P.SYMMETRIC,
                              P.SPD, P.ORTHOGONAL, P.IDENTITY, P.PERMUTATION,
                              P.POSITIVE_SCALAR})


def infer_properties(e: Expr) -> frozenset:
    """Properties of ``e`` derivable from the properties of its operands."""
    return _infer(normal_form(e))


def _is_symmetric_expr(e: Expr) -> bool:
    if e.rows != e.cols:
        return False
    return normal_form(Transpose(e)).key == e.key


def _full_rank_product(props: list[frozenset], factors) -> bool:
    if not all(P.FULL_RANK in p for p in props):
        return False
    return (all(f.rows >= f.cols for f in factors)
            or all(f.rows <= f.cols for f in factors))


def _full_column_rank(props: list[frozenset], factors) -> bool:
    return all(P.FULL_RANK in p and f.rows >= f.cols for p, f in zip(props, factors))


@lru_cache(maxsize=100_000)
def _infer(e: Expr) -> frozenset:
    if isinstance(e, Symbol):
        return e.operand.properties
    if isinstance(e, Identity):
        return closure({P.IDENTITY})
    if isinstance(e, Transpose):
        p = _infer(e.child)
        out = set(p & _KEPT_BY_TRANSPOSE)
        if P.LOWER_TRIANGULAR in p:
            out.add(P.UPPER_TRIANGULAR)
        if P.UPPER_TRIANGULAR in p:
            out.add(P.LOWER_TRIANGULAR)
        return closure(out)
    if isinstance(e, Inverse):
        p = _infer(e.child)
        out = set(p & _KEPT_BY_INVERSE)
        if not e.scalar:
            out.add(P.FULL_RANK)
        if P.SPSD in p:
            # an invertible SPSD matrix is SPD
            out.add(P.SPD)
        if _is_symmetric_expr(e):
            out.add(P.SYMMETRIC)
        return closure(out)
    if isinstance(e, Times):
        return closure(_infer_times(e))
    if isinstance(e, Plus):
        return closure(_infer_plus(e))
    raise TypeError(type(e))


def _infer_times(e: Times) -> set:
    positive = e.coeff > 0 and all(P.POSITIVE_SCALAR in _infer(s) for s in e.scalars)
    nonzero = e.coeff != 0 and all(P.POSITIVE_SCALAR in _infer(s) for s in e.scalars)
    f = e.factors
    out: set = set()
    if not f:
        if positive:
            out.add(P.POSITIVE_SCALAR)
        return out
    fp = [_infer(x) for x in f]
    if all(x.rows == x.cols for x in f):
        for prop in (P.LOWER_TRIANGULAR, P.UPPER_TRIANGULAR, P.DIAGONAL):
            if all(prop in p for p in fp):
                out.add(prop)
        if abs(e.coeff) == 1 and not e.scalars and all(P.ORTHOGONAL in p for p in fp):
            out.add(P.ORTHOGONAL)
    if nonzero and _full_rank_product(fp, f):
        out.add(P.FULL_RANK)
    if len(f) == 1:
        out |= fp[0] & {P.SYMMETRIC}
        if positive:
            out |= fp[0] & {P.SPD, P.SPSD}
    if _is_symmetric_expr(e):
        out.add(P.SYMMETRIC)
        if positive and len(f) > 1:
            out |= _palindrome_definiteness(f, fp)
    return out


def _palindrome_definiteness(f, fp) -> set:
    """G^T C G with C SPD/SPSD and G of full column rank."""
    n = len(f)
    for i in range(n // 2):
        if atom_transpose(f[n - 1 - i]) != f[i]:
            return set()
    g_factors = f[(n + 1) // 2:]
    g_props = fp[(n + 1) // 2:]
    if n % 2:
        middle = fp[n // 2]
        mid_spd, mid_spsd = P.SPD in middle, P.SPSD in middle
    else:
        mid_spd = mid_spsd = True
    if mid_spd and _full_column_rank(g_props, g_factors):
        return {P.SPD}
    if mid_spsd:
        return {P.SPSD}
    return set()


def _infer_plus(e: Plus) -> set:
    tp = [_infer(t) for t in e.terms]
    out: set = set()
    if e.scalar:
        if all(P.POSITIVE_SCALAR in p for p in tp):
            out.add(P.POSITIVE_SCALAR)
        return out
    for prop in (P.LOWER_TRIANGULAR, P.UPPER_TRIANGULAR, P.DIAGONAL, P.SYMMETRIC):
        if all(prop in p for p in tp):
            out.add(prop)
    if P.SYMMETRIC not in out and _is_symmetric_expr(e):
        out.add(P.SYMMETRIC)
    if all(P.SPSD in p for p in tp):
        out.add(P.SPSD)
        if any(P.SPD in p for p in tp):
            out.add(P.SPD)
    return out
