"""Factorizations of operands that occur under an inverse.

Only inverse occurrences are replaced, e.g. with S = L L^T the atom inv(S)
becomes trans(inv(L)) * inv(L). Outputs are flagged as factors, which keeps
later kernel matches from multiplying the factors back together.
"""

from __future__ import annotations

from dataclasses import dataclass

from .expr import Expr, Inverse, Operand, Plus, Symbol, Times, Transpose, mul, normal_form, walk
from .properties import Property

P = Property

# cheapest first; constructive search picks the first admissible one
ORDER = ("Cholesky", "LU", "QR", "SymEVD", "SVD")
KERNEL_OF = {"Cholesky": "potrf", "LU": "getrf", "QR": "geqrf", "SymEVD": "syev", "SVD": "gesvd"}

_OUTPUTS = {
    "Cholesky": (("L", {P.LOWER_TRIANGULAR, P.FULL_RANK}),),
    "LU": (("P", {P.PERMUTATION}), ("L", {P.LOWER_TRIANGULAR, P.FULL_RANK}),
           ("U", {P.UPPER_TRIANGULAR, P.FULL_RANK})),
    "QR": (("Q", {P.ORTHOGONAL}), ("R", {P.UPPER_TRIANGULAR, P.FULL_RANK})),
    "SymEVD": (("Q", {P.ORTHOGONAL}), ("W", {P.DIAGONAL, P.FULL_RANK})),
    "SVD": (("U", {P.ORTHOGONAL}), ("S", {P.DIAGONAL, P.FULL_RANK}), ("V", {P.ORTHOGONAL})),
}
_PREFIX = {"Cholesky": "chol", "LU": "lu", "QR": "qr", "SymEVD": "evd", "SVD": "svd"}


@dataclass(frozen=True)
class FactorizationRecord:
    name: str
    kernel: str
    operand: Symbol
    outputs: tuple[Symbol, ...]
    replacement: Expr  # value of inv(operand) in terms of the outputs

    @property
    def reconstruction(self) -> Expr:
        """The operand itself in terms of the factors."""
        o = self.outputs
        if self.name == "Cholesky":
            return mul(o[0], Transpose(o[0]))
        if self.name == "LU":
            return mul(Transpose(o[0]), o[1], o[2])
        if self.name == "QR":
            return mul(o[0], o[1])
        if self.name == "SymEVD":
            return mul(o[0], o[1], Transpose(o[0]))
        return mul(o[0], o[1], Transpose(o[2]))


class FactorTable:
    """Deterministic factor operands per (factorization, operand)."""

    def __init__(self):
        self._records: dict[tuple[str, str], tuple[Symbol, ...]] = {}

    def outputs(self, name: str, s: Symbol) -> tuple[Symbol, ...]:
        key = (name, s.ident)
        if key not in self._records:
            n = s.rows
            self._records[key] = tuple(
                Symbol(Operand(f"{_PREFIX[name]}_{part}_{s.key}", n, n, frozenset(props),
                               "matrix", is_factor=True))
                for part, props in _OUTPUTS[name])
        return self._records[key]

    def operands(self) -> list[Operand]:
        return [x.operand for outs in self._records.values() for x in outs]


def _replacement(name: str, o: tuple[Symbol, ...]) -> Expr:
    if name == "Cholesky":
        return mul(Transpose(Inverse(o[0])), Inverse(o[0]))
    if name == "LU":
        return mul(Inverse(o[2]), Inverse(o[1]), o[0])
    if name == "QR":
        return mul(Inverse(o[1]), Transpose(o[0]))
    if name == "SymEVD":
        return mul(o[0], Inverse(o[1]), Transpose(o[0]))
    return mul(o[2], Inverse(o[1]), Transpose(o[0]))


def inverted_operands(e: Expr) -> list[Symbol]:
    """Matrix operands occurring as inv(S) in ``e``, in order of first appearance."""
    seen: dict[str, Symbol] = {}
    for x in walk(e):
        if isinstance(x, Inverse) and isinstance(x.child, Symbol) and not x.child.scalar:
            seen.setdefault(x.child.ident, x.child)
    return list(seen.values())


def admissible(name: str, s: Symbol) -> bool:
    props = s.operand.properties
    if s.operand.is_factor or s.rows != s.cols:
        return False
    if props & {P.LOWER_TRIANGULAR, P.UPPER_TRIANGULAR, P.DIAGONAL, P.ORTHOGONAL}:
        return False
    if name == "Cholesky":
        # an SPSD operand under an inverse is invertible, hence SPD
        return P.SPD in props or P.SPSD in props
    if name == "SymEVD":
        return P.SYMMETRIC in props
    return True


def applicable_factorizations(e: Expr, table: FactorTable | None = None,
                              blocked=frozenset()) -> list[FactorizationRecord]:
    """Factorizations offered for operands under an inverse in normal-form ``e``.

    ``blocked`` holds operand names that must not be factored (e.g. values
    that are not computed yet).
    """
    table = table or FactorTable()
    out = []
    for s in inverted_operands(e):
        if s.key in blocked:
            continue
        for name in ORDER:
            if admissible(name, s):
                outs = table.outputs(name, s)
                out.append(FactorizationRecord(name, KERNEL_OF[name], s, outs,
                                               _replacement(name, outs)))
    return out


def replace_inverse(e: Expr, s: Symbol, repl: Expr) -> Expr:
    """Rebuild ``e`` with every inv(s) replaced by ``repl`` (unnormalized)."""
    if isinstance(e, Inverse):
        if e.child == s:
            return repl
        return Inverse(replace_inverse(e.child, s, repl))
    if isinstance(e, Transpose):
        return Transpose(replace_inverse(e.child, s, repl))
    if isinstance(e, Plus):
        return Plus(replace_inverse(t, s, repl) for t in e.terms)
    if isinstance(e, Times):
        return mul(e.coeff, *(replace_inverse(x, s, repl) for x in e.scalars + e.factors))
    return e


def apply_factorization(e: Expr, rec: FactorizationRecord) -> Expr:
    return normal_form(replace_inverse(e, rec.operand, rec.replacement))
