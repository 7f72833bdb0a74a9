"""Operand properties and their implication closure."""

from __future__ import annotations

import enum
from typing import Iterable


class Property(enum.Enum):
    LOWER_TRIANGULAR = "LowerTriangular"
    UPPER_TRIANGULAR = "UpperTriangular"
    DIAGONAL = "Diagonal"
    SYMMETRIC = "Symmetric"
    SPD = "SPD"
    SPSD = "SPSD"
    ORTHOGONAL = "Orthogonal"
    IDENTITY = "Identity"
    FULL_RANK = "FullRank"
    POSITIVE_SCALAR = "PositiveScalar"
    # produced by LU; applied as row swaps
    PERMUTATION = "Permutation"

    def __repr__(self) -> str:
        return self.value


P = Property

_IMPLIES: dict[Property, tuple[Property, ...]] = {
    P.SPD: (P.SYMMETRIC, P.FULL_RANK, P.SPSD),
    P.SPSD: (P.SYMMETRIC,),
    P.IDENTITY: (P.DIAGONAL, P.SYMMETRIC, P.SPD, P.ORTHOGONAL, P.FULL_RANK, P.PERMUTATION),
    P.DIAGONAL: (P.LOWER_TRIANGULAR, P.UPPER_TRIANGULAR, P.SYMMETRIC),
    P.ORTHOGONAL: (P.FULL_RANK,),
    P.PERMUTATION: (P.ORTHOGONAL, P.FULL_RANK),
}

ALIASES = {
    "Positive": P.POSITIVE_SCALAR,
    "LT": P.LOWER_TRIANGULAR,
    "UT": P.UPPER_TRIANGULAR,
    "DI": P.DIAGONAL,
    "SYM": P.SYMMETRIC,
}


def closure(props: Iterable[Property]) -> frozenset[Property]:
    """Smallest superset of ``props`` closed under the implication table."""
    out = set(props)
    todo = list(out)
    while todo:
        p = todo.pop()
        for q in _IMPLIES.get(p, ()):
            if q not in out:
                out.add(q)
                todo.append(q)
    # lower and upper triangular together means diagonal
    if P.LOWER_TRIANGULAR in out and P.UPPER_TRIANGULAR in out and P.DIAGONAL not in out:
        out.add(P.DIAGONAL)
        out.add(P.SYMMETRIC)
    return frozenset(out)


def parse_property(name: str) -> Property:
    if name in ALIASES:
        return ALIASES[name]
    try:
        return Property(name)
    except ValueError:
        raise ValueError(f"unknown property {name!r}") from None


def is_triangular(props: frozenset[Property]) -> bool:
    return P.LOWER_TRIANGULAR in props or P.UPPER_TRIANGULAR in props
