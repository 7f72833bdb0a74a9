"""Brute-force matrix chain baseline: every parenthesization is tried."""

from __future__ import annotations

import string
from typing import Callable, Sequence


def gemm_cost(m: int, k: int, n: int) -> int:
    return 2 * m * k * n


def _names(count: int) -> list[str]:
    if count <= len(string.ascii_uppercase):
        return list(string.ascii_uppercase[:count])
    return [f"M{i}" for i in range(count)]


def brute_force_chain(dims: Sequence[int], cost: Callable[[int, int, int], int] = gemm_cost
                      ) -> tuple[int, str]:
    """Minimum cost of multiplying the chain with shapes dims[i] x dims[i+1].

    Plain recursion over split points without memoization, so it really
    enumerates all parenthesizations. Ties keep the leftmost split.
    """
    n = len(dims) - 1
    if n < 1:
        raise ValueError("a chain needs at least one matrix")
    if n > 12:
        raise ValueError("chains longer than 12 are not enumerated")
    names = _names(n)

    def best(i: int, j: int) -> tuple[int, str]:
        if i == j:
            return 0, names[i]
        result = None
        for s in range(i, j):
            lc, lp = best(i, s)
            rc, rp = best(s + 1, j)
            c = lc + rc + cost(dims[i], dims[s + 1], dims[j + 1])
            if result is None or c < result[0]:
                result = (c, f"({lp}{rp})")
        return result

    return best(0, n - 1)


def all_parenthesizations(count: int) -> list[str]:
    names = _names(count)

    def rec(i, j):
        if i == j:
            return [names[i]]
        out = []
        for s in range(i, j):
            out.extend(f"({a}{b})" for a in rec(i, s) for b in rec(s + 1, j))
        return out

    return rec(0, count - 1)
