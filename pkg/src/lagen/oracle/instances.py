"""Seeded random operands with prescribed properties, property checks and a text dump format."""

from __future__ import annotations

import io
import math

import numpy as np

from ..expr import Operand
from ..properties import Property
from . import reference as ref

P = Property


class InstanceGenerator:
    """Deterministic per seed: the same seed and operand list give identical data.

    Every square matrix is built with singular values in [1, 2], so inverses
    of operands (and of the usual SPD compounds) stay well conditioned.
    """

    def __init__(self, seed: int):
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def orthogonal(self, n: int) -> np.ndarray:
        q, _ = ref.geqrf(self.rng.standard_normal((n, n)))
        return q

    def spd(self, n: int) -> np.ndarray:
        q = self.orthogonal(n)
        lam = self.rng.uniform(1.0, 2.0, n)
        a = (q * lam) @ q.T
        return (a + a.T) / 2

    def symmetric(self, n: int) -> np.ndarray:
        q = self.orthogonal(n)
        lam = self.rng.uniform(1.0, 2.0, n) * self.rng.choice([-1.0, 1.0], n)
        a = (q * lam) @ q.T
        return (a + a.T) / 2

    def triangular(self, n: int, lower: bool) -> np.ndarray:
        a = self.rng.uniform(-1.0, 1.0, (n, n)) / n
        a[np.diag_indices(n)] = self.rng.uniform(1.0, 2.0, n)
        return np.tril(a) if lower else np.triu(a)

    def general(self, rows: int, cols: int) -> np.ndarray:
        k = min(rows, cols)
        u = self.orthogonal(rows)[:, :k]
        v = self.orthogonal(cols)[:, :k]
        s = self.rng.uniform(1.0, 2.0, k)
        return (u * s) @ v.T

    def scalar(self, positive: bool) -> float:
        x = float(self.rng.uniform(0.5, 1.5))
        return x if positive else x * float(self.rng.choice([-1.0, 1.0]))

    def operand(self, op: Operand) -> np.ndarray | float:
        props = op.properties
        n, m = op.rows, op.cols
        if op.kind == "scalar":
            return self.scalar(P.POSITIVE_SCALAR in props)
        if op.kind == "vector":
            return self.rng.standard_normal((n, m))
        if P.IDENTITY in props:
            return np.eye(n)
        if P.PERMUTATION in props:
            return np.eye(n)[self.rng.permutation(n)]
        if P.DIAGONAL in props:
            return np.diag(self.rng.uniform(1.0, 2.0, n))
        if P.LOWER_TRIANGULAR in props or P.UPPER_TRIANGULAR in props:
            return self.triangular(n, P.LOWER_TRIANGULAR in props)
        if P.ORTHOGONAL in props:
            return self.orthogonal(n)
        if P.SPD in props or P.SPSD in props:
            # semi-definite operands are drawn definite (they may occur under an inverse)
            return self.spd(n)
        if P.SYMMETRIC in props:
            return self.symmetric(n)
        return self.general(n, m)

    def environment(self, operands) -> dict:
        """Values for the given operands, in order (order matters for determinism)."""
        ops = operands.values() if isinstance(operands, dict) else operands
        return {op.name: self.operand(op) for op in ops}


# ------------------------------------------------------------------ checks


def _sym_residual(a) -> float:
    return float(np.abs(a - a.T).max()) if a.size else 0.0


def satisfies(a, prop: Property, tol: float = 1e-12) -> bool:
    """Numerical predicate for one property (relative to the entry scale)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    scale = max(float(np.abs(a).max()), 1.0)
    t = tol * scale
    n, m = a.shape
    square = n == m
    if prop == P.POSITIVE_SCALAR:
        return a.shape == (1, 1) and a[0, 0] > 0
    if prop == P.FULL_RANK:
        s = np.linalg.svd(a, compute_uv=False)
        return bool(s.min() > 1e-10 * s.max())
    if not square:
        return False
    if prop == P.SYMMETRIC:
        return _sym_residual(a) <= t
    if prop == P.LOWER_TRIANGULAR:
        return float(np.abs(np.triu(a, 1)).max(initial=0.0)) <= t
    if prop == P.UPPER_TRIANGULAR:
        return float(np.abs(np.tril(a, -1)).max(initial=0.0)) <= t
    if prop == P.DIAGONAL:
        return float(np.abs(a - np.diag(np.diag(a))).max(initial=0.0)) <= t
    if prop == P.IDENTITY:
        return float(np.abs(a - np.eye(n)).max()) <= t
    if prop in (P.ORTHOGONAL, P.PERMUTATION):
        ok = float(np.abs(a.T @ a - np.eye(n)).max()) <= 1e-9 * scale * scale
        if prop == P.PERMUTATION:
            ok = ok and bool(np.all((np.abs(a) <= t) | (np.abs(a - 1) <= t)))
        return ok
    if prop in (P.SPD, P.SPSD):
        if _sym_residual(a) > 1e-9 * scale:
            return False
        sym = (a + a.T) / 2
        if prop == P.SPD:
            try:
                ref.potrf(sym)
                return True
            except ref.KernelError:
                return False
        return float(np.linalg.eigvalsh(sym).min()) >= -1e-9 * scale
    raise ValueError(prop)


# ------------------------------------------------------------------ text dump


def dump_matrix(a, stream=None) -> str | None:
    """``rows cols`` header followed by the row-major values, one row per line."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    out = io.StringIO()
    out.write(f"{a.shape[0]} {a.shape[1]}\n")
    for row in a:
        out.write(" ".join(repr(float(x)) for x in row) + "\n")
    text = out.getvalue()
    if stream is None:
        return text
    stream.write(text)
    return None


def load_matrix(text: str) -> np.ndarray:
    tokens = text.split()
    rows, cols = int(tokens[0]), int(tokens[1])
    vals = [float(x) for x in tokens[2:]]
    if len(vals) != rows * cols:
        raise ValueError(f"expected {rows * cols} values, found {len(vals)}")
    return np.array(vals).reshape(rows, cols)


def condition_ok(a, bound: float = 1e8) -> bool:
    s = np.linalg.svd(np.atleast_2d(a), compute_uv=False)
    return bool(s.min() > 0 and s.max() / s.min() <= bound and math.isfinite(s.max()))
