"""Naive cost of a problem: each product left to right with general kernels,
every inverse formed explicitly (getrf then getri), no property exploited.
Costs come from the same formula table as the search."""

from __future__ import annotations

from .expr import Expr, Identity, Inverse, Plus, Symbol, Times, Transpose
from .kernels import KernelDB, default_db, eval_formula
from .problem import Problem


def _formula(db: KernelDB, kid: str) -> str:
    if kid in db.kernels:
        return db.kernels[kid].cost
    return next(f.cost for f in db.factorizations.values() if f.id == kid)


class _Naive:
    def __init__(self, db: KernelDB):
        self.db = db

    def f(self, kid: str, **env) -> int:
        base = {"alpha": 0, "beta": 0, **self.db.params}
        base.update(env)
        return eval_formula(_formula(self.db, kid), base)

    def product(self, m: int, k: int, n: int) -> int:
        return self.f("gemm", out_r=m, out_c=n, X_r=m, X_c=k)

    def cost(self, e: Expr) -> int:
        if isinstance(e, (Symbol, Identity)):
            return 0
        if isinstance(e, Transpose):
            return self.cost(e.child)
        if isinstance(e, Inverse):
            c = self.cost(e.child)
            if e.scalar:
                return c + 1
            n = e.rows
            return c + self.f("getrf", n=n) + self.f("getri", X_r=n, X_c=n)
        if isinstance(e, Plus):
            c = sum(self.cost(t) for t in e.terms)
            return c + (len(e.terms) - 1) * self.f("axpy", out_r=e.rows, out_c=e.cols)
        if isinstance(e, Times):
            c = sum(self.cost(x) for x in e.scalars + e.factors)
            scal = len(e.scalars) + (e.coeff != 1)
            if not e.factors:
                return c + max(scal - 1, 0)
            acc = e.factors[0]
            rows, cols = acc.rows, acc.cols
            for x in e.factors[1:]:
                c += self.product(rows, cols, x.cols)
                cols = x.cols
            return c + scal * self.f("scal", out_r=rows, out_c=cols)
        raise TypeError(type(e))


def naive_cost(problem: Problem, db: KernelDB | None = None) -> int:
    n = _Naive(db or default_db())
    return sum(n.cost(a.rhs) for a in problem.assignments)
