"""Shared test helpers: a pool of typed operands and a seeded random
expression generator that only builds well-conditioned inverses."""

from __future__ import annotations

import random

import numpy as np

from lagen.expr import (Identity, Inverse, Plus, Times, Transpose, ZeroExpression, add, inv, mul,
                        normal_form, operands, scalar, sym, Symbol, T, walk)
from lagen.kernels import default_db
from lagen.oracle.evaluate import (eval_expression, eval_scalar, from_full, kernel_of,
                                   output_formats, required_formats, run_kernel, to_full)
from lagen.oracle import reference as ref
from lagen.inference import infer_properties
from lagen.oracle.instances import InstanceGenerator, satisfies

POOL = [
    sym("S1", 3, 3, "SPD"),
    sym("S2", 3, 3, "SPD"),
    sym("G", 3, 3, "FullRank"),
    sym("L", 3, 3, "LowerTriangular", "FullRank"),
    sym("U", 3, 3, "UpperTriangular", "FullRank"),
    sym("D", 3, 3, "Diagonal", "FullRank"),
    sym("Q", 3, 3, "Orthogonal"),
    sym("Y", 3, 3, "Symmetric"),
    sym("H", 2, 2, "SPD"),
    sym("K", 2, 2, "FullRank"),
    sym("A", 3, 2, "FullRank"),
    sym("B", 3, 2, "FullRank"),
    sym("C", 2, 3),
    sym("x", 3, 1),
    sym("y", 3, 1),
    sym("z", 2, 1),
]
ALPHA = scalar("alpha", "PositiveScalar")
OPERANDS = {s.key: s.operand for s in POOL} | {"alpha": ALPHA.operand}
# square operands whose inverse is well conditioned (singular values in [1, 2])
SAFE = {"S1", "S2", "G", "L", "U", "D", "Q", "H", "K"}
SPD_NAMES = {"S1", "S2", "H"}
DIMS = (1, 2, 3)


def environment(seed: int) -> dict:
    return InstanceGenerator(seed).environment(OPERANDS)


class ExprGen:
    """Random well-typed expressions over :data:`POOL` (at most ``max_ops`` operands)."""

    def __init__(self, rng: random.Random, max_ops: int = 8, max_depth: int = 5):
        self.rng = rng
        self.max_ops = max_ops
        self.max_depth = max_depth
        self.ops = 0

    def __call__(self, rows: int | None = None, cols: int | None = None):
        if rows is None:
            shapes = sorted({(s.rows, s.cols) for s in POOL})
            rows, cols = self.rng.choice(shapes)
        while True:
            self.ops = 0
            e = self.expr(rows, cols, self.max_depth)
            if not 1 <= leaf_count(e) <= self.max_ops:
                continue
            try:
                normal_form(e)
            except ZeroExpression:  # e.g. X - X
                continue
            return e

    def leaf(self, r, c):
        rng = self.rng
        cands = [s for s in POOL if (s.rows, s.cols) == (r, c)]
        tcands = [T(s) for s in POOL if (s.rows, s.cols) == (c, r)]
        opts = cands + tcands
        if r == c and rng.random() < 0.1:
            return Identity(r)
        if not opts:
            return None
        self.ops += 1
        return rng.choice(opts)

    def safe_square(self, n, depth):
        """An invertible, well-conditioned n x n expression."""
        rng = self.rng
        safe = [s for s in POOL if s.key in SAFE and s.rows == n]
        spd = [s for s in POOL if s.key in SPD_NAMES and s.rows == n]
        choice = rng.random()
        self.ops += 1
        if choice < 0.45 or depth <= 1 or self.ops >= self.max_ops - 1:
            s = rng.choice(safe)
            return T(s) if rng.random() < 0.3 else s
        if choice < 0.75:
            self.ops += 1
            return mul(rng.choice(safe), self.safe_square(n, depth - 1))
        if len(spd) >= 1:
            self.ops += 1
            a, b = rng.choice(spd), rng.choice(spd)
            return add(a, b) if rng.random() < 0.5 else add(a, mul(ALPHA, Identity(n)))
        return rng.choice(safe)

    def expr(self, r, c, depth):
        rng = self.rng
        if depth <= 0 or self.ops >= self.max_ops:
            e = self.leaf(r, c)
            if e is not None:
                return e
            return self.product(r, c, 1)
        kind = rng.choices(["leaf", "plus", "times", "trans", "inv", "scale"],
                           [3, 2, 3, 1, 1 if r == c and r > 1 else 0, 1])[0]
        if kind == "leaf":
            e = self.leaf(r, c)
            return e if e is not None else self.product(r, c, depth)
        if kind == "plus":
            n = rng.choice((2, 2, 3))
            terms = [self.expr(r, c, depth - 1) for _ in range(n)]
            terms = [mul(rng.choice((1, -1, 2)), t) if rng.random() < 0.3 else t for t in terms]
            return add(*terms)
        if kind == "times":
            return self.product(r, c, depth)
        if kind == "trans":
            return T(self.expr(c, r, depth - 1))
        if kind == "inv":
            return inv(self.safe_square(r, depth - 1))
        return mul(ALPHA, self.expr(r, c, depth - 1))

    def product(self, r, c, depth):
        for _ in range(20):
            k = self.rng.choice(DIMS)
            left = self.leaf(r, k)
            if left is None:
                continue
            if depth > 1:
                right = self.expr(k, c, depth - 1)
            else:
                right = self.leaf(k, c)
                if right is None:
                    continue
            return mul(left, right)
        # always possible: r x 3 leaf times 3 x c leaf
        for k in (3, 2):
            left, right = self.leaf(r, k), self.leaf(k, c)
            if left is not None and right is not None:
                return mul(left, right)
        raise RuntimeError(f"no product of shape {r}x{c}")


def leaf_count(e) -> int:
    return sum(1 for x in walk(e) if isinstance(x, (Symbol, Identity)))


def scramble(e, rng: random.Random):
    """A value-equal, differently built version of ``e``."""
    if isinstance(e, Plus):
        terms = [scramble(t, rng) for t in e.terms]
        rng.shuffle(terms)
        return add(*terms)
    if isinstance(e, Times):
        fs = [scramble(f, rng) for f in e.factors]
        if len(fs) >= 2 and rng.random() < 0.5:
            # (XY...)  ==  trans(...trans(Y) trans(X))
            return mul(e.coeff, *e.scalars, T(mul(*[T(f) for f in reversed(fs)])))
        return mul(e.coeff, *e.scalars, *fs)
    if isinstance(e, Transpose):
        return T(scramble(e.child, rng))
    if isinstance(e, Inverse):
        inner = scramble(e.child, rng)
        return T(inv(T(inner))) if rng.random() < 0.5 else inv(inner)
    if rng.random() < 0.3 and not e.scalar:
        return T(T(e))
    return e


def run_call(call, vals: dict, db=None):
    """Execute one symbolic kernel call on full-format values; returns (outputs, flops)."""
    db = db or default_db()
    k = kernel_of(db, call.kernel)
    flags = dict(call.flags)
    need = required_formats(k, flags)
    args = {slot: from_full(np.atleast_2d(vals[name]), need.get(slot, "full"))
            for slot, name in call.args}
    ctr = ref.FlopCounter()
    outs = run_kernel(k, args, flags, eval_scalar(call.alpha, vals),
                      eval_scalar(call.beta, vals), ctr)
    full = [to_full(v, f) for v, f in zip(outs, output_formats(k, flags))]
    return dict(zip(call.outputs, full)), ctr.flops


def path_to(node):
    """Edges of one root path to ``node`` (first incoming edge at each step)."""
    edges = []
    while node.incoming:
        e = node.incoming[0]
        edges.append(e)
        node = e.src
    return list(reversed(edges))


def values_along(edges, env: dict, db=None) -> dict:
    vals = dict(env)
    for e in edges:
        for c in e.calls:
            out, _ = run_call(c, vals, db)
            vals.update(out)
    return vals


def evaluate_state(state, vals: dict) -> dict:
    """Values of the non-auxiliary assignments; auxiliaries may appear in any order."""
    vals = dict(vals)
    todo = [a for a in state if a.aux]
    while todo:
        left = []
        for a in todo:
            try:
                vals.setdefault(a.lhs.key, eval_expression(a.rhs, vals))
            except KeyError:
                left.append(a)
        if len(left) == len(todo):
            raise KeyError(f"auxiliary assignments depend on missing values: {left}")
        todo = left
    return {a.lhs.key: eval_expression(a.rhs, vals) for a in state if not a.aux}




# ---------------------------------------------------------------- kernel cases

BETA = scalar("beta")


def kernel_case(kid: str, m: int, n: int, k: int):
    """An expression the kernel ``kid`` computes in one call, sized by (m, n, k)."""
    X = lambda name, r, c, *p: sym(name, r, c, *p)  # noqa: E731
    cases = {
        "gemm": lambda: add(mul(ALPHA, X("A", m + 1, k + 1), T(X("B", n + 1, k + 1))),
                            mul(BETA, X("C", m + 1, n + 1))),
        "ger": lambda: add(mul(X("x", m + 1, 1), T(X("y", n + 1, 1))), X("C", m + 1, n + 1)),
        "gemv": lambda: add(mul(ALPHA, T(X("A", k, m)), X("x", k, 1)), X("y", m, 1)),
        "dot": lambda: mul(T(X("x", m, 1)), X("y", m, 1)),
        "trmm": lambda: mul(ALPHA, X("B", n + 1, m), T(X("L", m, m, "LowerTriangular"))),
        "trmv": lambda: mul(X("U", m, m, "UpperTriangular"), X("x", m, 1)),
        "trsm": lambda: mul(ALPHA, T(inv(X("L", m, m, "LowerTriangular", "FullRank"))),
                            X("B", m, n + 1)),
        "trsv": lambda: mul(inv(X("U", m, m, "UpperTriangular", "FullRank")), X("x", m, 1)),
        "diagmul": lambda: mul(X("B", n + 1, m), X("D", m, m, "Diagonal")),
        "diagsolve": lambda: mul(inv(X("D", m, m, "Diagonal", "FullRank")), T(X("B", n + 1, m))),
        "laswp": lambda: mul(T(X("P", m, m, "Permutation")), X("B", m, n + 1)),
        "syrk": lambda: add(mul(ALPHA, T(X("A", k, m + 1)), X("A", k, m + 1)),
                            mul(BETA, X("S", m + 1, m + 1, "Symmetric"))),
        "syrk_id": lambda: add(mul(X("A", m + 1, k), T(X("A", m + 1, k))),
                               mul(ALPHA, Identity(m + 1))),
        "syr2k": lambda: add(mul(T(X("A", k, m + 1)), X("B", k, m + 1)),
                             mul(T(X("B", k, m + 1)), X("A", k, m + 1))),
        "axpy": lambda: add(mul(ALPHA, X("A", m, n)), T(X("B", n, m))),
        "add_identity": lambda: add(Identity(m + 1), mul(ALPHA, X("A", m + 1, m + 1))),
        "scal": lambda: mul(ALPHA, X("A", m, n)),
        "transpose": lambda: T(X("A", m, n + 1)),
        "trtri": lambda: inv(X("L", m + 1, m + 1, "LowerTriangular", "FullRank")),
        "diaginv": lambda: inv(X("D", m, m, "Diagonal", "FullRank")),
        "getri": lambda: T(inv(X("G", m + 1, m + 1, "FullRank"))),
    }
    return cases[kid]()


FACTORIZATION_INPUTS = {"potrf": "SPD", "getrf": "FullRank", "geqrf": "FullRank",
                        "syev": "Symmetric", "gesvd": "FullRank"}


def _declared(e) -> dict:
    from lagen.expr import operands
    return {o.name: o for o in operands(e)}


def kernel_flops(kid: str, dims, seed: int = 0):
    """(formula flops, counted flops, relative error of the result) for one case."""
    from lagen.expr import normal_form as nf
    from lagen.kernels import make_call
    from lagen.oracle.evaluate import compare

    db = default_db()
    gen = InstanceGenerator(seed)
    if kid in FACTORIZATION_INPUTS:
        n = max(dims)
        a = gen.operand(sym("A", n, n, FACTORIZATION_INPUTS[kid]).operand)
        fac = next(f for f in db.factorizations.values() if f.id == kid)
        ctr = ref.FlopCounter()
        outs = run_kernel(fac, {"A": a}, {}, None, None, ctr)
        full = [to_full(v, f) for v, f in zip(outs, fac.output_formats)]
        recon = {"potrf": lambda o: o[0] @ o[0].T,
                 "getrf": lambda o: o[0].T @ o[1] @ o[2],
                 "geqrf": lambda o: o[0] @ o[1],
                 "syev": lambda o: o[0] @ o[1] @ o[0].T,
                 "gesvd": lambda o: o[0] @ o[1] @ o[2].T}[kid](full)
        return db.factorization_cost(fac.name, n), ctr.flops, compare(recon, a)
    m, n, k = dims
    e = nf(kernel_case(kid, m, n, k))
    subs = [s for kk, s in db.matches(e) if kk.id == kid and nf(s.computed).ident == e.ident]
    if not subs:
        raise AssertionError(f"{kid} does not match its own case {e}")
    call = make_call(db.kernels[kid], subs[0], "OUT", db)
    env = gen.environment(_declared(e))
    env["beta"] = -0.75
    out, counted = run_call(call, env, db)
    return call.flops, counted, compare(out["OUT"], eval_expression(e, env))


# ---------------------------------------------------------------- inference


def _typed(rng):
    """Expressions rich in inferable properties."""
    n = 4
    L = [sym(f"L{i}", n, n, "LowerTriangular", "FullRank") for i in range(2)]
    U = sym("U", n, n, "UpperTriangular")
    D = [sym(f"D{i}", n, n, "Diagonal") for i in range(2)]
    S = [sym(f"S{i}", n, n, "SPD") for i in range(2)]
    R = sym("R", n, n, "SPSD")
    Q = sym("Q", n, n, "Orthogonal")
    X = sym("X", 9, n, "FullRank")
    M = sym("M", 9, 9, "SPD")
    alpha = scalar("alpha", "PositiveScalar")
    templates = [
        lambda: mul(*rng.choices(L, k=rng.randint(2, 3))),
        lambda: mul(T(rng.choice(L)), U),
        lambda: add(*rng.choices(D, k=2), mul(alpha, rng.choice(D))),
        lambda: inv(rng.choice(D)),
        lambda: add(mul(T(X), X), mul(alpha, Identity(n))),
        lambda: mul(T(X), M, X),
        lambda: mul(T(X), inv(M), X),
        lambda: add(rng.choice(S), R),
        lambda: add(R, R),
        lambda: inv(rng.choice(S)),
        lambda: mul(alpha, rng.choice(S)),
        lambda: mul(Q, T(Q)) if rng.random() < 0.5 else T(Q),
        lambda: mul(rng.choice(L), T(rng.choice(L))),
        lambda: mul(T(rng.choice(L)), rng.choice(S), rng.choice(L)),
    ]
    return rng.choice(templates)()


def typed_instances(count, seed):
    rng = random.Random(seed)
    for i in range(count):
        e = _typed(rng) if i % 2 else ExprGen(rng)()
        env = InstanceGenerator(seed * 1000 + i).environment({o.name: o for o in operands(e)})
        yield e, env


def inference_violations(count, seed):
    bad, checked = [], 0
    for e, env in typed_instances(count, seed):
        v = eval_expression(e, env)
        for p in infer_properties(e):
            checked += 1
            if not satisfies(v, p):
                bad.append((str(e), p))
    return bad, checked
