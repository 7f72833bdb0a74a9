"""Derivation graph search.

Nodes hold the work that is left: a tuple of assignments whose right-hand
sides are in normal form. An edge applies one or more kernel calls; the
computed part is replaced by an intermediate operand. Intermediates are
named through a table keyed by their fully resolved normal form, so two
branches that compute the same value reach syntactically identical nodes,
which are then merged.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable

from .expr import (DimensionError, Expr, Identity, Inverse, Operand, Plus, Symbol, Times,
                   Transpose, ZeroExpression, as_term, mul, normal_form, operands, substitute,
                   summands, walk)
from .factorizations import (FactorizationRecord, FactorTable, applicable_factorizations,
                             apply_factorization)
from .inference import infer_properties
from .kernels import KernelCall, KernelDB, default_db, kernel_cost, make_call
from .matching import Position, Substitution, _nested, replace_at, slots
from .problem import Assignment, Problem, _SQUARE_ONLY
from .properties import Property, closure
from .rewrite import representations

log = logging.getLogger(__name__)


class NoSolution(RuntimeError):
    """No terminal node was reached.

    ``limits_exceeded`` tells apart a search cut off by its limits from one
    that got stuck with nothing left to try.
    """

    def __init__(self, message: str, limits_exceeded: bool, remaining: list[str]):
        super().__init__(message)
        self.limits_exceeded = limits_exceeded
        self.remaining = remaining


@dataclass(frozen=True)
class SearchConfig:
    strategy: str = "exhaustive"
    threshold: int | None = 100
    max_iterations: int = 30
    max_nodes: int = 200_000
    k: int = 1
    merge: bool = True
    max_cse: int = 2

    def __post_init__(self):
        if self.strategy not in ("exhaustive", "constructive"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.threshold is not None and self.threshold < 1:
            raise ValueError("threshold must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")


# ------------------------------------------------------------------ table


class IntermediateTable:
    """Resolved normal form <-> intermediate operand, injective both ways."""

    def __init__(self, reserved: Iterable[str] = ()):
        self.reserved = set(reserved)
        self.by_ident: dict[str, Symbol] = {}
        self.definitions: dict[str, Expr] = {}
        self.symbols: dict[str, Symbol] = {}

    def __len__(self):
        return len(self.symbols)

    def resolve(self, e: Expr) -> Expr:
        names = {o.name for o in operands(e)} & self.definitions.keys()
        if names:
            e = substitute(e, {n: self.definitions[n] for n in names})
        return normal_form(e)

    def _fresh(self) -> str:
        k = len(self.symbols) + 1
        while f"T{k}" in self.reserved:
            k += 1
        return f"T{k}"

    def register(self, computed: Expr) -> Symbol:
        r = self.resolve(computed)
        if isinstance(r, Symbol):
            return r
        hit = self.by_ident.get(r.ident)
        if hit is not None:
            return hit
        props = set(infer_properties(r)) | set(infer_properties(computed))
        props.discard(Property.POSITIVE_SCALAR)
        if r.rows != r.cols:
            props -= _SQUARE_ONLY
        kind = "vector" if (r.rows == 1) != (r.cols == 1) else "matrix"
        name = self._fresh()
        self.reserved.add(name)
        s = Symbol(Operand(name, r.rows, r.cols, closure(props), kind, is_intermediate=True))
        self.by_ident[r.ident] = s
        self.definitions[name] = r
        self.symbols[name] = s
        return s


def register_intermediate(t: IntermediateTable, computed: Expr) -> Symbol:
    return t.register(computed)


# ------------------------------------------------------------------ graph


@dataclass(eq=False)
class Node:
    id: int
    state: tuple[Assignment, ...]
    key: str
    level: int
    terminal: bool
    dist: float = math.inf
    incoming: list["Edge"] = field(default_factory=list, repr=False)
    outgoing: list["Edge"] = field(default_factory=list, repr=False)

    @property
    def remaining(self) -> str:
        return "; ".join(str(a) for a in self.state)


@dataclass(eq=False)
class Edge:
    id: int
    src: Node = field(repr=False)
    dst: Node = field(repr=False)
    calls: tuple[KernelCall, ...]

    @property
    def cost(self) -> int:
        return sum(c.flops for c in self.calls)

    @property
    def label(self) -> str:
        return "; ".join(f"{c.describe()} [{c.flops}]" for c in self.calls)


@dataclass
class SymbolicProgram:
    calls: tuple[KernelCall, ...]
    cost: int
    operands: dict[str, Operand]
    inputs: tuple[str, ...]
    outputs: tuple[tuple[str, str], ...]  # (problem output, operand holding it)
    definitions: dict[str, Expr]
    nodes: tuple[int, ...] = ()

    @property
    def kernels(self) -> list[str]:
        return [c.kernel for c in self.calls]

    def describe(self) -> str:
        lines = [f"{c.describe()}  # {c.flops} flops" for c in self.calls]
        lines += [f"{o} <- {s}" for o, s in self.outputs]
        lines.append(f"total: {self.cost} flops")
        return "\n".join(lines)


def state_key(state: tuple[Assignment, ...]) -> str:
    return ";".join(a.key for a in state)


def is_terminal(state) -> bool:
    return all(isinstance(a.rhs, Symbol) and not a.aux for a in state)


def pending(state) -> set[str]:
    return {a.lhs.key for a in state if not isinstance(a.rhs, Symbol) or a.aux}


def _mentions(state, name: str) -> bool:
    return any(name in {o.name for o in operands(a.rhs)} for a in state)


def settle(state: list[Assignment], computed: set[str] = frozenset()) -> tuple[Assignment, ...]:
    """Drop finished auxiliaries and forward resolved left-hand sides."""
    state = [a for a in state if not (a.aux and a.lhs.key in computed)]
    changed = True
    while changed:
        changed = False
        for i, a in enumerate(state):
            if not isinstance(a.rhs, Symbol):
                continue
            if a.aux and a.rhs == a.lhs:
                del state[i]
                changed = True
                break
            others = [b for j, b in enumerate(state) if j != i]
            if _mentions(others, a.lhs.key) and a.rhs != a.lhs:
                m = {a.lhs.key: a.rhs}
                state = [b if j == i else Assignment(b.lhs, normal_form(substitute(b.rhs, m)), b.aux)
                         for j, b in enumerate(state)]
                changed = True
            if a.aux:
                state = [b for b in state if b is not a]
                changed = True
            if changed:
                break
    return tuple(state)


def propagate(e: Expr, target: Expr, t: Symbol, t_trans: Expr | None = None) -> Expr:
    """Replace every other occurrence of the value ``target`` by ``t``.

    Covers whole opaque-inverse contents, whole factor sums and contiguous
    product segments (also in transposed form). ``e`` and ``target`` are in
    normal form; the result is not normalized.
    """
    if t_trans is None:
        t_trans = normal_form(Transpose(target))
    seg = seg_t = None
    if isinstance(target, Times) and target.coeff == 1 and not target.scalars:
        seg = target.factors
        if isinstance(t_trans, Times) and t_trans.coeff == 1 and not t_trans.scalars:
            seg_t = t_trans.factors

    probes = [target.ident, t_trans.ident] + [p[0].ident for p in (seg, seg_t) if p]
    if not any(p in e.ident for p in probes):
        return e

    def rec(x):
        if x == target:
            return t
        if x == t_trans:
            return Transpose(t)
        if isinstance(x, (Symbol, Identity)):
            return x
        if isinstance(x, (Inverse, Transpose)):
            c = rec(x.child)
            return x if c is x.child else type(x)(c)
        if isinstance(x, Plus):
            ts = [rec(y) for y in x.terms]
            return x if all(a is b for a, b in zip(ts, x.terms)) else Plus(ts)
        if isinstance(x, Times):
            f = [rec(y) for y in x.factors]
            changed = any(a is not b for a, b in zip(f, x.factors))
            for pat, rep in ((seg, t), (seg_t, Transpose(t))):
                if pat is None:
                    continue
                i = 0
                while i + len(pat) <= len(f):
                    if tuple(f[i:i + len(pat)]) == pat:
                        f[i:i + len(pat)] = [rep]
                        changed = True
                    i += 1
            return mul(x.coeff, *x.scalars, *f) if changed else x
        return x

    return rec(e)


def _propagate_state(state, target: Expr, t: Symbol) -> list[Assignment]:
    tt = normal_form(Transpose(target))
    out = []
    for a in state:
        if isinstance(a.rhs, Symbol) or (a.aux and a.lhs == t):
            out.append(a)
            continue
        r = propagate(a.rhs, target, t, tt)
        out.append(a if r is a.rhs else Assignment(a.lhs, normal_form(r), a.aux))
    return out


# ------------------------------------------------------------------ engine


@dataclass
class DerivationGraph:
    problem: Problem
    config: SearchConfig
    db: KernelDB
    table: IntermediateTable
    factors: FactorTable
    nodes: list[Node] = field(default_factory=list)
    edges: list[Edge] = field(default_factory=list)
    by_key: dict[str, Node] = field(default_factory=dict)
    iterations: int = 0
    merges: int = 0
    limits_exceeded: bool = False
    factor_records: dict[str, FactorizationRecord] = field(default_factory=dict)
    _match_cache: dict = field(default_factory=dict)
    _repr_cache: dict = field(default_factory=dict)

    @property
    def root(self) -> Node:
        return self.nodes[0]

    @property
    def terminals(self) -> list[Node]:
        return [n for n in self.nodes if n.terminal]

    # -------------------------------------------------- construction

    def add_node(self, state, level) -> tuple[Node, bool]:
        key = state_key(state)
        if self.config.merge and key in self.by_key:
            self.merges += 1
            return self.by_key[key], False
        n = Node(len(self.nodes), state, key, level, is_terminal(state))
        self.nodes.append(n)
        self.by_key.setdefault(key, n)
        return n, True

    def add_edge(self, src: Node, dst: Node, calls) -> Edge:
        e = Edge(len(self.edges), src, dst, tuple(calls))
        self.edges.append(e)
        src.outgoing.append(e)
        dst.incoming.append(e)
        dst.dist = min(dst.dist, src.dist + e.cost)
        return e

    # -------------------------------------------------- variants

    def namer(self, e: Expr) -> Symbol:
        return self.table.register(e)

    def variants(self, state) -> list[tuple[tuple[Assignment, ...], set[int] | None]]:
        out: list = [(state, None)]
        for i, a in enumerate(state):
            if isinstance(a.rhs, Symbol):
                continue
            reps = self._repr_cache.get(a.rhs.ident)
            if reps is None:
                reps = representations(a.rhs, self.namer, self.config.max_cse)[1:]
                self._repr_cache[a.rhs.ident] = reps
            for v in reps:
                new = list(state)
                new[i] = Assignment(a.lhs, v.expr, a.aux)
                focus = {i}
                for y, d in v.aux:
                    if any(b.lhs == y for b in new) or _mentions(state, y.key):
                        continue  # already computed or already pending
                    new.append(Assignment(y, normal_form(d), aux=True))
                    focus.add(len(new) - 1)
                out.append((tuple(new), focus))
        return out

    # -------------------------------------------------- applying work

    def apply_match(self, state, i, k, sub: Substitution):
        t = self.table.register(sub.computed)
        a = state[i]
        try:
            rhs = normal_form(replace_at(a.rhs, sub.position, t))
        except (ZeroExpression, DimensionError):
            return None
        call = make_call(k, sub, t.key, self.db)
        new = list(state)
        new[i] = Assignment(a.lhs, rhs, a.aux)
        try:
            new = _propagate_state(new, normal_form(sub.computed), t)
        except (ZeroExpression, DimensionError):
            return None
        return (call,), settle(new, {t.key})

    def apply_factorization(self, state, rec: FactorizationRecord):
        new = []
        for a in state:
            rhs = a.rhs if isinstance(a.rhs, Symbol) else apply_factorization(a.rhs, rec)
            new.append(Assignment(a.lhs, rhs, a.aux))
        self.factor_records[rec.outputs[0].key] = rec
        call = KernelCall(
            kernel=rec.kernel, args=(("A", rec.operand.key),),
            outputs=tuple(o.key for o in rec.outputs),
            flops=self.db.factorization_cost(rec.name, rec.operand.rows),
            computes=f"{rec.name} of {rec.operand.key}")
        return (call,), settle(new)

    def _matches(self, e: Expr):
        hit = self._match_cache.get(e.ident)
        if hit is None:
            hit = self._match_cache[e.ident] = self.db.matches(e)
        return hit

    def matches(self, state, focus):
        blocked = pending(state)
        for i, a in enumerate(state):
            if isinstance(a.rhs, Symbol) or (focus is not None and i not in focus):
                continue
            for k, sub in self._matches(a.rhs):
                if any(o.key in blocked for o in sub.operands):
                    continue
                if k.family in WHOLE_SLOT and len(summands(_slot_at(a.rhs, sub.position.path))) > 1:
                    continue
                yield i, k, sub

    def factorizations(self, state, only_in_products=False):
        blocked = pending(state)
        seen = set()
        for a in state:
            if isinstance(a.rhs, Symbol):
                continue
            allowed = _inverses_in_products(a.rhs) if only_in_products else None
            for rec in applicable_factorizations(a.rhs, self.factors, blocked):
                if allowed is not None and rec.operand.ident not in allowed:
                    continue
                key = (rec.name, rec.operand.ident)
                if key not in seen:
                    seen.add(key)
                    yield rec

    # -------------------------------------------------- successor generators

    def successors_exhaustive(self, node: Node):
        out = []
        for state, focus in self.variants(node.state):
            for i, k, sub in self.matches(state, focus):
                r = self.apply_match(state, i, k, sub)
                if r:
                    out.append(r)
        for rec in self.factorizations(node.state):
            out.append(self.apply_factorization(node.state, rec))
        return _dedupe(out)

    def successors_constructive(self, node: Node):
        facts = list(self.factorizations(node.state, only_in_products=True))
        if facts:
            best: dict[str, FactorizationRecord] = {}
            for rec in facts:  # records come cheapest kind first
                best.setdefault(rec.operand.ident, rec)
            return [self.apply_factorization(node.state, r) for r in best.values()]
        out = []
        variants = self.variants(node.state)
        for state, focus in variants:
            out.extend(self._chains(state, focus))
        if not out:
            for state, focus in variants:
                out.extend(self._sums(state, focus))
        if not out:
            return self.successors_exhaustive(node)
        return _dedupe(out)

    # chain DP ----------------------------------------------------------

    def _binary(self, left: Expr, right: Expr, cache: dict):
        """Cheapest admissible kernel computing exactly left*right."""
        ck = (left.ident, right.ident)
        if ck in cache:
            return cache[ck]
        best = None
        try:
            prod = normal_form(Times(1, (), (left, right)))
        except (DimensionError, ZeroExpression):
            cache[ck] = None
            return None
        if not isinstance(prod, Times) or prod.coeff != 1 or prod.scalars:
            cache[ck] = None
            return None
        for k, sub in self.db.matches(prod):
            if sub.position.path or sub.computed.ident != prod.ident:
                continue
            c = kernel_cost(k, sub, self.db)
            if best is None or c < best[0]:
                best = (c, k, sub)
        cache[ck] = best
        return best

    def _chain_plan(self, atoms: tuple[Expr, ...], blocked):
        n = len(atoms)
        cache: dict = {}
        temps: dict[tuple[int, int], Expr] = {}

        def temp(i, j):
            if i == j:
                return atoms[i]
            if (i, j) not in temps:
                e = normal_form(mul(*atoms[i:j + 1]))
                props = set(infer_properties(e)) - {Property.POSITIVE_SCALAR}
                if e.rows != e.cols:
                    props -= _SQUARE_ONLY
                temps[(i, j)] = Symbol(Operand(f"_chain{i}_{j}", e.rows, e.cols,
                                               frozenset(props)))
            return temps[(i, j)]

        cost = {(i, i): (0, None) for i in range(n)}
        for length in range(2, n + 1):
            for i in range(n - length + 1):
                j = i + length - 1
                best = (math.inf, None)
                for s in range(i, j):
                    lc, rc = cost[(i, s)][0], cost[(s + 1, j)][0]
                    if lc == math.inf or rc == math.inf:
                        continue
                    b = self._binary(temp(i, s), temp(s + 1, j), cache)
                    if b is None:
                        continue
                    total = lc + rc + b[0]
                    if total < best[0]:
                        best = (total, s)
                cost[(i, j)] = best
        return cost

    def _chains(self, state, focus):
        out = []
        blocked = pending(state)
        for i, a in enumerate(state):
            if isinstance(a.rhs, Symbol) or (focus is not None and i not in focus):
                continue
            for path, slot in slots(a.rhs):
                for ti, t in enumerate(summands(slot)):
                    _, _, f = as_term(t)
                    for lo, hi in _plain_runs(f):
                        if any(o.name in blocked for x in f[lo:hi] for o in operands(x)):
                            continue
                        r = self._apply_chain(state, i, path, ti, lo, hi, f[lo:hi])
                        if r:
                            out.append(r)
        return out

    def _apply_chain(self, state, i, path, ti, lo, hi, atoms):
        plan = self._chain_plan(atoms, None)
        if plan[(0, len(atoms) - 1)][0] == math.inf:
            return None
        calls = []
        cache: dict = {}

        def build(a, b):
            if a == b:
                return atoms[a]
            s = plan[(a, b)][1]
            left, right = build(a, s), build(s + 1, b)
            best = self._binary(left, right, cache)
            if best is None:
                raise _Infeasible
            _, k, sub = best
            t = self.table.register(sub.computed)
            calls.append(make_call(k, sub, t.key, self.db))
            return t

        try:
            result = build(0, len(atoms) - 1)
        except _Infeasible:
            return None
        a = state[i]
        pos = Position(path, (ti,), (lo, hi))
        rhs = normal_form(replace_at(a.rhs, pos, result))
        new = list(state)
        new[i] = Assignment(a.lhs, rhs, a.aux)
        new = _propagate_state(new, normal_form(mul(*atoms)), result)
        return tuple(calls), settle(new, {c.outputs[0] for c in calls})

    # greedy sums -------------------------------------------------------

    def _sums(self, state, focus):
        out = []
        blocked = pending(state)
        for i, a in enumerate(state):
            if isinstance(a.rhs, Symbol) or (focus is not None and i not in focus):
                continue
            for path, slot in slots(a.rhs):
                terms = summands(slot)
                if len(terms) < 2 or any(len(as_term(t)[2]) != 1 for t in terms):
                    continue
                r = self._apply_sum(state, i, path, slot, blocked)
                if r:
                    out.append(r)
        return out

    def _apply_sum(self, state, i, path, slot, blocked):
        calls = []
        cur = slot
        while len(summands(cur)) > 1:
            best = None
            for k, sub in self.db.matches(cur):
                if sub.position.path or len(sub.pattern.terms) < 2:
                    continue
                if any(o.key in blocked for o in sub.operands):
                    continue
                c = kernel_cost(k, sub, self.db)
                if best is None or c < best[0]:
                    best = (c, k, sub)
            if best is None:
                return None
            _, k, sub = best
            t = self.table.register(sub.computed)
            calls.append(make_call(k, sub, t.key, self.db))
            cur = normal_form(replace_at(cur, sub.position, t))
        a = state[i]
        pos = Position(path, tuple(range(len(summands(slot)))), None)
        rhs = normal_form(replace_at(a.rhs, pos, cur))
        new = list(state)
        new[i] = Assignment(a.lhs, rhs, a.aux)
        new = [b if isinstance(b.rhs, Symbol) else Assignment(b.lhs, normal_form(b.rhs), b.aux)
               for b in new]
        return tuple(calls), settle(new, {c.outputs[0] for c in calls})

    # -------------------------------------------------- main loop

    def run(self):
        cfg = self.config
        gen = (self.successors_exhaustive if cfg.strategy == "exhaustive"
               else self.successors_constructive)
        active = [self.root]
        while active and self.iterations < cfg.max_iterations:
            self.iterations += 1
            nxt: list[Node] = []
            active.sort(key=lambda n: (n.dist, n.id))
            for node in active:
                if node.terminal:
                    continue
                for calls, state in gen(node):
                    dst, fresh = self.add_node(state, node.level + 1)
                    if dst is node:
                        continue
                    self.add_edge(node, dst, calls)
                    if fresh:
                        nxt.append(dst)
                if len(self.nodes) >= cfg.max_nodes:
                    self.limits_exceeded = True
                    return
            if cfg.threshold is not None and len(self.terminals) >= cfg.threshold:
                return
            active = nxt
        if active and any(not n.terminal for n in active):
            self.limits_exceeded = True

    # -------------------------------------------------- paths

    def best_programs(self, k: int | None = None) -> list[SymbolicProgram]:
        return best_programs(self, k or self.config.k)

    def to_dot(self) -> str:
        lines = ["digraph derivation {", "  node [shape=box];"]
        for n in self.nodes:
            label = n.remaining.replace('"', "'")
            style = ", peripheries=2" if n.terminal else ""
            lines.append(f'  n{n.id} [label="{label}"{style}];')
        for e in self.edges:
            label = e.label.replace('"', "'")
            lines.append(f'  n{e.src.id} -> n{e.dst.id} [label="{label}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


# Kernels that only make progress on a slot holding nothing else; elsewhere the
# scaling or transposition is absorbed by the kernel that consumes the term.
WHOLE_SLOT = frozenset({"scal", "transpose"})


def _slot_at(e: Expr, path) -> Expr:
    for ti, fi in path:
        _, _, f = as_term(summands(e)[ti])
        e = _nested(f[fi])
    return e


class _Infeasible(Exception):
    pass


def _plain_runs(f) -> list[tuple[int, int]]:
    """Maximal runs (length >= 2) of decorated symbols."""
    runs = []
    start = None
    for idx, x in enumerate(list(f) + [None]):
        ok = x is not None and _plain_atom(x)
        if ok and start is None:
            start = idx
        elif not ok and start is not None:
            if idx - start >= 2:
                runs.append((start, idx))
            start = None
    return runs


def _plain_atom(x: Expr) -> bool:
    if isinstance(x, Symbol):
        return True
    if isinstance(x, Transpose):
        x = x.child
    if isinstance(x, Inverse):
        x = x.child
    return isinstance(x, Symbol)


def _inverses_in_products(e: Expr) -> set[str]:
    """Operands whose inverse occurs next to another factor (a solve is possible)."""
    out = set()
    for x in walk(e):
        f = x.factors if isinstance(x, Times) else None
        if f and len(f) >= 2:
            for a in f:
                b = a.child if isinstance(a, Transpose) else a
                if isinstance(b, Inverse) and isinstance(b.child, Symbol):
                    out.add(b.child.ident)
    return out


def _dedupe(succ):
    seen = set()
    out = []
    for calls, state in succ:
        k = (state_key(state), tuple((c.kernel, c.args, c.outputs, c.flags) for c in calls))
        if k not in seen:
            seen.add(k)
            out.append((calls, state))
    return out


# ------------------------------------------------------------------ API


def _initial_state(p: Problem) -> tuple[Assignment, ...]:
    return settle([Assignment(a.lhs, normal_form(a.rhs)) for a in p.assignments])


def derive(p: Problem, cfg: SearchConfig | None = None, db: KernelDB | None = None,
           raise_on_failure: bool = True) -> DerivationGraph:
    """Build the derivation graph for ``p``."""
    cfg = cfg or SearchConfig()
    db = db or default_db()
    reserved = set(p.declarations) | {a.lhs.key for a in p.assignments}
    g = DerivationGraph(p, cfg, db, IntermediateTable(reserved), FactorTable())
    root, _ = g.add_node(_initial_state(p), 0)
    root.dist = 0
    g.run()
    if raise_on_failure and not g.terminals:
        deepest = max(g.nodes, key=lambda n: (n.level, -n.id))
        raise NoSolution(
            ("search limits reached" if g.limits_exceeded else "no applicable kernel")
            + f" without a terminal node; deepest remaining: {deepest.remaining}",
            g.limits_exceeded, [deepest.remaining])
    return g


def gen_successors_exhaustive(g: DerivationGraph, n: Node):
    return g.successors_exhaustive(n)


def gen_successors_constructive(g: DerivationGraph, n: Node):
    return g.successors_constructive(n)


def merge_nodes(g: DerivationGraph, new_nodes: list[Node]) -> DerivationGraph:
    """Unify nodes with equal keys (edges redirected to the first occurrence)."""
    for n in new_nodes:
        keep = g.by_key.get(n.key)
        if keep is None:
            g.by_key[n.key] = n
            continue
        if keep is n:
            continue
        for e in n.incoming:
            e.dst = keep
            keep.incoming.append(e)
        for e in n.outgoing:
            e.src = keep
            keep.outgoing.append(e)
        n.incoming, n.outgoing = [], []
        g.nodes.remove(n)
        g.merges += 1
    return g


def _topological(g: DerivationGraph) -> list[Node]:
    indeg = {n.id: 0 for n in g.nodes}
    for e in g.edges:
        indeg[e.dst.id] += 1
    order = []
    stack = [n for n in g.nodes if indeg[n.id] == 0]
    while stack:
        n = stack.pop()
        order.append(n)
        for e in n.outgoing:
            indeg[e.dst.id] -= 1
            if indeg[e.dst.id] == 0:
                stack.append(e.dst)
    if len(order) != len(g.nodes):
        raise RuntimeError("derivation graph has a cycle")
    return order


def _path_sig(edges) -> str:
    return "|".join(c.describe() for e in edges for c in e.calls)


def best_programs(g: DerivationGraph, k: int = 1) -> list[SymbolicProgram]:
    """The k cheapest root-to-terminal paths.

    Ties are broken by fewer kernel calls, then by the path's serialization.
    """
    if not g.terminals:
        raise NoSolution("no terminal node", g.limits_exceeded, [])
    best: dict[int, list[tuple]] = {g.root.id: [(0, 0, "", ())]}
    for n in _topological(g):
        here = best.get(n.id)
        if not here:
            continue
        for e in n.outgoing:
            lst = best.setdefault(e.dst.id, [])
            for cost, ncalls, sig, edges in here:
                path = edges + (e,)
                lst.append((cost + e.cost, ncalls + len(e.calls), _path_sig(path), path))
            lst.sort(key=lambda t: t[:3])
            # equal serializations are the same program
            uniq, seen = [], set()
            for item in lst:
                if item[2] not in seen:
                    seen.add(item[2])
                    uniq.append(item)
            del lst[:]
            lst.extend(uniq[:k])
    finals = []
    for n in g.terminals:
        finals.extend((c, nc, s, p, n) for c, nc, s, p in best.get(n.id, []))
    finals.sort(key=lambda t: t[:3])
    out, seen = [], set()
    for cost, _, sig, path, term in finals:
        if sig in seen:
            continue
        seen.add(sig)
        out.append(_program(g, path, term, cost))
        if len(out) == k:
            break
    return out


def _program(g: DerivationGraph, path, terminal: Node, cost) -> SymbolicProgram:
    p = g.problem
    calls = tuple(c for e in path for c in e.calls)
    ops: dict[str, Operand] = dict(p.declarations)
    ops.update({n: s.operand for n, s in g.table.symbols.items()})
    ops.update({o.name: o for o in g.factors.operands()})
    for a in p.assignments:
        ops[a.lhs.key] = a.lhs.operand
    outputs = tuple((a.lhs.key, a.rhs.key) for a in terminal.state if not a.aux)
    nodes = (g.root.id,) + tuple(e.dst.id for e in path)
    return SymbolicProgram(calls, cost, ops, tuple(p.declarations), outputs,
                           dict(g.table.definitions), nodes)
