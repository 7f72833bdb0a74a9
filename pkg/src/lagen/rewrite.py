"""Alternative representations of a normal-form expression.

Besides the expression itself, the derivation explores a product-of-sums
form, a form with adjacent inverses merged into one inverse, the catalogue
of special cost-reducing rules, and forms where repeated factor sequences
are outlined into auxiliary assignments.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

from .expr import (Expr, Identity, Inverse, Operand, Plus, Symbol, Transpose, add, as_term,
                   atom_transpose, mul, normal_form, summands, term_expr)
from .inference import infer_properties

Namer = Callable[[Expr], Symbol]


@dataclass(frozen=True)
class Variant:
    expr: Expr
    aux: tuple[tuple[Symbol, Expr], ...] = ()
    label: str = "original"

    def inlined(self) -> Expr:
        """The variant with auxiliary symbols replaced by their definitions."""
        from .expr import substitute

        e = self.expr
        for y, d in reversed(self.aux):
            e = substitute(e, {y.key: d})
        return e


def fresh_namer(prefix: str = "Y") -> Namer:
    """Namer for standalone use: one new operand per distinct definition."""
    table: dict[str, Symbol] = {}

    def name(e: Expr) -> Symbol:
        e = normal_form(e)
        if e.ident not in table:
            kind = "vector" if (e.rows == 1) != (e.cols == 1) else "matrix"
            table[e.ident] = Symbol(Operand(f"{prefix}{len(table) + 1}", e.rows, e.cols,
                                            infer_properties(e), kind, is_intermediate=True))
        return table[e.ident]

    return name


# ------------------------------------------------------------ product of sums


def _opaque(x: Expr) -> bool:
    return isinstance(x, Plus) or (isinstance(x, Inverse) and not isinstance(x.child, Symbol))


def _raw_sum(terms) -> Expr:
    return add(*(term_expr(t) for t in terms))


def _factor_out(terms: list) -> Expr:
    if len(terms) < 2:
        return _raw_sum(terms)
    cands = []
    for side in ("left", "right"):
        groups: dict[tuple, list[int]] = {}
        for idx, (_, _, f) in enumerate(terms):
            for n in range(1, len(f)):
                seq = f[:n] if side == "left" else f[-n:]
                groups.setdefault((n, tuple(x.ident for x in seq)), []).append(idx)
        for (n, ids), idxs in groups.items():
            if len(idxs) >= 2:
                cands.append((-n, 0 if side == "left" else 1, -len(idxs), ids, side, idxs))
    if not cands:
        return _raw_sum(terms)
    cands.sort(key=lambda c: c[:4])
    neg_n, _, _, _, side, idxs = cands[0]
    n = -neg_n
    group = [terms[i] for i in idxs]
    rest = [t for i, t in enumerate(terms) if i not in idxs]
    if side == "left":
        seq = group[0][2][:n]
        inner = _factor_out([(c, s, f[n:]) for c, s, f in group])
        factored = mul(*seq, inner)
    else:
        seq = group[0][2][-n:]
        inner = _factor_out([(c, s, f[:-n]) for c, s, f in group])
        factored = mul(inner, *seq)
    return add(factored, _factor_out(rest)) if rest else factored


def _map_opaque(f, fn):
    out = []
    for x in f:
        if isinstance(x, Inverse) and not isinstance(x.child, Symbol):
            out.append(Inverse(fn(x.child)))
        else:
            out.append(x)
    return tuple(out)


def product_of_sums(e: Expr) -> Expr:
    """Greedy factoring of common prefixes/suffixes: longest first, left before right."""
    terms = [as_term(t) for t in summands(e)]
    terms = [(c, s, _map_opaque(f, product_of_sums)) for c, s, f in terms]
    return _factor_out(terms)


# ------------------------------------------------------------ inverse push-up


def _inverse_atom_base(x: Expr) -> Expr | None:
    """For x = inv(M) or trans(inv(M)) return the matrix whose inverse x is."""
    if isinstance(x, Inverse):
        return x.child
    if isinstance(x, Transpose) and isinstance(x.child, Inverse):
        return Transpose(x.child.child)
    return None


def push_up_inverses(e: Expr) -> Expr:
    """Merge runs of adjacent inverses: inv(B) inv(A) -> inv(A B)."""
    new_terms = []
    for t in summands(e):
        c, s, f = as_term(t)
        f = _map_opaque(f, push_up_inverses)
        out: list[Expr] = []
        run: list[Expr] = []

        def flush():
            if len(run) >= 2 and not all(
                    isinstance(b, Symbol) and b.operand.is_factor
                    or isinstance(b, Transpose) and isinstance(b.child, Symbol)
                    and b.child.operand.is_factor for b in run):
                out.append(Inverse(mul(*reversed(run))))
            else:
                out.extend(Inverse(b) if not isinstance(b, Transpose) else
                           Transpose(Inverse(b.child)) for b in run)
            run.clear()

        for x in f:
            b = _inverse_atom_base(x)
            if b is not None and not x.scalar:
                run.append(b)
            else:
                flush()
                out.append(x)
        flush()
        new_terms.append(mul(c, *s, *out) if (c != 1 or s or len(out) != 1) else out[0])
    return add(*new_terms)


# ------------------------------------------------------------ common subexpressions


@dataclass(frozen=True)
class Site:
    path: tuple
    term: int
    start: int
    end: int
    image: str  # N, T, I or IT relative to the candidate sequence


@dataclass(frozen=True)
class CommonSubexpr:
    seq: tuple[Expr, ...]
    sites: tuple[Site, ...]
    weight: int

    @property
    def count(self) -> int:
        return len(self.sites)

    @property
    def expr(self) -> Expr:
        return normal_form(mul(*self.seq))


def _atom_inv(x: Expr) -> Expr | None:
    if x.rows != x.cols:
        return None
    if isinstance(x, Symbol):
        return Inverse(x)
    if isinstance(x, Transpose) and isinstance(x.child, Symbol):
        return Transpose(Inverse(x.child))
    if isinstance(x, Inverse) and isinstance(x.child, Symbol):
        return x.child
    if isinstance(x, Transpose) and isinstance(x.child, Inverse):
        return atom_transpose(x.child.child)
    return None


def _images(seq: tuple) -> dict[str, tuple]:
    out = {"N": seq, "T": tuple(atom_transpose(x) for x in reversed(seq))}
    inv = [_atom_inv(x) for x in reversed(seq)]
    if all(i is not None for i in inv):
        # normalize so orthogonal/symmetric simplifications apply
        inv = tuple(normal_form(i) for i in inv)
        out["I"] = inv
        out["IT"] = tuple(atom_transpose(x) for x in reversed(inv))
    return out


def _sig(seq) -> str:
    return "*".join(x.ident for x in seq)


def _chain_weight(seq) -> int:
    w = 0
    r = seq[0].rows
    k = seq[0].cols
    for x in seq[1:]:
        w += 2 * r * k * x.cols
        k = x.cols
    return w


def _product_slots(e: Expr, path=()):
    for ti, t in enumerate(summands(e)):
        c, s, f = as_term(t)
        yield path, ti, f
        for fi, x in enumerate(f):
            if isinstance(x, Inverse) and not isinstance(x.child, Symbol):
                yield from _product_slots(x.child, path + ((ti, fi),))
            elif isinstance(x, Plus):
                yield from _product_slots(x, path + ((ti, fi),))


def _plain(x: Expr) -> bool:
    return not _opaque(x) and not isinstance(x, Identity)


def detect_common_subexprs(e: Expr) -> list[CommonSubexpr]:
    """Repeated factor sequences (length >= 2), also through their transposed
    and inverted images, counted without positional overlap."""
    groups: dict[str, dict] = {}
    for path, ti, f in _product_slots(e):
        n = len(f)
        for i in range(n):
            for j in range(i + 2, n + 1):
                seg = f[i:j]
                if not all(_plain(x) for x in seg):
                    break
                ims = _images(seg)
                canon_key, canon_img = min((_sig(v), k) for k, v in ims.items())
                canon = ims[canon_img]
                # which image of the canonical sequence this segment is
                cims = _images(canon)
                rel = next(k for k, v in cims.items() if _sig(v) == _sig(seg))
                g = groups.setdefault(canon_key, {"seq": canon, "sites": []})
                g["sites"].append(Site(path, ti, i, j, rel))
    out = []
    for g in groups.values():
        seq = g["seq"]
        if all(_is_factor_atom(x) for x in seq):
            continue
        chosen: list[Site] = []
        by_term: dict[tuple, list[Site]] = {}
        for s in g["sites"]:
            by_term.setdefault((s.path, s.term), []).append(s)
        for sites in by_term.values():
            end = -1
            for s in sorted(sites, key=lambda s: (s.start, s.end)):
                if s.start >= end:
                    chosen.append(s)
                    end = s.end
        if len(chosen) >= 2:
            out.append(CommonSubexpr(seq, tuple(chosen), _chain_weight(seq)))
    # keep only maximal candidates
    keep = []
    for c in out:
        dominated = False
        for d in out:
            if len(d.seq) > len(c.seq) and d.count >= c.count and any(
                    _sig(c.seq) in _sig(v) for v in _images(d.seq).values()):
                dominated = True
                break
        if not dominated:
            keep.append(c)
    keep.sort(key=lambda c: (-c.count * c.weight, _sig(c.seq)))
    return keep


def _is_factor_atom(x: Expr) -> bool:
    while isinstance(x, (Transpose, Inverse)):
        x = x.child
    return isinstance(x, Symbol) and x.operand.is_factor


def _image_of(y: Symbol, img: str) -> Expr:
    if img == "N":
        return y
    if img == "T":
        return atom_transpose(y)
    if img == "I":
        return Inverse(y)
    return Transpose(Inverse(y))


def _replace_sites(e: Expr, sites: list[Site], y: Symbol, path=()) -> Expr:
    here = [s for s in sites if s.path == path]
    new_terms = []
    for ti, t in enumerate(summands(e)):
        c, s, f = as_term(t)
        f = list(f)
        for fi, x in enumerate(f):
            sub_path = path + ((ti, fi),)
            if any(st.path[:len(sub_path)] == sub_path for st in sites):
                if isinstance(x, Inverse):
                    f[fi] = Inverse(_replace_sites(x.child, sites, y, sub_path))
                elif isinstance(x, Plus):
                    f[fi] = _replace_sites(x, sites, y, sub_path)
        for st in sorted((st for st in here if st.term == ti), key=lambda st: -st.start):
            f[st.start:st.end] = [_image_of(y, st.image)]
        new_terms.append(mul(c, *s, *f) if (c != 1 or s or len(f) != 1) else f[0])
    return add(*new_terms)


def outline(e: Expr, cand: CommonSubexpr, namer: Namer) -> Variant:
    definition = cand.expr
    y = namer(definition)
    return Variant(_replace_sites(e, list(cand.sites), y), ((y, definition),), "cse")


# ------------------------------------------------------------ special rules


def _rule_sym_update(e: Expr, namer: Namer) -> list[Variant]:
    """A^T A + A^T B + B^T A  ->  A^T Y + Y^T A  with  Y := B + A/2."""
    terms = [as_term(t) for t in summands(e)]
    if len(terms) < 3:
        return []
    out = []
    pairs = [(i, t) for i, t in enumerate(terms) if len(t[2]) == 2]
    for i, (c, s, f) in pairs:
        a = f[1]
        if not isinstance(a, Symbol) or f[0] != atom_transpose(a):
            continue
        for (j, (c2, s2, f2)), (k, (c3, s3, f3)) in itertools.permutations(
                [p for p in pairs if p[0] != i], 2):
            if (c2, s2) != (c, s) or (c3, s3) != (c, s):
                continue
            b = f2[1]
            if not isinstance(b, Symbol) or b == a or f2[0] != f[0]:
                continue
            if f3 != (atom_transpose(b), a):
                continue
            definition = normal_form(add(b, mul(Fraction(1, 2), a)))
            y = namer(definition)
            rest = [term_expr(t) for n, t in enumerate(terms) if n not in (i, j, k)]
            core = mul(c, *s, add(mul(f[0], y), mul(atom_transpose(y), a)))
            out.append(Variant(add(*rest, core), ((y, definition),), "special"))
    return out


SPECIAL_RULES: list[Callable[[Expr, Namer], list[Variant]]] = [_rule_sym_update]


def apply_special_rules(e: Expr, namer: Namer | None = None) -> list[tuple[Expr, tuple]]:
    namer = namer or fresh_namer()
    return [(v.expr, v.aux) for rule in SPECIAL_RULES for v in rule(e, namer)]


# ------------------------------------------------------------ all representations


def representations(e: Expr, namer: Namer | None = None, max_cse: int = 2) -> list[Variant]:
    """``e`` first, then the alternative forms; deduplicated."""
    namer = namer or fresh_namer()
    out = [Variant(e)]
    pos = product_of_sums(e)
    out.append(Variant(pos, (), "product-of-sums"))
    out.append(Variant(push_up_inverses(e), (), "inverse-push-up"))
    for rule in SPECIAL_RULES:
        out.extend(rule(e, namer))
    for cand in detect_common_subexprs(e)[:max_cse]:
        out.append(outline(e, cand, namer))
    seen = set()
    uniq = []
    for v in out:
        k = (v.expr.ident, tuple(y.ident for y, _ in v.aux))
        if k not in seen:
            seen.add(k)
            uniq.append(v)
    return uniq
