"""Associative(-commutative) matching of kernel patterns against expressions.

Patterns are sums of at most three product terms whose factors are decorated
variables (``X``, ``trans(X)``, ``inv(X)``, ``trans(inv(X))``) or the
identity ``I``. Sums are matched commutatively (any choice of summands),
products associatively only (contiguous factor segments). Scalar
coefficients live in a separate slot: the first pattern term binds ``alpha``,
the second ``beta``.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Iterator

from .expr import (Expr, Identity, Inverse, Plus, Symbol, Times, Transpose, add, as_term, mul,
                   summands, term_expr)
from .properties import Property

P = Property

# decoration codes
PLAIN, TRANS, INV, INVTRANS = "N", "T", "I", "IT"


@dataclass(frozen=True)
class PAtom:
    deco: str
    var: str  # "I" denotes the identity matrix

    def __str__(self):
        name = self.var
        return {PLAIN: name, TRANS: f"trans({name})", INV: f"inv({name})",
                INVTRANS: f"trans(inv({name}))"}[self.deco]


@dataclass(frozen=True)
class Pattern:
    terms: tuple[tuple[PAtom, ...], ...]

    def __str__(self):
        return " + ".join("*".join(str(a) for a in t) for t in self.terms)

    @property
    def variables(self) -> tuple[str, ...]:
        seen: list[str] = []
        for t in self.terms:
            for a in t:
                if a.var != "I" and a.var not in seen:
                    seen.append(a.var)
        return tuple(seen)


_ATOM_RE = re.compile(r"^(trans\(inv\((\w+)\)\)|trans\((\w+)\)|inv\((\w+)\)|(\w+))$")


def parse_pattern(text: str) -> Pattern:
    terms = []
    for t in text.split("+"):
        atoms = []
        for a in t.split("*"):
            m = _ATOM_RE.match(a.strip())
            if not m:
                raise ValueError(f"bad pattern atom {a!r} in {text!r}")
            if m.group(2):
                atoms.append(PAtom(INVTRANS, m.group(2)))
            elif m.group(3):
                atoms.append(PAtom(TRANS, m.group(3)))
            elif m.group(4):
                atoms.append(PAtom(INV, m.group(4)))
            else:
                atoms.append(PAtom(PLAIN, m.group(5)))
        terms.append(tuple(atoms))
    if len(terms) > 3:
        raise ValueError("patterns have at most three summands")
    return Pattern(tuple(terms))


def decoration(atom: Expr) -> tuple[str, Symbol] | None:
    """Split a normal-form atom into (decoration, underlying symbol)."""
    if isinstance(atom, Symbol):
        return PLAIN, atom
    if isinstance(atom, Transpose):
        c = atom.child
        if isinstance(c, Symbol):
            return TRANS, c
        if isinstance(c, Inverse) and isinstance(c.child, Symbol):
            return INVTRANS, c.child
    if isinstance(atom, Inverse) and isinstance(atom.child, Symbol):
        return INV, atom.child
    return None


# ------------------------------------------------------------ constraints

def _vec(s: Symbol) -> bool:
    return s.rows == 1 or s.cols == 1


VAR_CONSTRAINTS: dict[str, Callable[[Symbol], bool]] = {
    "matrix": lambda s: not _vec(s),
    "vector": _vec,
    "square": lambda s: s.rows == s.cols,
    "triangular": lambda s: (P.LOWER_TRIANGULAR in s.properties
                             or P.UPPER_TRIANGULAR in s.properties),
    "not_diagonal": lambda s: P.DIAGONAL not in s.properties,
}
for _p in Property:
    VAR_CONSTRAINTS.setdefault(_p.value, lambda s, _p=_p: _p in s.properties)


def check_var(constraint: str, s: Symbol) -> bool:
    try:
        return VAR_CONSTRAINTS[constraint](s)
    except KeyError:
        raise ValueError(f"unknown constraint {constraint!r}") from None


# ------------------------------------------------------------ matches

Scalar = tuple  # (Fraction, tuple[Expr, ...])


def scalar_expr(sc: Scalar | None) -> Expr | None:
    if sc is None:
        return None
    return term_expr((sc[0], sc[1], ()))


@dataclass(frozen=True)
class Position:
    """Where a match sits inside one right-hand side.

    ``path`` descends into opaque inverses: each step is (summand, factor).
    ``terms`` are the matched summand indices of the slot expression and
    ``segment`` the factor range when only part of one product is matched.
    """

    path: tuple[tuple[int, int], ...] = ()
    terms: tuple[int, ...] = ()
    segment: tuple[int, int] | None = None


@dataclass(frozen=True)
class Substitution:
    atoms: tuple[tuple[str, Expr], ...]  # variable -> atom as it occurs
    alpha: Scalar | None = None
    beta: Scalar | None = None
    position: Position = field(default_factory=Position)
    computed: Expr | None = None  # the subexpression the kernel computes
    pattern: Pattern | None = None

    def atom(self, var: str) -> Expr:
        return dict(self.atoms)[var]

    def operand(self, var: str) -> Symbol:
        return decoration(self.atom(var))[1]

    def deco(self, var: str) -> str:
        return decoration(self.atom(var))[0]

    @property
    def operands(self) -> list[Symbol]:
        return [decoration(a)[1] for _, a in self.atoms]


def _trivial(c: Fraction, s: tuple) -> Scalar | None:
    return None if (c == 1 and not s) else (c, s)


def _match_factors(pfactors, factors, binding: dict) -> dict | None:
    b = dict(binding)
    for pa, x in zip(pfactors, factors):
        if pa.var == "I":
            if not isinstance(x, Identity) or pa.deco != PLAIN:
                return None
            continue
        d = decoration(x)
        if d is None or d[0] != pa.deco or d[1].scalar:
            return None
        if pa.var in b:
            if b[pa.var] != d[1]:
                return None
        else:
            b[pa.var] = d[1]
    return b


def _satisfies(binding: dict, constraints: dict[str, tuple[str, ...]]) -> bool:
    for var, cons in constraints.items():
        s = binding.get(var)
        if s is None:
            continue
        for c in cons:
            if not check_var(c, s):
                return False
    return True


def _atoms_of(pattern: Pattern, matched_terms) -> tuple[tuple[str, Expr], ...]:
    out: dict[str, Expr] = {}
    for pt, factors in zip(pattern.terms, matched_terms):
        for pa, x in zip(pt, factors):
            if pa.var != "I" and pa.var not in out:
                out[pa.var] = x
    return tuple(out.items())


def match_slot(pattern: Pattern, slot: Expr, constraints=None,
               path: tuple = ()) -> list[Substitution]:
    """Matches of ``pattern`` on summands of ``slot`` (not descending into inverses)."""
    constraints = constraints or {}
    terms = [as_term(t) for t in summands(slot)]
    out: list[Substitution] = []
    k = len(pattern.terms)
    if k == 1:
        pf = pattern.terms[0]
        for ti, (c, s, f) in enumerate(terms):
            if len(f) == len(pf):
                b = _match_factors(pf, f, {})
                if b is not None and _satisfies(b, constraints):
                    out.append(Substitution(
                        _atoms_of(pattern, [f]), _trivial(c, s), None,
                        Position(path, (ti,), None), term_expr((c, s, f)), pattern))
            if len(pf) >= 2 and len(f) > len(pf):
                for i in range(len(f) - len(pf) + 1):
                    seg = f[i:i + len(pf)]
                    b = _match_factors(pf, seg, {})
                    if b is not None and _satisfies(b, constraints):
                        out.append(Substitution(
                            _atoms_of(pattern, [seg]), None, None,
                            Position(path, (ti,), (i, i + len(pf))),
                            Times(1, (), seg), pattern))
        return out
    seen = set()
    for combo in itertools.permutations(range(len(terms)), k):
        b: dict | None = {}
        for pt, ti in zip(pattern.terms, combo):
            f = terms[ti][2]
            if len(f) != len(pt):
                b = None
                break
            b = _match_factors(pt, f, b)
            if b is None:
                break
        if b is None or not _satisfies(b, constraints):
            continue
        key = (combo, tuple(sorted((v, s.key) for v, s in b.items())))
        if key in seen:
            continue
        seen.add(key)
        chosen = [terms[ti] for ti in combo]
        coeffs = [_trivial(c, s) for c, s, _ in chosen]
        computed = add(*(term_expr(t) for t in chosen))
        out.append(Substitution(
            _atoms_of(pattern, [t[2] for t in chosen]), coeffs[0], coeffs[1],
            Position(path, combo, None),
            computed, pattern))
    return out


def _nested(x: Expr) -> Expr | None:
    if isinstance(x, Inverse) and not isinstance(x.child, Symbol):
        return x.child
    if isinstance(x, Plus):
        return x
    return None


def slots(e: Expr, path: tuple = ()) -> Iterator[tuple[tuple, Expr]]:
    """The expression itself, the contents of every opaque inverse and every
    parenthesized sum used as a factor (product-of-sums representations)."""
    yield path, e
    for ti, t in enumerate(summands(e)):
        _, _, f = as_term(t)
        for fi, x in enumerate(f):
            inner = _nested(x)
            if inner is not None:
                yield from slots(inner, path + ((ti, fi),))


def match_pattern(p: Pattern, e: Expr, constraints=None) -> list[Substitution]:
    """All matches of ``p`` at every position of the normal-form expression ``e``."""
    out = []
    for path, slot in slots(e):
        out.extend(match_slot(p, slot, constraints, path))
    return out


# ------------------------------------------------------------ replacement


def replace_at(e: Expr, pos: Position, new: Expr) -> Expr:
    """Rebuild ``e`` with the matched part at ``pos`` replaced by ``new`` (unnormalized)."""
    ts = list(summands(e))
    if pos.path:
        (ti, fi), rest = pos.path[0], pos.path[1:]
        c, s, f = as_term(ts[ti])
        inner = replace_at(_nested(f[fi]), Position(rest, pos.terms, pos.segment), new)
        if isinstance(f[fi], Inverse):
            inner = Inverse(inner)
        f = f[:fi] + (inner,) + f[fi + 1:]
        ts[ti] = mul(c, *s, *f)
        return add(*ts)
    if pos.segment is not None:
        (ti,) = pos.terms
        c, s, f = as_term(ts[ti])
        i, j = pos.segment
        ts[ti] = mul(c, *s, *f[:i], new, *f[j:])
        return add(*ts)
    kept = [t for i, t in enumerate(ts) if i not in pos.terms]
    return add(*kept, new)


# ------------------------------------------------------------ many-to-one


def _signature(pattern_term) -> tuple:
    return tuple(("ID" if a.var == "I" else a.deco) for a in pattern_term)


def _term_signature(factors) -> tuple | None:
    sig = []
    for x in factors:
        if isinstance(x, Identity):
            sig.append("ID")
            continue
        d = decoration(x)
        if d is None:
            return None
        sig.append(d[0])
    return tuple(sig)


class MatcherIndex:
    """Discrimination index over compiled patterns.

    Product patterns are keyed by the decoration signature of their factors,
    so a factor segment only meets patterns that can possibly match it. Sum
    patterns are keyed by the signature of their first term.
    """

    def __init__(self, entries: Iterable[tuple[str, Pattern, dict]]):
        self.entries = list(entries)
        self._products: dict[tuple, list] = {}
        self._sums: dict[tuple, list] = {}
        for kid, pat, cons in self.entries:
            table = self._products if len(pat.terms) == 1 else self._sums
            table.setdefault(_signature(pat.terms[0]), []).append((kid, pat, cons))

    def match_slot(self, slot: Expr, path: tuple = ()) -> list[tuple[str, Substitution]]:
        out = []
        terms = [as_term(t) for t in summands(slot)]
        wanted_products: dict[tuple, None] = {}
        for _, _, f in terms:
            n = len(f)
            for i in range(n):
                for j in range(i + 1, n + 1):
                    if j - i == 1 and n != 1:
                        continue
                    sig = _term_signature(f[i:j])
                    if sig is not None:
                        wanted_products[sig] = None
        for sig in wanted_products:
            for kid, pat, cons in self._products.get(sig, ()):
                for sub in match_slot(pat, slot, cons, path):
                    if _term_signature(_segment(terms, sub.position)) == sig:
                        out.append((kid, sub))
        if len(terms) >= 2:
            sigs = {_term_signature(f) for _, _, f in terms}
            for sig in sigs:
                for kid, pat, cons in self._sums.get(sig, ()):
                    out.extend((kid, s) for s in match_slot(pat, slot, cons, path))
        return out

    def match_all(self, e: Expr) -> list[tuple[str, Substitution]]:
        out = []
        for path, slot in slots(e):
            out.extend(self.match_slot(slot, path))
        return _dedupe(out)

    def match_naive(self, e: Expr) -> list[tuple[str, Substitution]]:
        out = []
        for kid, pat, cons in self.entries:
            out.extend((kid, s) for s in match_pattern(pat, e, cons))
        return _dedupe(out)


def _segment(terms, pos: Position):
    (ti, *_) = pos.terms
    f = terms[ti][2]
    if pos.segment is None:
        return f
    i, j = pos.segment
    return f[i:j]


def match_key(kid: str, s: Substitution) -> tuple:
    return (kid, str(s.pattern), s.position, s.atoms)


def _dedupe(ms):
    seen = set()
    out = []
    for kid, s in ms:
        k = match_key(kid, s)
        if k not in seen:
            seen.add(k)
            out.append((kid, s))
    return out
