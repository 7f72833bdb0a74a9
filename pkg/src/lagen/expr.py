"""Symbolic expression IR and the sum-of-products normal form.

Expressions are immutable and hash by their canonical serialization, a fully
parenthesized prefix form such as ``plus(times(A,B),times(-1,C))``. Summands
are ordered by that string, which makes the normal form a canonical key for
detecting equivalent expressions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Iterator, Mapping

from .properties import Property, closure

P = Property


class DimensionError(ValueError):
    """Raised for nonconformable operands; carries the offending subterm."""

    def __init__(self, message: str, term: "Expr | None" = None):
        super().__init__(message if term is None else f"{message}: {term.key}")
        self.term = term


class ZeroExpression(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Operand:
    name: str
    rows: int
    cols: int
    properties: frozenset = field(default_factory=frozenset)
    kind: str = "matrix"
    is_factor: bool = False
    is_intermediate: bool = False

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"{self.name}: dimensions must be positive")
        if self.kind == "scalar" and (self.rows, self.cols) != (1, 1):
            raise ValueError(f"{self.name}: scalars are 1x1")
        if self.kind == "vector" and 1 not in (self.rows, self.cols):
            raise ValueError(f"{self.name}: a vector needs one unit dimension")
        props = closure(self.properties)
        square_only = {P.SPD, P.SPSD, P.SYMMETRIC, P.ORTHOGONAL, P.IDENTITY,
                       P.LOWER_TRIANGULAR, P.UPPER_TRIANGULAR, P.DIAGONAL, P.PERMUTATION}
        if self.rows != self.cols and props & square_only:
            bad = sorted(p.value for p in props & square_only)
            raise ValueError(f"{self.name}: {bad} requires a square operand")
        object.__setattr__(self, "properties", props)

    def __eq__(self, other):
        return isinstance(other, Operand) and self.name == other.name

    def __hash__(self):
        return hash(self.name)

    def __repr__(self):
        return f"Operand({self.name}, {self.rows}x{self.cols})"

    @property
    def is_vector(self) -> bool:
        return self.kind != "scalar" and (self.rows == 1 or self.cols == 1)

    def has(self, prop: Property) -> bool:
        return prop in self.properties


class Expr:
    """Base node. ``key`` is the printed canonical form; ``ident`` additionally
    encodes operand shapes and properties so that equally named operands of
    different problems never compare equal (the memo tables are global)."""

    __slots__ = ("key", "ident", "rows", "cols", "scalar", "_hash")

    def _init(self, key: str, rows: int, cols: int, scalar: bool = False, ident: str = ""):
        self.key = key
        self.ident = ident or key
        self.rows = rows
        self.cols = cols
        self.scalar = scalar
        self._hash = hash(self.ident)

    def __eq__(self, other):
        return isinstance(other, Expr) and self.ident == other.ident

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return self.key < other.key

    def __repr__(self):
        return self.key

    def __str__(self):
        return to_source(self)

    @property
    def children(self) -> tuple["Expr", ...]:
        return ()

    @property
    def is_square(self) -> bool:
        return self.rows == self.cols

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)


class Symbol(Expr):
    __slots__ = ("operand",)

    def __init__(self, operand: Operand):
        self.operand = operand
        o = operand
        sig = ",".join(sorted(p.value for p in o.properties))
        ident = f"{o.name}<{o.rows}x{o.cols};{o.kind};{sig};{int(o.is_factor)}>"
        self._init(o.name, o.rows, o.cols, o.kind == "scalar", ident)

    @property
    def properties(self) -> frozenset:
        return self.operand.properties


class Identity(Expr):
    __slots__ = ("n",)

    def __init__(self, n: int):
        self.n = n
        self._init(f"I({n})", n, n)


class Transpose(Expr):
    __slots__ = ("child",)

    def __init__(self, child: Expr):
        self.child = child
        self._init(f"trans({child.key})", child.cols, child.rows, child.scalar,
                   f"trans({child.ident})")

    @property
    def children(self):
        return (self.child,)


class Inverse(Expr):
    __slots__ = ("child",)

    def __init__(self, child: Expr):
        if child.rows != child.cols:
            raise DimensionError("inverse of a non-square operand", child)
        self.child = child
        self._init(f"inv({child.key})", child.rows, child.cols, child.scalar,
                   f"inv({child.ident})")

    @property
    def children(self):
        return (self.child,)


class Plus(Expr):
    __slots__ = ("terms",)

    def __init__(self, terms: Iterable[Expr]):
        terms = tuple(terms)
        if len(terms) < 2:
            raise ValueError("a sum needs at least two terms")
        r, c = terms[0].rows, terms[0].cols
        for t in terms[1:]:
            if (t.rows, t.cols) != (r, c):
                raise DimensionError(f"summands of different shape {r}x{c} and {t.rows}x{t.cols}", t)
        self.terms = terms
        self._init("plus(" + ",".join(t.key for t in terms) + ")", r, c,
                   all(t.scalar for t in terms),
                   "plus(" + ",".join(t.ident for t in terms) + ")")

    @property
    def children(self):
        return self.terms


class Times(Expr):
    """Product ``coeff * scalars * factors``; the factors are matrix valued."""

    __slots__ = ("coeff", "scalars", "factors")

    def __init__(self, coeff=1, scalars: Iterable[Expr] = (), factors: Iterable[Expr] = ()):
        coeff = Fraction(coeff)
        scalars = tuple(scalars)
        factors = tuple(factors)
        for s in scalars:
            if not s.scalar:
                raise DimensionError("non-scalar in scalar slot", s)
        for a, b in zip(factors, factors[1:]):
            if a.cols != b.rows:
                raise DimensionError(
                    f"nonconformable product {a.rows}x{a.cols} * {b.rows}x{b.cols}", b)
        self.coeff = coeff
        self.scalars = scalars
        self.factors = factors
        head = [str(coeff)] if coeff != 1 or not (scalars or factors) else []
        kids = scalars + factors
        if factors:
            rows, cols, scalar = factors[0].rows, factors[-1].cols, False
        else:
            rows, cols, scalar = 1, 1, True
        self._init("times(" + ",".join(head + [x.key for x in kids]) + ")", rows, cols, scalar,
                   "times(" + ",".join(head + [x.ident for x in kids]) + ")")

    @property
    def children(self):
        return self.scalars + self.factors


# ---------------------------------------------------------------- builders


def sym(name: str, rows: int, cols: int | None = None, *props, kind: str | None = None,
        is_factor: bool = False, is_intermediate: bool = False) -> Symbol:
    if cols is None:
        cols = rows
    if kind is None:
        kind = "vector" if (rows == 1) != (cols == 1) else "matrix"
    props = frozenset(p if isinstance(p, Property) else Property(p) for p in props)
    return Symbol(Operand(name, rows, cols, props, kind, is_factor, is_intermediate))


def scalar(name: str, *props) -> Symbol:
    props = frozenset(p if isinstance(p, Property) else Property(p) for p in props)
    return Symbol(Operand(name, 1, 1, props, "scalar"))


def literal(value) -> Times:
    return Times(Fraction(value))


def mul(*xs) -> Expr:
    """Flattening product builder; scalar operands go to the coefficient slot."""
    coeff = Fraction(1)
    scalars: list[Expr] = []
    factors: list[Expr] = []
    for x in xs:
        if isinstance(x, (int, Fraction)):
            coeff *= Fraction(x)
        elif isinstance(x, Times):
            coeff *= x.coeff
            scalars.extend(x.scalars)
            factors.extend(x.factors)
        elif x.scalar:
            scalars.append(x)
        else:
            factors.append(x)
    if coeff == 1 and not scalars and len(factors) == 1:
        return factors[0]
    return Times(coeff, scalars, factors)


def add(*xs: Expr) -> Expr:
    terms: list[Expr] = []
    for x in xs:
        terms.extend(x.terms if isinstance(x, Plus) else (x,))
    return terms[0] if len(terms) == 1 else Plus(terms)


def neg(x: Expr) -> Expr:
    return mul(-1, x)


def sub(a: Expr, b: Expr) -> Expr:
    return add(a, neg(b))


def T(x: Expr) -> Expr:
    return Transpose(x)


def inv(x: Expr) -> Expr:
    return Inverse(x)


# ----------------------------------------------------------- normal form
#
# A term is (coeff, scalars, factors) with scalars sorted and factors being
# atoms: Symbol, Identity, trans(S), inv(S), trans(inv(S)) or an opaque
# inverse inv(E) where E is a sum or a product of non-square factors.

Term = tuple  # (Fraction, tuple[Expr, ...], tuple[Expr, ...])


def _is_symmetric_atom(x: Expr) -> bool:
    return isinstance(x, Symbol) and (x.scalar or P.SYMMETRIC in x.operand.properties)


def atom_transpose(x: Expr) -> Expr:
    if isinstance(x, Symbol):
        return x if _is_symmetric_atom(x) else Transpose(x)
    if isinstance(x, Identity):
        return x
    if isinstance(x, Transpose):
        return x.child
    if isinstance(x, Inverse):
        if isinstance(x.child, Symbol):
            return x if _is_symmetric_atom(x.child) else Transpose(x)
        return Inverse(normal_form(Transpose(x.child)))
    raise TypeError(f"not an atom: {x.key}")


def _atom_inverse(x: Expr) -> list[Term]:
    one = Fraction(1)
    if isinstance(x, Symbol):
        if x.scalar:
            return [(one, (Inverse(x),), ())]
        props = x.operand.properties
        if P.IDENTITY in props:
            return [(one, (), (x,))]
        if P.ORTHOGONAL in props:
            return [(one, (), (atom_transpose(x),))]
        return [(one, (), (Inverse(x),))]
    if isinstance(x, Identity):
        return [(one, (), (x,))]
    if isinstance(x, Transpose):
        s = x.child
        if isinstance(s, Inverse):  # trans(inv(S))^-1 = trans(S)
            return [(one, (), (atom_transpose(s.child),))]
        if P.ORTHOGONAL in s.operand.properties:
            return [(one, (), (s,))]
        return [(one, (), (Transpose(Inverse(s)),))]
    if isinstance(x, Inverse):
        if isinstance(x.child, Symbol):
            c = x.child
            return [(one, (c,), ())] if c.scalar else [(one, (), (c,))]
        return _expand(x.child)
    raise TypeError(f"not an atom: {x.key}")


def _inverse_partner(x: Expr) -> Expr | None:
    """The atom y with x * y = I, if x is a square matrix atom."""
    if x.rows != x.cols or x.scalar or isinstance(x, Identity):
        return None
    if isinstance(x, Symbol):
        if P.ORTHOGONAL in x.operand.properties:
            return atom_transpose(x)
        return Inverse(x)
    if isinstance(x, Inverse) and isinstance(x.child, Symbol):
        return x.child
    if isinstance(x, Transpose):
        c = x.child
        if isinstance(c, Inverse):
            return Transpose(c.child)
        if P.ORTHOGONAL in c.operand.properties:
            return c
        return Transpose(Inverse(c))
    return None


def _cancel(factors) -> tuple:
    out: list[Expr] = []
    for x in factors:
        if out and _inverse_partner(out[-1]) == x:
            n = x.rows
            out.pop()
            if not out:
                out.append(Identity(n))
            continue
        out.append(x)
    return tuple(out)


def _finish(coeff: Fraction, scalars, factors) -> Term:
    if len(factors) > 1:
        factors = _cancel(factors)
    if len(factors) > 1 and any(isinstance(f, Identity) for f in factors):
        kept = tuple(f for f in factors if not isinstance(f, Identity))
        factors = kept if kept else factors[:1]
    if scalars:
        # cancel s * inv(s)
        pool = list(scalars)
        changed = True
        while changed:
            changed = False
            for i, s in enumerate(pool):
                partner = s.child if isinstance(s, Inverse) else Inverse(s)
                if partner in pool:
                    j = pool.index(partner)
                    for k in sorted((i, j), reverse=True):
                        del pool[k]
                    changed = True
                    break
        scalars = tuple(sorted(pool, key=lambda e: e.key))
    return (coeff, scalars, tuple(factors))


def _product(a: list[Term], b: list[Term]) -> list[Term]:
    return [_finish(ca * cb, sa + sb, fa + fb) for (ca, sa, fa) in a for (cb, sb, fb) in b]


def _transpose_term(t: Term) -> Term:
    c, s, f = t
    return (c, s, tuple(atom_transpose(x) for x in reversed(f)))


def _inverse_term(t: Term) -> list[Term]:
    c, s, f = t
    if c == 0:
        raise ZeroExpression("inverse of zero")
    out: list[Term] = [(1 / c, (), ())]
    for x in s:
        if isinstance(x, Inverse):
            out = _product(out, _expand(x.child))
        else:
            out = _product(out, [(Fraction(1), (Inverse(x),), ())])
    if not f:
        return out
    if all(x.rows == x.cols for x in f):
        for x in reversed(f):
            out = _product(out, _atom_inverse(x))
        return out
    opaque = Inverse(Times(1, (), f) if len(f) > 1 else f[0])
    return _product(out, [(Fraction(1), (), (opaque,))])


@lru_cache(maxsize=200_000)
def _expand(e: Expr) -> list[Term]:
    one = Fraction(1)
    if isinstance(e, Symbol):
        return [(one, (e,), ())] if e.scalar else [(one, (), (e,))]
    if isinstance(e, Identity):
        return [(one, (), (e,))]
    if isinstance(e, Times):
        out: list[Term] = [(e.coeff, (), ())]
        for x in e.scalars + e.factors:
            out = _product(out, _expand(x))
        return out
    if isinstance(e, Plus):
        return [t for x in e.terms for t in _expand(x)]
    if isinstance(e, Transpose):
        if e.child.scalar:
            return _expand(e.child)
        return [_transpose_term(t) for t in _expand(e.child)]
    if isinstance(e, Inverse):
        ts = _collect(_expand(e.child))
        if len(ts) == 1:
            return _inverse_term(ts[0])
        inner = _assemble(ts)
        return [(one, (Inverse(inner),), ())] if e.scalar else [(one, (), (Inverse(inner),))]
    raise TypeError(type(e))


def _collect(terms: list[Term]) -> list[Term]:
    acc: dict[tuple, list] = {}
    for c, s, f in terms:
        k = (tuple(x.ident for x in s), tuple(x.ident for x in f))
        if k in acc:
            acc[k][0] += c
        else:
            acc[k] = [c, s, f]
    return [(c, s, f) for c, s, f in acc.values() if c != 0]


def term_expr(t: Term) -> Expr:
    c, s, f = t
    if c == 1 and not s and len(f) == 1:
        return f[0]
    if c == 1 and len(s) == 1 and not f:
        return s[0]
    return Times(c, s, f)


def _assemble(terms: list[Term]) -> Expr:
    if not terms:
        raise ZeroExpression("expression simplifies to zero")
    exprs = sorted((term_expr(t) for t in terms), key=lambda e: e.key)
    return exprs[0] if len(exprs) == 1 else Plus(exprs)


@lru_cache(maxsize=200_000)
def normal_form(e: Expr) -> Expr:
    """Sum of products with transpose/inverse pushed to the leaves."""
    return _assemble(_collect(_expand(e)))


def terms_of(e: Expr) -> list[Term]:
    """Terms of an expression already in normal form."""
    return _collect(_expand(e))


def struct_equal(a: Expr, b: Expr) -> bool:
    return normal_form(a).ident == normal_form(b).ident


def as_term(e: Expr) -> Term:
    """View a normal-form summand as (coeff, scalars, factors)."""
    if isinstance(e, Times):
        return (e.coeff, e.scalars, e.factors)
    if e.scalar:
        return (Fraction(1), (e,), ())
    return (Fraction(1), (), (e,))


def summands(e: Expr) -> tuple[Expr, ...]:
    return e.terms if isinstance(e, Plus) else (e,)


# ------------------------------------------------------------- traversal


def walk(e: Expr) -> Iterator[Expr]:
    yield e
    for c in e.children:
        yield from walk(c)


def operands(e: Expr) -> set[Operand]:
    return {x.operand for x in walk(e) if isinstance(x, Symbol)}


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace symbols by name; the result is not normalized."""
    if isinstance(e, Symbol):
        return mapping.get(e.key, e)
    if isinstance(e, Identity):
        return e
    if isinstance(e, Transpose):
        return Transpose(substitute(e.child, mapping))
    if isinstance(e, Inverse):
        return Inverse(substitute(e.child, mapping))
    if isinstance(e, Plus):
        return Plus(substitute(t, mapping) for t in e.terms)
    if isinstance(e, Times):
        return mul(e.coeff, *(substitute(x, mapping) for x in e.scalars + e.factors))
    raise TypeError(type(e))


def count_operators(e: Expr) -> int:
    return sum(1 for x in walk(e) if not isinstance(x, (Symbol, Identity)))


# --------------------------------------------------------------- printing


def _frac_src(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"({c.numerator}/{c.denominator})"


def to_source(e: Expr) -> str:
    """Render in the input language; parses back to a struct-equal expression."""
    if isinstance(e, Symbol):
        return e.key
    if isinstance(e, Identity):
        return e.key
    if isinstance(e, Transpose):
        return f"trans({to_source(e.child)})"
    if isinstance(e, Inverse):
        return f"inv({to_source(e.child)})"
    if isinstance(e, Plus):
        out = to_source(e.terms[0])
        for t in e.terms[1:]:
            if isinstance(t, Times) and t.coeff < 0:
                out += " - " + to_source(Times(-t.coeff, t.scalars, t.factors)
                                         if (t.scalars or t.factors) else Times(-t.coeff))
            else:
                out += " + " + to_source(t)
        return out
    if isinstance(e, Times):
        parts = []
        if e.coeff != 1 or not (e.scalars or e.factors):
            if e.coeff == -1 and (e.scalars or e.factors):
                parts.append("-1")
            else:
                parts.append(_frac_src(e.coeff) if e.coeff >= 0 else f"({_frac_src(e.coeff)})")
        for x in e.scalars + e.factors:
            s = to_source(x)
            parts.append(f"({s})" if isinstance(x, Plus) else s)
        return " * ".join(parts)
    raise TypeError(type(e))


def pairwise_segments(n: int) -> Iterator[tuple[int, int]]:
    """All contiguous index ranges [i, j) of length >= 2 in a sequence of n."""
    for i, j in itertools.combinations(range(n + 1), 2):
        if j - i >= 2:
            yield i, j
