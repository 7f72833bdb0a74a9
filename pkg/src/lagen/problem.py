"""Problems: operand declarations plus an ordered list of assignments."""

from __future__ import annotations

from dataclasses import dataclass, field

from .expr import Expr, Operand, Symbol, operands, to_source
from .inference import infer_properties
from .properties import Property

_SQUARE_ONLY = {Property.SPD, Property.SPSD, Property.SYMMETRIC, Property.ORTHOGONAL,
                Property.IDENTITY, Property.LOWER_TRIANGULAR, Property.UPPER_TRIANGULAR,
                Property.DIAGONAL, Property.PERMUTATION}


@dataclass(frozen=True)
class Assignment:
    lhs: Symbol
    rhs: Expr
    aux: bool = False

    @property
    def key(self) -> str:
        return ("~" if self.aux else "") + f"{self.lhs.key}:={self.rhs.key}"

    def __str__(self):
        return f"{self.lhs.key} := {to_source(self.rhs)}"


class ProblemError(ValueError):
    pass


@dataclass
class Problem:
    declarations: dict[str, Operand]
    assignments: list[Assignment] = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    @property
    def outputs(self) -> list[str]:
        return [a.lhs.key for a in self.assignments]

    def symbol(self, name: str) -> Symbol:
        return Symbol(self.declarations[name])

    def validate(self):
        known = set(self.declarations)
        for a in self.assignments:
            if a.lhs.key in known:
                raise ProblemError(f"{a.lhs.key} is assigned twice or shadows a declaration")
            for o in operands(a.rhs):
                if o.name not in known:
                    raise ProblemError(f"undeclared symbol {o.name}")
            if (a.lhs.rows, a.lhs.cols) != (a.rhs.rows, a.rhs.cols):
                raise ProblemError(f"{a.lhs.key}: shape does not match its right-hand side")
            known.add(a.lhs.key)

    def to_source(self) -> str:
        """Render in the input language (parses back to an equivalent problem)."""
        lines = []
        for o in self.declarations.values():
            props = sorted(p.value for p in o.properties)
            tag = f" <{', '.join(props)}>" if props else ""
            if o.kind == "scalar":
                lines.append(f"Scalar {o.name}{tag}")
            elif o.kind == "vector" and o.cols == 1:
                lines.append(f"Vector {o.name}({o.rows}){tag}")
            else:
                lines.append(f"Matrix {o.name}({o.rows}, {o.cols}){tag}")
        lines.extend(str(a) for a in self.assignments)
        return "\n".join(lines) + "\n"


def output_symbol(name: str, rhs: Expr) -> Symbol:
    """Left-hand-side operand whose properties are inferred from its definition."""
    props = set(infer_properties(rhs)) - {Property.POSITIVE_SCALAR}
    if rhs.rows != rhs.cols:
        props -= _SQUARE_ONLY
    if rhs.scalar:
        kind = "scalar"
    elif (rhs.rows == 1) != (rhs.cols == 1):
        kind = "vector"
    else:
        kind = "matrix"
    return Symbol(Operand(name, rhs.rows, rhs.cols, frozenset(props), kind))


def make_problem(declared: list[Symbol], assignments: list[tuple[str, Expr]]) -> Problem:
    decls = {s.key: s.operand for s in declared}
    out = []
    for name, rhs in assignments:
        out.append(Assignment(output_symbol(name, rhs), rhs))
    return Problem(decls, out)
