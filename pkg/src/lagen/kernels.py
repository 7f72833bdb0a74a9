"""Kernel database: patterns, constraints, flop formulas, storage requirements.

The database is a JSON document (``data/kernels.json``). Each pattern kernel
record has

``id``            unique name
``family``        calling convention understood by the executor
``patterns``      pattern strings (see :mod:`lagen.matching`)
``constraints``   variable -> list of predicates (``matrix``, ``vector``,
                  ``square``, ``triangular``, ``not_diagonal`` or a property)
``where``         predicates on the whole match: ``out_matrix``, ``out_vector``,
                  ``out_scalar``, ``alpha``, ``no_alpha``, ``equal_coeffs``
``cost``          arithmetic formula over ``out_r``, ``out_c``, ``alpha``,
                  ``beta`` (1 if the coefficient is present, else 0), the
                  shapes ``<V>_r``/``<V>_c`` of every variable as it occurs,
                  and the global ``params``
``formats``       variable -> ``full``/``triangular``/``diagonal``/``permutation``
``output_format`` storage format of the result (default ``full``)
``overwrite``     variable whose buffer may receive the result

Factorization records instead carry ``factorization``, ``outputs`` and
``output_formats``; their cost formula uses ``n``.
"""

from __future__ import annotations

import ast
import json
import operator
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from importlib import resources
from typing import Any

from .expr import Expr
from .matching import (INVTRANS, TRANS, MatcherIndex, Pattern, Substitution, parse_pattern,
                       scalar_expr)
from .properties import Property

P = Property


class CostError(ValueError):
    pass


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}


def eval_formula(text: str, env: dict[str, int]) -> int:
    """Evaluate a cost formula exactly; the result must be a non-negative integer."""
    return _eval_cached(text, tuple(sorted(env.items())))


@lru_cache(maxsize=65536)
def _eval_cached(text: str, items: tuple) -> int:
    env = dict(items)

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, int):
            return Fraction(node.value)
        if isinstance(node, ast.Name):
            if node.id not in env:
                raise CostError(f"unbound dimension {node.id!r} in {text!r}")
            return Fraction(env[node.id])
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return -ev(node.operand)
        raise CostError(f"unsupported syntax in cost formula {text!r}")

    value = ev(ast.parse(text, mode="eval"))
    if value.denominator != 1 or value < 0:
        raise CostError(f"formula {text!r} gave {value} for {env}")
    return int(value)


@dataclass(frozen=True)
class Kernel:
    id: str
    family: str
    patterns: tuple[Pattern, ...]
    constraints: dict
    where: tuple[str, ...]
    cost: str
    formats: dict
    output_format: str
    overwrite: str | None

    @cached_property
    def arity(self) -> int:
        return len(self.patterns[0].variables)


@dataclass(frozen=True)
class Factorization:
    id: str
    name: str
    outputs: tuple[str, ...]
    output_formats: tuple[str, ...]
    cost: str


@dataclass(frozen=True)
class KernelCall:
    """One symbolic kernel invocation."""

    kernel: str
    args: tuple[tuple[str, str], ...]  # slot -> operand name
    outputs: tuple[str, ...]
    flops: int
    alpha: Expr | None = None
    beta: Expr | None = None
    flags: tuple[tuple[str, Any], ...] = ()
    computes: str = ""  # source form of what the call computes

    def arg(self, slot: str) -> str | None:
        return dict(self.args).get(slot)

    def flag(self, name: str, default=None):
        return dict(self.flags).get(name, default)

    def describe(self) -> str:
        return f"{','.join(self.outputs)} := {self.kernel}({self.computes})"


# ---------------------------------------------------------------- where

def _out(sub: Substitution) -> tuple[int, int]:
    return sub.computed.rows, sub.computed.cols


WHERE = {
    "out_matrix": lambda s: min(_out(s)) > 1,
    "out_vector": lambda s: min(_out(s)) == 1 and max(_out(s)) > 1,
    "out_scalar": lambda s: _out(s) == (1, 1),
    "alpha": lambda s: s.alpha is not None,
    "no_alpha": lambda s: s.alpha is None,
    "equal_coeffs": lambda s: s.alpha == s.beta,
}


class KernelDB:
    def __init__(self, data: dict):
        self.params: dict[str, int] = dict(data.get("params", {}))
        self.kernels: dict[str, Kernel] = {}
        self.factorizations: dict[str, Factorization] = {}
        for rec in data["kernels"]:
            if "factorization" in rec:
                f = Factorization(rec["id"], rec["factorization"], tuple(rec["outputs"]),
                                  tuple(rec["output_formats"]), rec["cost"])
                self.factorizations[f.name] = f
                continue
            pats = tuple(parse_pattern(p) for p in rec["patterns"])
            k = Kernel(
                id=rec["id"], family=rec["family"], patterns=pats,
                constraints={v: tuple(c) for v, c in rec.get("constraints", {}).items()},
                where=tuple(rec.get("where", ())), cost=rec["cost"],
                formats=dict(rec.get("formats", {})),
                output_format=rec.get("output_format", "full"),
                overwrite=rec.get("overwrite"))
            for w in k.where:
                if w not in WHERE:
                    raise ValueError(f"kernel {k.id}: unknown where-clause {w!r}")
            if k.id in self.kernels:
                raise ValueError(f"duplicate kernel id {k.id}")
            self.kernels[k.id] = k
        self.index = MatcherIndex((k.id, p, k.constraints)
                                  for k in self.kernels.values() for p in k.patterns)

    @classmethod
    def load(cls, path=None) -> "KernelDB":
        if path is None:
            text = resources.files("lagen").joinpath("data/kernels.json").read_text()
        else:
            with open(path) as fh:
                text = fh.read()
        return cls(json.loads(text))

    def restricted(self, ids) -> "KernelDB":
        """A database holding only the named pattern kernels (plus factorizations)."""
        db = object.__new__(KernelDB)
        db.params = self.params
        db.kernels = {i: self.kernels[i] for i in ids}
        db.factorizations = self.factorizations
        db.index = MatcherIndex((k.id, p, k.constraints)
                                for k in db.kernels.values() for p in k.patterns)
        return db

    def matches(self, e: Expr, naive: bool = False) -> list[tuple[Kernel, Substitution]]:
        """Admissible kernel matches anywhere in ``e``."""
        raw = self.index.match_naive(e) if naive else self.index.match_all(e)
        out = []
        for kid, sub in raw:
            k = self.kernels[kid]
            if all(WHERE[w](sub) for w in k.where) and check_kernel_admissible(k, sub):
                out.append((k, sub))
        return out

    def factorization_cost(self, name: str, n: int) -> int:
        return eval_formula(self.factorizations[name].cost, {"n": n, **self.params})


_DEFAULT: KernelDB | None = None


def default_db() -> KernelDB:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = KernelDB.load()
    return _DEFAULT


def cost_env(k: Kernel, sub: Substitution, params: dict) -> dict[str, int]:
    env = dict(params)
    env["out_r"], env["out_c"] = sub.computed.rows, sub.computed.cols
    env["alpha"] = int(sub.alpha is not None)
    env["beta"] = int(sub.beta is not None)
    for var, atom in sub.atoms:
        env[f"{var}_r"], env[f"{var}_c"] = atom.rows, atom.cols
    return env


def kernel_cost(k: Kernel, sub: Substitution, db: KernelDB | None = None) -> int:
    params = (db or default_db()).params
    return eval_formula(k.cost, cost_env(k, sub, params))


def check_kernel_admissible(k: Kernel, sub: Substitution) -> bool:
    """At least one operand is not a factor, and every constraint holds."""
    from .matching import check_var

    ops = sub.operands
    if ops and all(s.operand.is_factor for s in ops):
        return False
    for var, cons in k.constraints.items():
        if var in dict(sub.atoms):
            s = sub.operand(var)
            if not all(check_var(c, s) for c in cons):
                return False
    return True


# ---------------------------------------------------------------- calls


def _is_t(d: str) -> bool:
    return d in (TRANS, INVTRANS)


def call_flags(k: Kernel, sub: Substitution) -> dict:
    fam = k.family
    pat = sub.pattern
    first = pat.terms[0][0]
    atoms = dict(sub.atoms)
    f: dict = {}

    def t(var):
        return var in atoms and _is_t(sub.deco(var))

    if fam == "gemm":
        f["transA"], f["transB"] = t("X"), t("Y")
    elif fam in ("trmm", "trsm", "diagmul", "diagsolve", "laswp"):
        tv = {"trmm": "L", "trsm": "L", "diagmul": "D", "diagsolve": "D", "laswp": "P"}[fam]
        f["side"] = "L" if first.var == tv else "R"
        if fam in ("trmm", "trsm"):
            f["transA"] = t("L")
            f["uplo"] = "L" if P.LOWER_TRIANGULAR in sub.operand("L").properties else "U"
        if fam == "laswp":
            f["transP"] = t("P")
        f["transB"] = t("Y")
    elif fam in ("syrk", "syr2k"):
        f["trans"] = first.deco == TRANS
        if fam == "syrk":
            f["init"] = "Z" if "Z" in atoms else ("I" if len(pat.terms) == 2 else "none")
    elif fam in ("axpy",):
        f["transX"], f["transY"] = t("X"), t("Y")
    elif fam in ("add_identity", "scal", "transpose"):
        f["transX"] = t("X")
    elif fam == "trtri":
        f["uplo"] = "L" if P.LOWER_TRIANGULAR in sub.operand("L").properties else "U"
        f["trans"] = t("L")
    elif fam == "getri":
        f["trans"] = t("X")
    return f


def make_call(k: Kernel, sub: Substitution, out: str, db: KernelDB | None = None) -> KernelCall:
    from .expr import to_source

    args = tuple((var, sub.operand(var).key) for var, _ in sub.atoms)
    return KernelCall(
        kernel=k.id, args=args, outputs=(out,), flops=kernel_cost(k, sub, db),
        alpha=scalar_expr(sub.alpha), beta=scalar_expr(sub.beta),
        flags=tuple(sorted(call_flags(k, sub).items())),
        computes=to_source(sub.computed))
