"""Ground-truth evaluation and program execution.

``eval_expression`` never touches the reference kernels: products are plain
loops and inverses use a separate Gaussian elimination, so agreement between
it and an executed program is a genuine two-route check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..expr import Expr, Identity, Inverse, Plus, Symbol, Times, Transpose
from . import reference as ref

FORMATS = ("full", "lower", "upper", "diagonal", "permutation")


class SingularMatrix(ArithmeticError):
    pass


# ------------------------------------------------------------- expressions


def _matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, k = a.shape
    k2, n = b.shape
    if k != k2:
        raise ValueError(f"nonconformable {a.shape} * {b.shape}")
    out = np.zeros((m, n))
    for i in range(m):
        row = a[i]
        for j in range(n):
            s = 0.0
            col = b[:, j]
            for t in range(k):
                s += row[t] * col[t]
            out[i, j] = s
    return out


def gauss_inverse(a: np.ndarray) -> np.ndarray:
    """Inverse via Gaussian elimination with partial pivoting and back substitution."""
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("inverse of a non-square matrix")
    M = np.array(a, dtype=float)
    X = np.eye(n)
    scale = max(np.abs(M).max(), 1.0)
    for k in range(n):
        p = k + int(np.argmax(np.abs(M[k:, k])))
        if abs(M[p, k]) <= 1e-14 * scale:
            raise SingularMatrix(f"zero pivot in column {k}")
        if p != k:
            M[[k, p]] = M[[p, k]]
            X[[k, p]] = X[[p, k]]
        for i in range(k + 1, n):
            f = M[i, k] / M[k, k]
            if f:
                M[i, k:] -= f * M[k, k:]
                X[i] -= f * X[k]
    for k in range(n - 1, -1, -1):
        X[k] -= M[k, k + 1:] @ X[k + 1:]
        X[k] /= M[k, k]
    return X


def _as_matrix(v, rows=None, cols=None) -> np.ndarray:
    a = np.array(v, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1) if cols in (None, 1) else a.reshape(1, -1)
    return a


def eval_expression(e: Expr, env: dict) -> np.ndarray:
    """Direct evaluation; scalars come back as 1x1 arrays."""
    if isinstance(e, Symbol):
        if e.key not in env:
            raise KeyError(f"no value for {e.key}")
        a = _as_matrix(env[e.key], e.rows, e.cols)
        if a.shape != (e.rows, e.cols):
            raise ValueError(f"{e.key}: value has shape {a.shape}, expected {(e.rows, e.cols)}")
        return a
    if isinstance(e, Identity):
        return np.eye(e.n)
    if isinstance(e, Transpose):
        return eval_expression(e.child, env).T.copy()
    if isinstance(e, Inverse):
        return gauss_inverse(eval_expression(e.child, env))
    if isinstance(e, Plus):
        out = eval_expression(e.terms[0], env).copy()
        for t in e.terms[1:]:
            out += eval_expression(t, env)
        return out
    if isinstance(e, Times):
        c = float(e.coeff)
        for s in e.scalars:
            c *= float(eval_expression(s, env)[0, 0])
        if not e.factors:
            return np.array([[c]])
        out = eval_expression(e.factors[0], env)
        for f in e.factors[1:]:
            out = _matmul(out, eval_expression(f, env))
        return c * out
    raise TypeError(f"cannot evaluate {type(e).__name__}")


def eval_scalar(e: Expr | None, env: dict) -> float | None:
    return None if e is None else float(eval_expression(e, env)[0, 0])


def compare(a, b) -> float:
    """Relative Frobenius error ||a - b|| / max(||b||, 1)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1.0))


# ------------------------------------------------------------- formats


def to_full(a: np.ndarray, fmt: str, n: int | None = None) -> np.ndarray:
    if fmt == "full":
        return a
    if fmt == "lower":
        return np.tril(np.nan_to_num(a, nan=0.0))
    if fmt == "upper":
        return np.triu(np.nan_to_num(a, nan=0.0))
    if fmt == "diagonal":
        return np.diag(np.asarray(a, dtype=float).ravel())
    if fmt == "permutation":
        return np.eye(len(a))[np.asarray(a, dtype=int)]
    raise ValueError(f"unknown format {fmt!r}")


def from_full(a: np.ndarray, fmt: str) -> np.ndarray:
    if fmt == "full":
        return a
    if fmt in ("lower", "upper"):
        out = np.array(a, dtype=float)
        n = out.shape[0]
        out[np.triu_indices(n, 1) if fmt == "lower" else np.tril_indices(n, -1)] = np.nan
        return out
    if fmt == "diagonal":
        return np.diag(a).copy()
    if fmt == "permutation":
        return np.argmax(a, axis=1)
    raise ValueError(f"unknown format {fmt!r}")


def conversion_moves(shape: tuple[int, int], src: str, dst: str) -> int:
    """Element writes needed to convert between two formats (via full)."""
    if src == dst:
        return 0
    n = shape[0]
    moves = 0
    if src in ("lower", "upper"):
        moves += n * (n - 1) // 2  # zero fill
    elif src in ("diagonal", "permutation"):
        moves += n * n
    if dst in ("diagonal", "permutation"):
        moves += n
    return moves


def convert(a: np.ndarray, src: str, dst: str) -> np.ndarray:
    if src == dst:
        return a
    return from_full(to_full(a, src), dst)


# ------------------------------------------------------------- kernels


def required_formats(kernel, flags: dict) -> dict[str, str]:
    """Storage format each argument slot must be in."""
    out = {}
    for slot, fmt in getattr(kernel, "formats", {}).items():
        if fmt == "triangular":
            out[slot] = "lower" if flags.get("uplo", "L") == "L" else "upper"
        else:
            out[slot] = fmt
    return out


def output_formats(kernel, flags: dict) -> tuple[str, ...]:
    if hasattr(kernel, "output_formats"):
        return kernel.output_formats
    fmt = kernel.output_format
    if fmt == "triangular":
        lower = (flags.get("uplo", "L") == "L") != bool(flags.get("trans"))
        return ("lower" if lower else "upper",)
    return (fmt,)


def run_kernel(kernel, args: dict[str, np.ndarray], flags: dict, alpha: float | None,
               beta: float | None, ctr: ref.FlopCounter) -> tuple[np.ndarray, ...]:
    """Execute one pattern kernel or factorization on arguments in their required formats."""
    if hasattr(kernel, "name") and not hasattr(kernel, "family"):
        a = args["A"]
        name = kernel.name
        if name == "Cholesky":
            return (ref.potrf(a, ctr),)
        if name == "LU":
            return ref.getrf(a, ctr)
        if name == "QR":
            return ref.geqrf(a, ctr)
        if name == "SymEVD":
            return ref.syev(a, ctr=ctr)
        return ref.gesvd(a, ctr=ctr)

    fam = kernel.family
    f = flags

    def tr(slot, flag):
        x = args[slot]
        return x.T.copy() if f.get(flag) else x

    if fam == "gemm":
        return (ref.gemm(alpha, args["X"], args["Y"], beta, args.get("Z"),
                         f.get("transA", False), f.get("transB", False), ctr),)
    if fam in ("trmm", "trsm"):
        fn = ref.trmm if fam == "trmm" else ref.trsm
        return (fn(alpha, args["L"], tr("Y", "transB"), f["uplo"] == "L", f["transA"], f["side"],
                   ctr),)
    if fam in ("diagmul", "diagsolve"):
        fn = ref.diagmul if fam == "diagmul" else ref.diagsolve
        return (fn(alpha, args["D"], tr("Y", "transB"), f["side"], ctr),)
    if fam == "laswp":
        return (ref.laswp(args["P"], tr("Y", "transB"), f["transP"], f["side"]),)
    if fam == "syrk":
        init = f.get("init", "none")
        if init == "Z":
            return (ref.syrk(alpha, args["X"], beta, args["Z"], f["trans"], ctr),)
        if init == "I":
            n = args["X"].shape[1] if f["trans"] else args["X"].shape[0]
            c = np.eye(n) * (1.0 if beta is None else beta)
            return (ref.syrk(alpha, args["X"], None, c, f["trans"], ctr),)
        return (ref.syrk(alpha, args["X"], None, None, f["trans"], ctr),)
    if fam == "syr2k":
        return (ref.syr2k(alpha, args["X"], args["Y"], f["trans"], ctr),)
    if fam == "axpy":
        return (ref.axpby(alpha, args["X"], beta, args["Y"], f["transX"], f["transY"], ctr),)
    if fam == "add_identity":
        return (ref.add_identity(alpha, beta, args["X"], f["transX"], ctr),)
    if fam == "scal":
        return (ref.scal(alpha, args["X"], f["transX"], ctr),)
    if fam == "transpose":
        return (ref.transpose(args["X"]),)
    if fam == "trtri":
        out = ref.trtri(args["L"], f["uplo"] == "L", ctr)
        return (out.T.copy() if f["trans"] else out,)
    if fam == "diaginv":
        return (ref.diaginv(args["D"], ctr),)
    if fam == "getri":
        out = ref.getri(args["X"], ctr)
        return (out.T.copy() if f["trans"] else out,)
    raise ValueError(f"unknown kernel family {fam!r}")


def kernel_of(db, name: str):
    if name in db.kernels:
        return db.kernels[name]
    for fac in db.factorizations.values():
        if fac.id == name:
            return fac
    raise KeyError(f"unknown kernel {name!r}")


# ------------------------------------------------------------- programs


@dataclass
class Execution:
    outputs: dict[str, np.ndarray]
    flops: int
    moves: int = 0
    step_flops: list[int] = field(default_factory=list)


def input_env(env: dict, operands: dict) -> dict:
    out = {}
    for name, v in env.items():
        op = operands.get(name)
        out[name] = _as_matrix(v, op.rows if op else None, op.cols if op else None)
    return out


def eval_symbolic(prog, env: dict, db=None) -> Execution:
    """Run a symbolic program with every value kept in full storage."""
    from ..kernels import default_db

    db = db or default_db()
    vals = input_env(env, prog.operands)
    total = 0
    per = []
    for call in prog.calls:
        k = kernel_of(db, call.kernel)
        flags = dict(call.flags)
        need = required_formats(k, flags)
        args = {slot: from_full(vals[name], need.get(slot, "full")) for slot, name in call.args}
        ctr = ref.FlopCounter()
        outs = run_kernel(k, args, flags, eval_scalar(call.alpha, vals),
                          eval_scalar(call.beta, vals), ctr)
        for name, val, fmt in zip(call.outputs, outs, output_formats(k, flags)):
            vals[name] = to_full(val, fmt)
        total += ctr.flops
        per.append(ctr.flops)
    outputs = {lhs: vals[src] for lhs, src in prog.outputs}
    return Execution(outputs, total, 0, per)


def eval_program(p, env: dict, db=None) -> Execution:
    """Run a lowered program step by step on buffers with storage formats.

    Reading a buffer in a format other than the one it currently holds is an
    error: lowering must have inserted the conversion.
    """
    from ..kernels import default_db

    db = db or default_db()
    bufs: dict[str, np.ndarray] = {}
    fmts: dict[str, str] = {}
    shapes = {b["name"]: (b["rows"], b["cols"]) for b in p.buffers}
    scalars = {}
    for name, buf in p.inputs.items():
        if name not in env:
            raise KeyError(f"no value for input {name}")
        bufs[buf] = _as_matrix(env[name], *shapes[buf]).copy()
        fmts[buf] = "full"
    for name, v in env.items():
        scalars[name] = _as_matrix(v)
    total = moves = 0
    per = []
    for st in p.steps:
        op = st["op"]
        if op == "copy":
            if st["src"] not in bufs:
                raise RuntimeError(f"copy reads undefined buffer {st['src']}")
            bufs[st["dst"]] = np.array(bufs[st["src"]], copy=True)
            fmts[st["dst"]] = fmts[st["src"]]
            moves += st["moves"]
            per.append(0)
        elif op == "convert":
            b = st["buffer"]
            if fmts.get(b) != st["from"]:
                raise RuntimeError(f"buffer {b} is {fmts.get(b)}, not {st['from']}")
            bufs[b] = convert(bufs[b], st["from"], st["to"])
            fmts[b] = st["to"]
            moves += st["moves"]
            per.append(0)
        elif op == "kernel":
            k = kernel_of(db, st["kernel"])
            flags = st["flags"]
            need = required_formats(k, flags)
            args = {}
            for slot, b in st["args"].items():
                want = need.get(slot, "full")
                if b not in bufs:
                    raise RuntimeError(f"{st['kernel']} reads undefined buffer {b}")
                if fmts[b] != want:
                    raise RuntimeError(f"{st['kernel']}: buffer {b} is {fmts[b]}, needs {want}")
                args[slot] = bufs[b]
            ctr = ref.FlopCounter()
            outs = run_kernel(k, args, flags, eval_scalar(p.scalar_expr(st["alpha"]), scalars),
                              eval_scalar(p.scalar_expr(st["beta"]), scalars), ctr)
            for b, val, fmt in zip(st["out"], outs, output_formats(k, flags)):
                bufs[b] = val
                fmts[b] = fmt
            total += ctr.flops
            per.append(ctr.flops)
        else:
            raise ValueError(f"unknown step {op!r}")
    outputs = {}
    for name, b in p.outputs.items():
        if fmts[b] != "full":
            raise RuntimeError(f"output {name} left in {fmts[b]} format")
        outputs[name] = bufs[b]
    return Execution(outputs, total, moves, per)


def eval_problem(problem, env: dict) -> dict[str, np.ndarray]:
    """Direct evaluation of every assignment (later ones may use earlier outputs)."""
    vals = input_env(env, problem.declarations)
    out = {}
    for a in problem.assignments:
        v = eval_expression(a.rhs, vals)
        vals[a.lhs.key] = v
        out[a.lhs.key] = v
    return out
