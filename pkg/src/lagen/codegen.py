"""Lowering of symbolic programs: liveness, buffers, copies, storage formats, emission."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .derivation import SymbolicProgram
from .expr import Operand, Symbol, to_source
from .kernels import KernelCall, KernelDB, default_db
from .oracle.evaluate import conversion_moves, kernel_of, output_formats, required_formats
from .parser import parse_expression
from .properties import Property

SCHEMA = 1


class LivenessError(RuntimeError):
    pass


@dataclass(frozen=True)
class LiveRange:
    operand: str
    defined: int  # call index, -1 for program inputs
    last_use: int  # -1 when never read
    output: bool


@dataclass
class ExecutableProgram:
    steps: list[dict]
    buffers: list[dict]
    inputs: dict[str, str]  # input operand -> buffer
    outputs: dict[str, str]  # problem output -> buffer
    operands: dict[str, Operand]
    metadata: dict = field(default_factory=dict)

    @property
    def total_flops(self) -> int:
        return sum(s["flops"] for s in self.steps if s["op"] == "kernel")

    @property
    def total_moves(self) -> int:
        return sum(s["moves"] for s in self.steps if s["op"] != "kernel")

    @property
    def kernels(self) -> list[str]:
        return [s["kernel"] for s in self.steps if s["op"] == "kernel"]

    def scalar_expr(self, text):
        if text is None:
            return None
        syms = {n: Symbol(o) for n, o in self.operands.items() if o.kind == "scalar"}
        return parse_expression(text, syms)

    def __eq__(self, other):
        if not isinstance(other, ExecutableProgram):
            return NotImplemented
        return (self.steps == other.steps and self.buffers == other.buffers
                and self.inputs == other.inputs and self.outputs == other.outputs
                and _decls(self.operands) == _decls(other.operands)
                and self.metadata == other.metadata)


# ------------------------------------------------------------------ SSA


def _versioned(p: SymbolicProgram) -> tuple[list[KernelCall], dict[str, str], dict[str, Operand]]:
    """Rename repeated definitions (same value computed twice) apart."""
    defined = set(p.inputs)
    current: dict[str, str] = {}
    ops = dict(p.operands)
    calls = []
    for c in p.calls:
        args = tuple((slot, current.get(name, name)) for slot, name in c.args)
        outs = []
        for o in c.outputs:
            name = o
            k = 1
            while name in defined:
                k += 1
                name = f"{o}_{k}"
            if name != o:
                op = ops[o]
                ops[name] = Operand(name, op.rows, op.cols, op.properties, op.kind,
                                    op.is_factor, op.is_intermediate)
            defined.add(name)
            current[o] = name
            outs.append(name)
        calls.append(KernelCall(c.kernel, args, tuple(outs), c.flops, c.alpha, c.beta, c.flags,
                                c.computes))
    outputs = {lhs: current.get(src, src) for lhs, src in p.outputs}
    return calls, outputs, ops


def analyze_liveness(p: SymbolicProgram) -> dict[str, LiveRange]:
    calls, outputs, _ = _versioned(p)
    return _liveness(calls, set(p.inputs), set(outputs.values()))


def _liveness(calls, inputs: set[str], outputs: set[str]) -> dict[str, LiveRange]:
    defined = {n: -1 for n in inputs}
    last = {n: -1 for n in inputs}
    for i, c in enumerate(calls):
        for _, name in c.args:
            if name not in defined:
                raise LivenessError(f"call {i} ({c.kernel}) reads {name} before it is defined")
            last[name] = i
        for o in c.outputs:
            defined[o] = i
            last.setdefault(o, -1)
    for o in outputs:
        if o not in defined:
            raise LivenessError(f"output operand {o} is never defined")
    return {n: LiveRange(n, defined[n], last[n], n in outputs) for n in defined}


def overwritable(live: dict[str, LiveRange], name: str, at: int) -> bool:
    r = live[name]
    return not r.output and r.last_use == at


# ------------------------------------------------------------------ memory


def _overwrite_slot(k) -> str | None:
    return getattr(k, "overwrite", None) or ("A" if not hasattr(k, "family") else None)


def assign_memory(p: SymbolicProgram, live: dict[str, LiveRange] | None = None,
                  db: KernelDB | None = None) -> ExecutableProgram:
    """Greedy in-order buffer assignment; kernel calls are never reordered."""
    db = db or default_db()
    calls, outputs, ops = _versioned(p)
    if live is None:
        live = _liveness(calls, set(p.inputs), set(outputs.values()))
    buffers: dict[str, dict] = {}
    where: dict[str, str] = {}

    def new_buffer(name: str, op: Operand) -> str:
        b = name
        k = 0
        while b in buffers:
            k += 1
            b = f"buf{k}"
        buffers[b] = {"name": b, "rows": op.rows, "cols": op.cols}
        return b

    inputs = {}
    for name in p.inputs:
        op = ops[name]
        if op.kind == "scalar":
            continue  # immediate values
        inputs[name] = where[name] = new_buffer(name, op)

    steps: list[dict] = []
    for i, c in enumerate(calls):
        k = kernel_of(db, c.kernel)
        args = {slot: where[name] for slot, name in c.args}
        out_bufs = []
        slot = _overwrite_slot(k)
        target = dict(c.args).get(slot) if slot else None
        first = ops[c.outputs[0]]
        if target is not None:
            src = ops[target]
            same_shape = (src.rows, src.cols) == (first.rows, first.cols)
            only_here = sum(1 for _, n in c.args if n == target) == 1
            if same_shape and only_here and overwritable(live, target, i):
                out_bufs.append(where[target])
            elif same_shape:
                b = new_buffer(c.outputs[0], first)
                steps.append({"op": "copy", "src": where[target], "dst": b,
                              "moves": src.rows * src.cols, "operand": target})
                args[slot] = b
                out_bufs.append(b)
        for o in c.outputs[len(out_bufs):]:
            out_bufs.append(new_buffer(o, ops[o]))
        for o, b in zip(c.outputs, out_bufs):
            where[o] = b
        steps.append({
            "op": "kernel", "kernel": c.kernel, "args": args, "flags": dict(c.flags),
            "alpha": None if c.alpha is None else to_source(c.alpha),
            "beta": None if c.beta is None else to_source(c.beta),
            "out": out_bufs, "operands": {"in": dict(c.args), "out": list(c.outputs)},
            "flops": c.flops, "computes": c.computes,
        })

    outs = {}
    for lhs, name in outputs.items():
        if name in p.inputs:
            op = ops[name]
            b = new_buffer(lhs, Operand(lhs, op.rows, op.cols))
            steps.append({"op": "copy", "src": where[name], "dst": b,
                          "moves": op.rows * op.cols, "operand": name})
            outs[lhs] = b
        else:
            outs[lhs] = where[name]
    used = {n: ops[n] for n in ops if n in where or n in p.inputs}
    return ExecutableProgram(steps, list(buffers.values()), inputs, outs, used,
                             {"flops": p.cost})


# ------------------------------------------------------------------ formats


def insert_format_conversions(exe: ExecutableProgram, db: KernelDB | None = None
                              ) -> ExecutableProgram:
    """Convert arguments into the format each kernel needs; outputs end in full format."""
    db = db or default_db()
    shape = {b["name"]: (b["rows"], b["cols"]) for b in exe.buffers}
    fmt = {b: "full" for b in exe.inputs.values()}
    steps = []
    for st in exe.steps:
        if st["op"] == "convert":
            continue
        if st["op"] == "copy":
            fmt[st["dst"]] = fmt[st["src"]]
            steps.append(st)
            continue
        k = kernel_of(db, st["kernel"])
        need = required_formats(k, st["flags"])
        for slot, b in st["args"].items():
            want = need.get(slot, "full")
            have = fmt[b]
            if have != want:
                steps.append({"op": "convert", "buffer": b, "from": have, "to": want,
                              "moves": conversion_moves(shape[b], have, want)})
                fmt[b] = want
        for b, f in zip(st["out"], output_formats(k, st["flags"])):
            fmt[b] = f
        steps.append(st)
    for b in dict.fromkeys(exe.outputs.values()):
        if fmt[b] != "full":
            steps.append({"op": "convert", "buffer": b, "from": fmt[b], "to": "full",
                          "moves": conversion_moves(shape[b], fmt[b], "full")})
            fmt[b] = "full"
    return ExecutableProgram(steps, exe.buffers, exe.inputs, exe.outputs, exe.operands,
                             dict(exe.metadata))


def lower(p: SymbolicProgram, db: KernelDB | None = None, metadata: dict | None = None
          ) -> ExecutableProgram:
    exe = insert_format_conversions(assign_memory(p, None, db), db)
    if metadata:
        exe.metadata.update(metadata)
    return exe


# ------------------------------------------------------------------ emission


def _decls(ops: dict[str, Operand]) -> list[dict]:
    return [{"name": o.name, "rows": o.rows, "cols": o.cols, "kind": o.kind,
             "properties": sorted(p.value for p in o.properties),
             "factor": o.is_factor, "intermediate": o.is_intermediate}
            for o in sorted(ops.values(), key=lambda o: o.name)]


def to_json(p: ExecutableProgram) -> dict:
    return {
        "schema": SCHEMA,
        "steps": p.steps,
        "buffers": p.buffers,
        "inputs": p.inputs,
        "outputs": p.outputs,
        "operands": _decls(p.operands),
        "total_flops": p.total_flops,
        "total_moves": p.total_moves,
        "metadata": p.metadata,
    }


def _flag_text(flags: dict) -> str:
    parts = []
    for k, v in flags.items():
        if isinstance(v, bool):
            v = "T" if v else "N"
        parts.append(f"{k}={v}")
    return ", ".join(parts)


def emit(p: ExecutableProgram, format: str = "pseudo") -> str:
    if format == "json":
        return json.dumps(to_json(p), indent=2) + "\n"
    if format != "pseudo":
        raise ValueError(f"unknown format {format!r}")
    lines = []
    if p.inputs:
        lines.append("# inputs: " + ", ".join(f"{n} -> {b}" for n, b in p.inputs.items()))
    for st in p.steps:
        if st["op"] == "copy":
            lines.append(f"copy({st['src']}, {st['dst']})  # {st['moves']} moves")
        elif st["op"] == "convert":
            lines.append(f"{st['buffer']} = convert({st['buffer']}, {st['from']} -> {st['to']})"
                         f"  # {st['moves']} moves")
        else:
            args = []
            flags = _flag_text(st["flags"])
            if flags:
                args.append(flags)
            if st["alpha"] is not None or "Z" in st["args"]:
                args.append(st["alpha"] if st["alpha"] is not None else "1.0")
            args.extend(st["args"].values())
            if st["beta"] is not None:
                args.append(st["beta"])
            out = ", ".join(st["out"])
            lines.append(f"{out} = {st['kernel']}({', '.join(args)})  # {st['flops']} flops")
    lines.append("# outputs: " + ", ".join(f"{n} <- {b}" for n, b in p.outputs.items()))
    lines.append(f"# total: {p.total_flops} flops, {p.total_moves} moves")
    return "\n".join(lines) + "\n"


def load_json(text: str) -> ExecutableProgram:
    d = json.loads(text)
    if d.get("schema") != SCHEMA:
        raise ValueError(f"unsupported program schema {d.get('schema')!r}")
    ops = {}
    for o in d["operands"]:
        props = frozenset(Property(v) for v in o["properties"])
        ops[o["name"]] = Operand(o["name"], o["rows"], o["cols"], props, o["kind"],
                                 o["factor"], o["intermediate"])
    return ExecutableProgram(d["steps"], d["buffers"], d["inputs"], d["outputs"], ops,
                             d.get("metadata", {}))
