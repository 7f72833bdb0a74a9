"""Command line front end.

Exit codes: 0 success, 1 usage or parse error, 2 no solution,
3 verification failure.
"""

from __future__ import annotations

import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import click

from .baseline import naive_cost
from .codegen import ExecutableProgram, emit, lower, to_json
from .derivation import NoSolution, SearchConfig, derive
from .kernels import default_db
from .parser import ParseError, parse_input, size_variables
from .problem import Problem
from .problems import PROBLEMS, problem_source

EXIT_OK, EXIT_USAGE, EXIT_NO_SOLUTION, EXIT_VERIFY = 0, 1, 2, 3
VERIFY_TOLERANCE = 1e-6


class VerificationFailure(RuntimeError):
    pass


@dataclass
class Verification:
    seed: int
    sizes: dict
    errors: dict
    passed: bool
    message: str = ""

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)


@dataclass
class RunReport:
    programs: list[ExecutableProgram]
    costs: list[int]
    naive_flops: int
    nodes: int
    edges: int
    terminals: int
    merges: int
    merge: bool
    strategy: str
    limits_exceeded: bool
    wall_time: float
    verification: Verification | None = None
    sizes: dict = field(default_factory=dict)

    @property
    def total_flops(self) -> int:
        return self.costs[0]

    @property
    def kernels(self) -> list[str]:
        return self.programs[0].kernels

    def to_json(self) -> dict:
        ver = None
        if self.verification is not None:
            ver = asdict(self.verification)
            ver["max_error"] = self.verification.max_error
        return {
            "schema": 1,
            "total_flops": self.total_flops,
            "naive_flops": self.naive_flops,
            "speedup_estimate": self.naive_flops / max(self.total_flops, 1),
            "graph": {"nodes": self.nodes, "edges": self.edges, "terminals": self.terminals,
                      "limits_exceeded": self.limits_exceeded},
            "merging": {"enabled": self.merge, "merged": self.merges},
            "strategy": self.strategy,
            "wall_time": self.wall_time,
            "sizes": self.sizes,
            "verification": ver,
            "programs": [dict(to_json(p), cost=c) for p, c in zip(self.programs, self.costs)],
        }


# ------------------------------------------------------------------ verify specs


def parse_verify(spec: str | None) -> tuple[dict[str, int], int | None]:
    """``"n=200 m=20 seed=3"`` (spaces or commas) -> ({n: 200, m: 20}, 3)."""
    sizes: dict[str, int] = {}
    seed = None
    if not spec:
        return sizes, seed
    for item in spec.replace(",", " ").split():
        key, eq, val = item.partition("=")
        if not eq or not key:
            raise click.UsageError(f"--verify expects name=value pairs, got {item!r}")
        try:
            v = int(val)
        except ValueError:
            raise click.UsageError(f"--verify value for {key} is not an integer: {val!r}") from None
        if key == "seed":
            seed = v
        elif v < 1:
            raise click.UsageError(f"--verify size {key} must be positive")
        else:
            sizes[key] = v
    return sizes, seed


def _max_dim(p: Problem) -> int:
    return max(max(o.rows, o.cols) for o in p.declarations.values())


def scaled_problem(text: str, sizes: dict[str, int]) -> Problem:
    """Apply a --verify size spec.

    Names of size variables override those variables. A bare ``n`` that is
    not a size variable is the base size: every dimension is scaled so the
    largest becomes ``n``.
    """
    if not sizes:
        return parse_input(text)
    known = size_variables(text)
    overrides = {k: v for k, v in sizes.items() if k in known}
    rest = {k: v for k, v in sizes.items() if k not in known}
    if set(rest) - {"n"}:
        raise click.UsageError(f"unknown size variables: {', '.join(sorted(set(rest) - {'n'}))}")
    if "n" in rest:
        if overrides:
            raise click.UsageError("a base size n cannot be combined with size overrides")
        return parse_input(text, scale=rest["n"] / _max_dim(parse_input(text)))
    return parse_input(text, overrides)


def verify_program(problem: Problem, exe: ExecutableProgram, seed: int,
                   tolerance: float | None = None) -> Verification:
    from .oracle.evaluate import compare, eval_problem, eval_program
    from .oracle.instances import InstanceGenerator

    env = InstanceGenerator(seed).environment(problem.declarations)
    sizes = {o.name: [o.rows, o.cols] for o in problem.declarations.values()}
    try:
        expected = eval_problem(problem, env)
        got = eval_program(exe, env).outputs
    except Exception as exc:  # a kernel precondition failed at run time
        return Verification(seed, sizes, {}, False, f"{type(exc).__name__}: {exc}")
    if tolerance is None:
        tolerance = VERIFY_TOLERANCE
    errors = {k: compare(got[k], expected[k]) for k in expected}
    ok = all(e <= tolerance for e in errors.values())
    return Verification(seed, sizes, errors, ok,
                        "" if ok else f"relative error above {tolerance:g}")


# ------------------------------------------------------------------ pipeline


def run(text: str, strategy: str = "exhaustive", threshold: int | None = 100, k: int = 1,
        merge: bool = True, verify: str | None = None, seed: int = 1,
        dump_graph: str | None = None, max_nodes: int = 200_000) -> RunReport:
    """parse, derive, pick the best programs, lower; optionally verify.

    With ``verify`` the problem is compiled at the verification sizes, so the
    checked program is exactly the emitted one.
    """
    sizes, vseed = parse_verify(verify)
    problem = scaled_problem(text, sizes)
    db = default_db()
    cfg = SearchConfig(strategy=strategy, threshold=threshold, k=k, merge=merge,
                       max_nodes=max_nodes)
    t0 = time.perf_counter()
    g = derive(problem, cfg, db)
    symbolic = g.best_programs(k)
    wall = time.perf_counter() - t0
    if dump_graph:
        Path(dump_graph).write_text(g.to_dot())
    programs = [lower(p, db, {"strategy": strategy}) for p in symbolic]
    report = RunReport(programs, [p.cost for p in symbolic], naive_cost(problem, db),
                       len(g.nodes), len(g.edges), len(g.terminals), g.merges, merge,
                       strategy, g.limits_exceeded, wall,
                       sizes={o.name: [o.rows, o.cols] for o in problem.declarations.values()})
    if verify is not None:
        report.verification = verify_program(problem, programs[0],
                                             vseed if vseed is not None else seed)
    return report


def render(report: RunReport, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report.to_json(), indent=2) + "\n"
    parts = []
    for i, (p, c) in enumerate(zip(report.programs, report.costs), 1):
        if len(report.programs) > 1:
            parts.append(f"# program {i}: {c} flops\n")
        parts.append(emit(p, "pseudo"))
    lines = [
        f"# naive baseline: {report.naive_flops} flops",
        f"# graph: {report.nodes} nodes, {report.edges} edges, {report.terminals} terminal, "
        f"{report.merges} merged ({'merging on' if report.merge else 'merging off'})",
        f"# generation time: {report.wall_time:.3f} s",
    ]
    v = report.verification
    if v is not None:
        status = "passed" if v.passed else "FAILED"
        detail = f", max relative error {v.max_error:.3e}" if v.errors else ""
        msg = f" ({v.message})" if v.message else ""
        lines.append(f"# verification (seed {v.seed}): {status}{detail}{msg}")
    return "".join(parts) + "\n".join(lines) + "\n"


# ------------------------------------------------------------------ click


@click.group()
def cli():
    """Compile linear algebra expressions into kernel call sequences."""


@cli.command("run")
@click.argument("input_file", required=False, type=click.Path(dir_okay=False))
@click.option("--problem", "problem_name", help="Use a built-in problem instead of a file.")
@click.option("--strategy", type=click.Choice(["exhaustive", "constructive"]),
              default="exhaustive", show_default=True)
@click.option("--threshold", type=int, default=100, show_default=True,
              help="Stop after the level on which this many terminal nodes exist (0: never).")
@click.option("--k", "k", type=int, default=1, show_default=True,
              help="Number of programs to emit.")
@click.option("--no-merge", is_flag=True, help="Disable merging of equal nodes.")
@click.option("--dump-graph", type=click.Path(dir_okay=False), help="Write the graph as DOT.")
@click.option("--out", type=click.Path(dir_okay=False), help="Write output here, not stdout.")
@click.option("--format", "fmt", type=click.Choice(["pseudo", "json"]), default="pseudo",
              show_default=True)
@click.option("--verify", help='Verify with the oracle, e.g. "n=200 m=20 seed=3".')
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--max-nodes", type=int, default=200_000, show_default=True)
def run_cmd(input_file, problem_name, strategy, threshold, k, no_merge, dump_graph, out, fmt,
            verify, seed, max_nodes):
    """Compile INPUT_FILE (or a built-in --problem) and print the program."""
    if (input_file is None) == (problem_name is None):
        raise click.UsageError("give exactly one of INPUT_FILE or --problem")
    if k < 1:
        raise click.UsageError("--k must be at least 1")
    if threshold < 0:
        raise click.UsageError("--threshold must not be negative")
    if problem_name is not None:
        try:
            text = problem_source(problem_name)
        except KeyError as exc:
            raise click.UsageError(str(exc.args[0])) from None
    else:
        try:
            text = Path(input_file).read_text(encoding="utf-8")
        except OSError as exc:
            raise click.UsageError(f"cannot read {input_file}: {exc.strerror}") from None
    report = run(text, strategy, threshold or None, k, not no_merge, verify, seed, dump_graph,
                 max_nodes)
    text_out = render(report, fmt)
    if out:
        Path(out).write_text(text_out)
    else:
        click.echo(text_out, nl=False)
    if report.verification is not None and not report.verification.passed:
        raise VerificationFailure(report.verification.message)


@cli.command("problems")
def problems_cmd():
    """List the built-in problems."""
    for name, text in PROBLEMS.items():
        first = text.strip().splitlines()[0]
        title = first.lstrip("# ").strip() if first.startswith("#") else ""
        click.echo(f"{name:16s}{title}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="lagen", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except ParseError as exc:
        click.echo(f"parse error: {exc}", err=True)
        return EXIT_USAGE
    except NoSolution as exc:
        click.echo(f"no solution: {exc}", err=True)
        return EXIT_NO_SOLUTION
    except VerificationFailure as exc:
        click.echo(f"verification failed: {exc}", err=True)
        return EXIT_VERIFY
    return EXIT_OK


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
