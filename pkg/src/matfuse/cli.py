"""Command-line driver.

Subcommands:

    compile    lower one kernel (max-fuse or a given organism) to C
    search     run a search strategy, write best.c + log.jsonl + summary
    enumerate  list every legal organism of a small kernel
    corpus     type-check, max-fuse and validate the bundled kernels

Exit codes are a stable contract: 0 success, 1 usage or environment
problem, 2 kernel legality/type error, 3 toolchain error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

from . import corpus as corpus_mod
from .cost import AnalyticCost, EmpiricalTimer, MachineModel, cached
from .cemit import emit_c
from .fuse import (
    Limits, NotationError, SpaceError, canonical_key, digit_space_size,
    enumerate_space, format_notation, fusion_legal, parse_notation,
)
from .graph import TypeCheckError, build_dataflow, infer_types
from .interp import reference_evaluate
from .lang import KernelSpecError, KernelSyntaxError, parse_kernel
from .lower import contract_arrays, lower
from .runtime import (
    Toolchain, ToolchainError, max_rel_error, random_inputs, run_kernel,
    workdir,
)
from .search import STRATEGIES, SearchConfig, max_fuse, run_strategy

logger = logging.getLogger(__name__)

EXIT_USAGE = 1
EXIT_KERNEL = 2
EXIT_TOOLCHAIN = 3


@dataclass(frozen=True)
class RunManifest:
    """Everything one search run needs: kernel file, strategy, search
    configuration, exactly one fitness source, and output paths."""

    kernel_file: Path
    strategy: str
    config: SearchConfig
    fitness_kind: str  # "analytic" | "empirical"
    extents: dict[str, int]
    out_dir: Path

    def __post_init__(self):
        if not self.kernel_file.exists():
            raise FileNotFoundError(self.kernel_file)
        if self.fitness_kind not in ("analytic", "empirical"):
            raise ValueError("exactly one fitness source must be selected")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_graph(path: str):
    text = Path(path).read_text()
    return infer_types(build_dataflow(parse_kernel(text)))


def _parse_extents(text: str, graph) -> dict[str, int]:
    vals = [int(v) for v in text.split(",")]
    names = list(graph.extent_names)
    if len(vals) < len(names):
        vals = vals + [vals[-1]] * (len(names) - len(vals))
    return dict(zip(names, vals))


def _grouping_diagnostic(text: str, graph):
    """When a notation fails structurally, check whether its top-level
    grouping already violates fusion rules, to report the real problem."""
    import re

    depth = 0
    groups: list[list[int]] = []
    cur: list[int] | None = None
    for tok in re.finditer(r"[{}]|\d+", text):
        t = tok.group()
        if t == "{":
            if depth == 0:
                cur = []
            depth += 1
        elif t == "}":
            depth -= 1
            if depth == 0 and cur is not None:
                groups.append(cur)
                cur = None
        elif cur is not None:
            cur.append(int(t))
    known = set(graph.op_ids())
    for group in groups:
        if len(group) < 2 or not set(group) <= known:
            continue
        inside = set(group)
        for a in group:
            for b in group:
                if a == b or not graph.reaches(a, b):
                    continue
                for x in graph.op_ids():
                    if x not in inside and graph.reaches(a, x) \
                            and graph.reaches(x, b):
                        from .fuse import Diagnostic
                        return Diagnostic(
                            "dependence",
                            f"ops {a} and {b} cannot fuse: they depend "
                            f"through op {x} outside the fused set",
                            (a, x, b),
                        )
    return None


def _validate_organism(graph, org, extents, toolchain) -> float:
    ir = contract_arrays(lower(org, graph))
    kernel = emit_c(ir, extents)
    wd = workdir()
    lib = toolchain.compile(kernel.source, wd, shared=True)
    inputs = random_inputs(graph, extents, seed=11)
    got = run_kernel(lib, kernel, graph, inputs, extents)
    want = reference_evaluate(graph.spec, inputs)
    return max_rel_error(got, want)


# ---------------------------------------------------------------------------
# compile

def cmd_compile(args) -> int:
    graph = _load_graph(args.kernel)
    if args.organism:
        try:
            org = parse_notation(args.organism, graph, threads=args.cores)
        except NotationError as exc:
            diag = _grouping_diagnostic(args.organism, graph)
            print(f"error: {diag or exc}", file=sys.stderr)
            return EXIT_KERNEL
        diag = fusion_legal(org, graph)
        if diag is not None:
            print(f"error: {diag}", file=sys.stderr)
            return EXIT_KERNEL
    else:
        org = max_fuse(graph, args.cores)
    extents = _parse_extents(args.extents, graph)
    ir = contract_arrays(lower(org, graph))
    kernel = emit_c(ir, extents)
    out = Path(args.output)
    out.write_text(kernel.source)
    print(f"organism: {format_notation(org) or '(scalar)'}")
    if org.threads:
        print(f"threads: {','.join(str(t) for t in org.threads)}")
    print(f"wrote {out}")
    if not args.no_validate:
        toolchain = Toolchain(args.cc, args.cc_template)
        if not toolchain.available:
            print("error: validation needs a C compiler (or --no-validate)",
                  file=sys.stderr)
            return EXIT_TOOLCHAIN
        err = _validate_organism(graph, org, extents, toolchain)
        print(f"validated against reference: max relative error {err:.3e}")
        if not err < 1e-10:
            print("error: kernel output mismatch", file=sys.stderr)
            return EXIT_KERNEL
    return 0


# ---------------------------------------------------------------------------
# search

def cmd_search(args) -> int:
    graph = _load_graph(args.kernel)
    extents = _parse_extents(args.extents, graph)
    manifest = RunManifest(
        kernel_file=Path(args.kernel),
        strategy=args.strategy,
        config=SearchConfig(
            population=args.population,
            tournament_k=args.tournament,
            generations=args.generations,
            budget=args.budget,
            seed=args.seed,
            thread_mode=args.threads_mode,
            core_count=args.cores,
            max_ops_exhaustive=args.max_ops,
            require_shared_operand=not args.no_prune,
        ),
        fitness_kind=args.fitness,
        extents=extents,
        out_dir=Path(args.out_dir),
    )
    if manifest.fitness_kind == "analytic":
        machine = MachineModel(
            core_count=args.cores,
            extents=tuple(extents.items()),
        )
        fitness = cached(AnalyticCost(graph, machine))
    else:
        toolchain = Toolchain(args.cc, args.cc_template)
        if not toolchain.available:
            print("error: empirical fitness needs a C compiler",
                  file=sys.stderr)
            return EXIT_TOOLCHAIN
        fitness = cached(EmpiricalTimer(graph, toolchain, extents,
                                        reps=args.reps))
    try:
        result = run_strategy(manifest.strategy, graph, manifest.config,
                              fitness)
    except SpaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    outdir = manifest.out_dir
    outdir.mkdir(parents=True, exist_ok=True)
    log_path = outdir / "log.jsonl"
    with log_path.open("a") as fh:
        for entry in result.log:
            fh.write(json.dumps(entry.as_dict()) + "\n")
    ir = contract_arrays(lower(result.best, graph))
    kernel = emit_c(ir, extents)
    (outdir / "best.c").write_text(kernel.source)
    summary = {
        "kernel": graph.spec.name,
        "strategy": result.strategy,
        "best": result.best_key,
        "fitness": result.best_fitness,
        "evaluations": result.evaluations,
        "cache_hits": result.cache_hits,
        "sweep_candidates": result.sweeps,
        "seed": manifest.config.seed,
        "fitness_source": manifest.fitness_kind,
    }
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))
    if not args.no_validate:
        toolchain = Toolchain(args.cc, args.cc_template)
        if toolchain.available:
            err = _validate_organism(graph, result.best, extents, toolchain)
            print(f"validated best kernel: max relative error {err:.3e}")
            if not err < 1e-10:
                return EXIT_KERNEL
    return 0


# ---------------------------------------------------------------------------
# enumerate

def cmd_enumerate(args) -> int:
    graph = _load_graph(args.kernel)
    limits = Limits(
        max_ops=args.max_ops,
        max_threads=args.max_threads,
        thread_mode=args.threads_mode,
        core_count=args.cores,
        partitions=not args.fusion_only,
        require_shared_operand=not args.no_prune,
    )
    try:
        count = 0
        for org in enumerate_space(graph, limits):
            count += 1
            if not args.count_only:
                print(canonical_key(org))
        print(f"total {count}")
    except SpaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.digit_space:
        n = len(graph.ops)
        max_depth = max(
            (len(op.nest.labels()) for op in graph.ops), default=0
        ) + 1  # one partition level on top of the deepest loop nest
        size = digit_space_size(n, max_depth, args.max_threads)
        print(f"digit-space {size}")
        print(f"ratio {count / size:.6%}")
    return 0


# ---------------------------------------------------------------------------
# corpus

def cmd_corpus(args) -> int:
    directory = Path(args.corpus_dir) if args.corpus_dir else None
    if directory is not None and not any(directory.glob("*.bto")):
        print(f"error: no kernels found in {directory}", file=sys.stderr)
        return EXIT_USAGE
    names = [args.kernel.lower()] if args.kernel else list(
        corpus_mod.TABLE_KERNELS)
    toolchain = Toolchain(args.cc, args.cc_template)
    if not args.no_validate and not toolchain.available:
        print("error: corpus validation needs a C compiler "
              "(or pass --no-validate)", file=sys.stderr)
        return EXIT_TOOLCHAIN
    report = []
    failed = False
    for name in names:
        entry = {"kernel": name}
        try:
            spec = corpus_mod.load_kernel(name, directory)
            graph = infer_types(build_dataflow(spec))
            org = max_fuse(graph, args.cores)
            reuse = {}
            for out, _ in spec.outputs:
                uses = sum(
                    1 for stmt in spec.statements
                    if out in _reads(stmt.value)
                )
                if uses:
                    reuse[out] = uses
            entry.update(
                statements=len(spec.statements),
                ops=len(graph.ops),
                output_reuse=reuse,
                max_fuse=format_notation(org),
            )
            if not args.no_validate:
                extents = _parse_extents(args.extents, graph)
                err = _validate_organism(graph, org, extents, toolchain)
                entry["max_rel_error"] = err
                entry["validated"] = bool(err < 1e-10)
                if not entry["validated"]:
                    failed = True
        except (KernelSyntaxError, KernelSpecError, TypeCheckError,
                FileNotFoundError) as exc:
            entry["error"] = str(exc)
            failed = True
        except ToolchainError as exc:
            entry["error"] = str(exc)
            failed = True
        report.append(entry)
    print(json.dumps(report, indent=2))
    if failed:
        return EXIT_KERNEL
    return 0


def _reads(expr) -> set[str]:
    from .lang import Transpose, Var

    if isinstance(expr, Var):
        return {expr.name}
    if isinstance(expr, Transpose):
        return _reads(expr.operand)
    return _reads(expr.left) | _reads(expr.right)


# ---------------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--cores", type=int, default=8,
                   help="core count for partitioning and thread sweeps")
    p.add_argument("--extents", default="1000,1000",
                   help="problem extents, comma separated (M,N)")
    p.add_argument("--cc", default=None, help="C compiler (env MATFUSE_CC)")
    p.add_argument("--cc-template", default="",
                   help="compile command template with {cc} {src} {bin}")
    p.add_argument("--no-validate", action="store_true",
                   help="skip reference validation of written C")
    p.add_argument("--no-prune", action="store_true",
                   help="disable the shared-operand fusion pruning heuristic")


def build_parser() -> _Parser:
    parser = _Parser(prog="matfuse",
                     description="fused matrix-algebra kernel compiler "
                                 "and autotuner")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="emit C for one kernel")
    p.add_argument("kernel", help="kernel .bto file")
    p.add_argument("--organism", default=None,
                   help="fuse-set notation; default: max-fuse result")
    p.add_argument("-o", "--output", default="kernel.c")
    _add_common(p)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("search", help="run a search strategy")
    p.add_argument("kernel")
    p.add_argument("--strategy", choices=STRATEGIES, default="mfga")
    p.add_argument("--fitness", choices=("analytic", "empirical"),
                   default="analytic")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=None,
                   help="max unique fitness evaluations")
    p.add_argument("--generations", type=int, default=50)
    p.add_argument("--population", type=int, default=20)
    p.add_argument("--tournament", type=int, default=2)
    p.add_argument("--threads-mode", choices=("const", "global", "exhaustive"),
                   default="global")
    p.add_argument("--max-ops", type=int, default=4,
                   help="exhaustive/orthogonal enumeration op limit")
    p.add_argument("--reps", type=int, default=5,
                   help="timing repetitions for empirical fitness")
    p.add_argument("--out-dir", default="search-out")
    _add_common(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("enumerate", help="list every legal organism")
    p.add_argument("kernel")
    p.add_argument("--max-ops", type=int, default=4)
    p.add_argument("--max-threads", type=int, default=8)
    p.add_argument("--threads-mode", choices=("const", "global", "exhaustive"),
                   default="global")
    p.add_argument("--fusion-only", action="store_true",
                   help="enumerate loop fusion only, no partitions")
    p.add_argument("--count-only", action="store_true")
    p.add_argument("--digit-space", action="store_true",
                   help="also print the legacy digit-encoding size")
    _add_common(p)
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("corpus", help="check the bundled kernels")
    p.add_argument("--kernel", default=None, help="run one kernel only")
    p.add_argument("--corpus-dir", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_corpus)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING
    )
    try:
        return args.func(args)
    except (KernelSyntaxError, KernelSpecError, TypeCheckError,
            NotationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_KERNEL
    except ToolchainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOOLCHAIN
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
