"""Command-line surface.

Subcommands: run, preset, globalize, trace-diff, report.
Exit status: 0 success, 1 runtime error, 2 validation or diagnostic abort.
"""

import argparse
import os
import sys

from . import stats as stats_mod
from . import trace as trace_mod
from .globalizer import TransformConfig, TransformError, globalize_file
from .globalizer.tokenizer import TokenizeError
from .runner import run_scenario
from .scenario import ScenarioError, dump_scenario, load_scenario, preset
from .wire import parse_ipv4

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    result = run_scenario(scenario, out_dir=out_dir, seed=args.seed)
    sys.stdout.write(stats_mod.report([result.flows]))
    print(f"event-log digest: {result.digest}")
    print(f"stats: {os.path.join(out_dir, 'stats.csv')}")
    for path in result.trace_paths:
        print(f"trace: {path}")
    return EXIT_OK


def _cmd_preset(args) -> int:
    scenarios = preset(args.name)
    single = not isinstance(scenarios, list)
    if single:
        scenarios = [scenarios]
    if args.out is None:
        for index, s in enumerate(scenarios):
            if not single:
                print(f"# variant {index}")
            sys.stdout.write(dump_scenario(s))
        return EXIT_OK
    os.makedirs(args.out, exist_ok=True)
    for index, s in enumerate(scenarios):
        name = args.name if single else f"{args.name}-{index}"
        path = os.path.join(args.out, f"{name}.scn")
        with open(path, "w", encoding="utf-8") as f:
            f.write(dump_scenario(s))
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_globalize(args) -> int:
    config = TransformConfig(
        dim_symbol=args.dim,
        accessor=args.accessor,
        prefix=args.prefix,
        include=tuple(args.include) if args.include else None,
        exclude=tuple(args.exclude),
        init_fn_name=args.init_fn,
    )
    try:
        report = globalize_file(args.infile, args.outfile, config)
    except (TransformError, TokenizeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    for name, count in report.transformed.items():
        print(f"REWROTE {name} {count} sites")
    for note in report.skipped:
        print(f"SKIPPED {note.name} {note.reason}")
    for diag in report.diagnostics:
        print(f"SKIPPED - {diag}")
    return EXIT_OK


def _cmd_trace_diff(args) -> int:
    records_a = trace_mod.trace_read(args.a)
    records_b = trace_mod.trace_read(args.b)
    endpoint = args.endpoint_a
    if endpoint is None:
        if not records_a:
            endpoint = "0.0.0.0"
        else:
            ip, reason = parse_ipv4(records_a[0][1])
            if ip is None:
                raise trace_mod.TraceError(f"cannot infer endpoint: {reason}")
            endpoint = ip.src
    normalized_a = trace_mod.normalize(records_a, endpoint)
    normalized_b = trace_mod.normalize(records_b, endpoint)
    verdict = trace_mod.trace_compare(normalized_a, normalized_b)
    if isinstance(verdict, trace_mod.TracesEqual):
        print(f"equal ({verdict.length} packets)")
        return EXIT_OK
    if isinstance(verdict, trace_mod.FirstDivergence):
        print(f"first divergence at index {verdict.index}:")
        print(f"  a: {verdict.a_packet}")
        print(f"  b: {verdict.b_packet}")
    else:
        print(f"length mismatch: {verdict.len_a} vs {verdict.len_b} packets")
    return EXIT_RUNTIME


def _cmd_report(args) -> int:
    tables = []
    for path in args.files:
        with open(path, "r", encoding="utf-8") as f:
            tables.append(stats_mod.parse_csv(f.read()))
    text = stats_mod.report(tables)
    sys.stdout.write(text)
    if args.csv:
        rows = [r for t in tables for r in t]
        with open(args.csv, "w", encoding="utf-8") as f:
            f.write(stats_mod.render_csv(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uipsim",
        description="Deterministic simulation cradle for constrained TCP/IP stacks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario file")
    p_run.add_argument("scenario")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default="out")
    p_run.set_defaults(fn=_cmd_run)

    p_preset = sub.add_parser("preset", help="emit a canonical scenario")
    p_preset.add_argument("name")
    p_preset.add_argument("--out", default=None)
    p_preset.set_defaults(fn=_cmd_preset)

    p_glob = sub.add_parser("globalize", help="virtualize C file-scope globals")
    p_glob.add_argument("--in", dest="infile", required=True)
    p_glob.add_argument("--out", dest="outfile", required=True)
    p_glob.add_argument("--dim", default="NUM_STACKS")
    p_glob.add_argument("--accessor", default="get_stack_id()")
    p_glob.add_argument("--prefix", default="global_")
    p_glob.add_argument("--exclude", action="append", default=[])
    p_glob.add_argument("--include", action="append", default=[])
    p_glob.add_argument("--init-fn", dest="init_fn", default="globaliser_init_globals")
    p_glob.set_defaults(fn=_cmd_globalize)

    p_diff = sub.add_parser("trace-diff", help="compare two pcap traces behaviorally")
    p_diff.add_argument("a")
    p_diff.add_argument("b")
    p_diff.add_argument("--endpoint-a", default=None)
    p_diff.set_defaults(fn=_cmd_trace_diff)

    p_report = sub.add_parser("report", help="tabulate stats CSV files")
    p_report.add_argument("files", nargs="+")
    p_report.add_argument("--csv", default=None)
    p_report.set_defaults(fn=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ScenarioError, stats_mod.SchemaMismatch, trace_mod.TraceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
