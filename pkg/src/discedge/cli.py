"""Command line interface.

Subcommands:
  node         run one node process from a YAML config
  run          replay a scenario (simulated by default, --live for sockets)
  compare      recompute the mode comparison from a report directory
  vocab build  build a vocabulary file from a text corpus

`DISCEDGE_SEED` overrides the scenario seed. `run` exits nonzero when any
turn failed under the strong consistency policy.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .errors import DisCEdgeError

log = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="discedge",
        description="Distributed tokenized-context management for edge LLM serving.",
    )
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_node = sub.add_parser("node", help="run one node process")
    p_node.add_argument("--config", required=True, help="node YAML config file")

    p_run = sub.add_parser("run", help="replay a scenario and write a report")
    p_run.add_argument("--scenario", required=True,
                       help="scenario YAML path or packaged name (default, mobility)")
    group = p_run.add_mutually_exclusive_group()
    group.add_argument("--sim", action="store_true",
                       help="simulated transport (default)")
    group.add_argument("--live", action="store_true",
                       help="spawn real node processes and use TCP")
    p_run.add_argument("--out", help="report output directory")

    p_cmp = sub.add_parser("compare", help="recompute mode comparison for a report")
    p_cmp.add_argument("report_dir", help="directory written by `discedge run --out`")

    p_vocab = sub.add_parser("vocab", help="vocabulary tools")
    vocab_sub = p_vocab.add_subparsers(dest="vocab_command", required=True)
    p_build = vocab_sub.add_parser("build", help="build a vocab file from a corpus")
    p_build.add_argument("corpus", nargs="+", help="UTF-8 text file(s)")
    p_build.add_argument("-o", "--output", required=True, help="vocab file to write")
    p_build.add_argument("--max-words", type=int, default=2000,
                         help="how many distinct words to keep (default 2000)")
    return parser


def _seed_override() -> int | None:
    raw = os.environ.get("DISCEDGE_SEED")
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise DisCEdgeError(f"DISCEDGE_SEED must be an integer, got {raw!r}")


def cmd_node(args: argparse.Namespace) -> int:
    from .server import run_node
    run_node(args.config)
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    from .harness import run_scenario
    from .scenario import load_scenario

    scenario = load_scenario(args.scenario, seed_override=_seed_override())
    transport = "live" if args.live else "sim"
    if transport == "live":
        from .cluster import spawn_live_cluster
        with spawn_live_cluster(scenario) as cluster:
            report = run_scenario(scenario, transport="live",
                                  out_dir=args.out, endpoints=cluster.endpoints)
    else:
        report = run_scenario(scenario, transport="sim", out_dir=args.out)

    for run in report.runs:
        status = "ok" if not run.failed_turns else (
            "FAILED turns " + ", ".join(str(t) for t in run.failed_turns))
        print(f"{run.mode} repeat {run.repeat}: {run.turns_attempted} turns, "
              f"{run.sync_total_bytes} sync bytes, {status}")
    if args.out:
        print(f"report written to {args.out}")
    if scenario.policy.mode == "strong" and report.failed_turn_count:
        print(f"{report.failed_turn_count} turn(s) failed under strong policy",
              file=sys.stderr)
        return 1
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    from .harness import compare_modes
    from .report import COMPARISON_FILE, read_report, write_comparison

    report = read_report(args.report_dir)
    rows = compare_modes(report)
    write_comparison(rows, os.path.join(args.report_dir, COMPARISON_FILE))
    width = max(len(r.metric) for r in rows)
    for row in rows:
        print(f"{row.metric:<{width}} node={row.node_id:<4} "
              f"{row.base_mode} -> {row.other_mode}: "
              f"{row.base_median:.2f} -> {row.other_median:.2f} "
              f"({row.delta_pct:+.1f}%)")
    return 0


def cmd_vocab_build(args: argparse.Namespace) -> int:
    from .vocabbuild import build_vocab_entries, write_vocab

    texts = []
    for path in args.corpus:
        with open(path, "r", encoding="utf-8") as fh:
            texts.append(fh.read())
    entries = build_vocab_entries(texts, max_words=args.max_words)
    write_vocab(entries, args.output)
    print(f"wrote {len(entries)} entries to {args.output}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "node":
            return cmd_node(args)
        if args.command == "run":
            return cmd_run(args)
        if args.command == "compare":
            return cmd_compare(args)
        if args.command == "vocab":
            return cmd_vocab_build(args)
    except DisCEdgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
