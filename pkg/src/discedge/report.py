"""Report files: metric CSVs, a Markdown summary, and rendered figures.

A report directory holds one CSV per headline metric in plot-ready shape
(turn column, then min/median/max per mode), a full per-turn detail CSV,
per-run totals, the mode comparison table, `summary.md`, and PNG charts of
the same series. Nothing in the directory carries wall-clock timestamps,
so two runs of the same scenario and seed produce byte-identical files.

With three repeats a confidence interval has no statistical footing, so
aggregates are reported as min/median/max and labeled that way.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import statistics

from .errors import ComparisonError, HarnessError
from .harness import (
    TURN_METRICS,
    ComparisonRow,
    MetricsReport,
    RunSummary,
    TurnRecord,
    compare_modes,
)

log = logging.getLogger(__name__)

META_FILE = "meta.json"
PER_TURN_FILE = "per_turn.csv"
RUNS_FILE = "runs.csv"
COMPARISON_FILE = "comparison.csv"
SUMMARY_FILE = "summary.md"

_METRIC_LABELS = {
    "response_time_ms": "Response time (ms)",
    "tokens_per_second": "Tokens per second",
    "request_bytes": "Request size (bytes)",
    "sync_bytes": "Cumulative sync traffic (bytes)",
}


def _fmt(value: float) -> str:
    """Fixed-precision float cell; trims to int text when exact."""
    if float(value) == int(value):
        return str(int(value))
    return f"{value:.6f}"


def _sync_pairs(report: MetricsReport) -> list[str]:
    pairs: set[str] = set()
    for row in report.rows:
        pairs.update(row.sync_bytes)
    for run in report.runs:
        pairs.update(run.sync_totals)
    return sorted(pairs)


def _pair_column(pair: str) -> str:
    return "sync_" + pair.replace("->", "_to_")


def write_report(report: MetricsReport, out_dir: str) -> None:
    """Write every report file into `out_dir` (created if missing)."""
    os.makedirs(out_dir, exist_ok=True)
    _write_meta(report, out_dir)
    _write_per_turn(report, out_dir)
    _write_runs(report, out_dir)
    for metric in TURN_METRICS:
        _write_metric_csv(report, metric, out_dir)
    _write_sync_csv(report, out_dir)
    try:
        comparison = compare_modes(report)
    except ComparisonError:
        comparison = []
    if comparison:
        write_comparison(comparison, os.path.join(out_dir, COMPARISON_FILE))
    _write_summary(report, comparison, out_dir)
    _write_figures(report, out_dir)
    log.info("report written to %s", out_dir)


def _write_meta(report: MetricsReport, out_dir: str) -> None:
    meta = {
        "scenario_name": report.scenario_name,
        "model_name": report.model_name,
        "transport": report.transport,
        "seed": report.seed,
        "repeats": report.repeats,
        "modes": list(report.modes),
        "node_ids": list(report.node_ids),
    }
    with open(os.path.join(out_dir, META_FILE), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_per_turn(report: MetricsReport, out_dir: str) -> None:
    pairs = _sync_pairs(report)
    header = [
        "mode", "repeat", "turn", "node", "request_bytes", "response_bytes",
        "response_time_ms", "tokens_per_second", "tokens_generated",
        "consistency", "retries", "tokenize_ms", "inference_ms", "total_ms",
        "error",
    ] + [_pair_column(p) for p in pairs]
    path = os.path.join(out_dir, PER_TURN_FILE)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in report.rows:
            writer.writerow([
                r.mode, r.repeat, r.turn, r.node_id, r.request_bytes,
                r.response_bytes, _fmt(r.response_time_ms),
                _fmt(r.tokens_per_second), r.tokens_generated,
                r.consistency, r.retries, _fmt(r.tokenize_ms),
                _fmt(r.inference_ms), _fmt(r.total_ms), r.error,
            ] + [r.sync_bytes.get(p, 0) for p in pairs])


def _write_runs(report: MetricsReport, out_dir: str) -> None:
    pairs = _sync_pairs(report)
    header = [
        "mode", "repeat", "turns_attempted", "failed_turns",
        "total_request_bytes", "sync_total_bytes", "duration_ms",
    ] + [_pair_column(p) for p in pairs]
    path = os.path.join(out_dir, RUNS_FILE)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for run in report.runs:
            writer.writerow([
                run.mode, run.repeat, run.turns_attempted,
                " ".join(str(t) for t in run.failed_turns),
                run.total_request_bytes, run.sync_total_bytes,
                _fmt(run.duration_ms),
            ] + [run.sync_totals.get(p, 0) for p in pairs])


def _write_metric_csv(report: MetricsReport, metric: str, out_dir: str) -> None:
    """Plot-ready: one row per turn, min/median/max columns per mode."""
    series = {mode: report.per_turn(mode, metric) for mode in report.modes}
    turns = sorted({t for per in series.values() for t in per})
    header = ["turn"]
    for mode in report.modes:
        header += [f"{mode}_min", f"{mode}_median", f"{mode}_max"]
    path = os.path.join(out_dir, f"{metric}.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for turn in turns:
            row = [turn]
            for mode in report.modes:
                lo, med, hi = series[mode].get(turn, (0.0, 0.0, 0.0))
                row += [_fmt(lo), _fmt(med), _fmt(hi)]
            writer.writerow(row)


def _write_sync_csv(report: MetricsReport, out_dir: str) -> None:
    """Per-turn cumulative sync bytes (median across repeats) per mode."""
    pairs = _sync_pairs(report)
    per_mode: dict[str, dict[int, tuple[float, float, float]]] = {}
    for mode in report.modes:
        by_turn: dict[int, list[float]] = {}
        for row in report.rows_for(mode=mode):
            by_turn.setdefault(row.turn, []).append(
                float(sum(row.sync_bytes.get(p, 0) for p in pairs)))
        per_mode[mode] = {
            t: (min(v), statistics.median(v), max(v))
            for t, v in sorted(by_turn.items())
        }
    turns = sorted({t for per in per_mode.values() for t in per})
    header = ["turn"]
    for mode in report.modes:
        header += [f"{mode}_min", f"{mode}_median", f"{mode}_max"]
    path = os.path.join(out_dir, "sync_bytes.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for turn in turns:
            row = [turn]
            for mode in report.modes:
                lo, med, hi = per_mode[mode].get(turn, (0.0, 0.0, 0.0))
                row += [_fmt(lo), _fmt(med), _fmt(hi)]
            writer.writerow(row)


def write_comparison(rows: list[ComparisonRow], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "metric", "node", "base_mode", "other_mode",
            "base_median", "other_median", "delta_pct",
        ])
        for row in rows:
            writer.writerow([
                row.metric, row.node_id, row.base_mode, row.other_mode,
                _fmt(row.base_median), _fmt(row.other_median),
                _fmt(row.delta_pct),
            ])


def _write_summary(report: MetricsReport, comparison: list[ComparisonRow],
                   out_dir: str) -> None:
    lines: list[str] = []
    lines.append(f"# Scenario report: {report.scenario_name}")
    lines.append("")
    lines.append(f"- model: `{report.model_name}`")
    lines.append(f"- transport: {report.transport}")
    lines.append(f"- seed: {report.seed}")
    lines.append(f"- modes: {', '.join(report.modes)}")
    lines.append(f"- repeats: {report.repeats}")
    lines.append(f"- nodes: {', '.join(report.node_ids)}")
    lines.append("")
    lines.append(
        f"Aggregates are min / median / max over {report.repeats} repeat(s); "
        "with so few repeats a confidence interval would be meaningless, so "
        "none is shown.")
    lines.append("")
    for metric in TURN_METRICS:
        label = _METRIC_LABELS.get(metric, metric)
        lines.append(f"## {label}")
        lines.append("")
        header = "| turn |" + "".join(f" {m} |" for m in report.modes)
        rule = "| ---: |" + " ---: |" * len(report.modes)
        lines.append(header)
        lines.append(rule)
        series = {mode: report.per_turn(mode, metric) for mode in report.modes}
        turns = sorted({t for per in series.values() for t in per})
        for turn in turns:
            cells = []
            for mode in report.modes:
                lo, med, hi = series[mode].get(turn, (0.0, 0.0, 0.0))
                if lo == hi:
                    cells.append(_fmt(med))
                else:
                    cells.append(f"{_fmt(med)} ({_fmt(lo)}..{_fmt(hi)})")
            lines.append(f"| {turn} |" + "".join(f" {c} |" for c in cells))
        lines.append("")
    lines.append("## Sync traffic (settled totals per run)")
    lines.append("")
    lines.append("| mode | repeat | total bytes | per pair |")
    lines.append("| --- | ---: | ---: | --- |")
    for run in report.runs:
        per_pair = ", ".join(
            f"{pair}: {count}" for pair, count in sorted(run.sync_totals.items()))
        lines.append(
            f"| {run.mode} | {run.repeat} | {run.sync_total_bytes} | {per_pair} |")
    lines.append("")
    failed = [(run.mode, run.repeat, run.failed_turns)
              for run in report.runs if run.failed_turns]
    lines.append("## Failed turns")
    lines.append("")
    if failed:
        for mode, repeat, turns in failed:
            turn_list = ", ".join(str(t) for t in turns)
            lines.append(f"- {mode} repeat {repeat}: turn(s) {turn_list}")
    else:
        lines.append("None.")
    lines.append("")
    if comparison:
        lines.append("## Mode comparison (medians, delta vs base mode)")
        lines.append("")
        lines.append("| metric | node | base | other | base median | other median | delta |")
        lines.append("| --- | --- | --- | --- | ---: | ---: | ---: |")
        for row in comparison:
            lines.append(
                f"| {row.metric} | {row.node_id} | {row.base_mode} | "
                f"{row.other_mode} | {_fmt(row.base_median)} | "
                f"{_fmt(row.other_median)} | {row.delta_pct:+.1f}% |")
        lines.append("")
    with open(os.path.join(out_dir, SUMMARY_FILE), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))


def _write_figures(report: MetricsReport, out_dir: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    pairs = _sync_pairs(report)
    panels = list(TURN_METRICS) + ["sync_bytes"]
    for metric in panels:
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        for mode in report.modes:
            if metric == "sync_bytes":
                per: dict[int, list[float]] = {}
                for row in report.rows_for(mode=mode):
                    per.setdefault(row.turn, []).append(
                        float(sum(row.sync_bytes.get(p, 0) for p in pairs)))
                series = {t: statistics.median(v) for t, v in per.items()}
            else:
                series = {t: med for t, (_, med, _) in
                          report.per_turn(mode, metric).items()}
            turns = sorted(series)
            ax.plot(turns, [series[t] for t in turns], marker="o", label=mode)
        ax.set_xlabel("turn")
        ax.set_ylabel(_METRIC_LABELS.get(metric, metric))
        ax.set_title(f"{report.scenario_name}: {_METRIC_LABELS.get(metric, metric)}")
        ax.legend()
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(os.path.join(out_dir, f"{metric}.png"), dpi=110)
        plt.close(fig)


# -- reading a report directory back ------------------------------------------

def read_report(report_dir: str) -> MetricsReport:
    """Rebuild a MetricsReport from report files (texts are not persisted)."""
    meta_path = os.path.join(report_dir, META_FILE)
    if not os.path.exists(meta_path):
        raise HarnessError(f"{report_dir} does not look like a report directory")
    with open(meta_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    report = MetricsReport(
        scenario_name=meta["scenario_name"],
        model_name=meta["model_name"],
        transport=meta["transport"],
        seed=meta["seed"],
        repeats=meta["repeats"],
        modes=tuple(meta["modes"]),
        node_ids=tuple(meta["node_ids"]),
    )
    with open(os.path.join(report_dir, PER_TURN_FILE), encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            sync = {
                col[len("sync_"):].replace("_to_", "->"): int(value)
                for col, value in rec.items()
                if col.startswith("sync_") and value != ""
            }
            report.rows.append(TurnRecord(
                mode=rec["mode"],
                repeat=int(rec["repeat"]),
                turn=int(rec["turn"]),
                node_id=rec["node"],
                request_bytes=int(rec["request_bytes"]),
                response_bytes=int(rec["response_bytes"]),
                response_time_ms=float(rec["response_time_ms"]),
                tokens_per_second=float(rec["tokens_per_second"]),
                tokens_generated=int(rec["tokens_generated"]),
                consistency=rec["consistency"],
                retries=int(rec["retries"]),
                tokenize_ms=float(rec["tokenize_ms"]),
                inference_ms=float(rec["inference_ms"]),
                total_ms=float(rec["total_ms"]),
                error=rec["error"],
                sync_bytes=sync,
            ))
    with open(os.path.join(report_dir, RUNS_FILE), encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            totals = {
                col[len("sync_"):].replace("_to_", "->"): int(value)
                for col, value in rec.items()
                if col.startswith("sync_") and not col.startswith("sync_total")
                and value != ""
            }
            failed = tuple(
                int(t) for t in rec["failed_turns"].split() if t)
            report.runs.append(RunSummary(
                mode=rec["mode"],
                repeat=int(rec["repeat"]),
                turns_attempted=int(rec["turns_attempted"]),
                failed_turns=failed,
                total_request_bytes=int(rec["total_request_bytes"]),
                sync_totals=totals,
                sync_total_bytes=int(rec["sync_total_bytes"]),
                duration_ms=float(rec["duration_ms"]),
            ))
    return report
