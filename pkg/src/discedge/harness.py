"""Scenario runner: builds worlds, replays conversations, collects metrics.

A scenario is replayed once per (mode, repeat) pair. Simulated runs build a
fresh in-process world each time, so repeats are independent and the whole
report is a pure function of the scenario seed. Live runs reuse the already
spawned node processes and isolate repeats by session id instead.

Metric rows are one per attempted turn. Response time is what the client
observed (request sent to reply received, on the run's clock), tokens per
second uses the engine's inference time only, and sync byte columns are
cumulative per directed node pair at the moment the reply arrived. The
write-back traffic of the final turn lands after that reply, so each run
also records settled totals taken after the world goes quiet.
"""

from __future__ import annotations

import logging
import statistics
import time
from dataclasses import dataclass, field

from .client import ClientSession, ClientTurnMetrics, SimTransport
from .context import GenerationParams
from .engine import PROFILES, MockEngine
from .errors import ComparisonError, HarnessError, RequestError, RoutingError
from .node import ContextManagerNode, NodeConfig, ConsistencyPolicy
from .scenario import ScenarioConfig
from .store import ReplicatedStore
from .transport import LinkSpec, SimClock, SimNetwork
from .tokenizer import Vocab

log = logging.getLogger(__name__)

CLIENT_ENDPOINT = "client"

# Virtual-time bound for post-run settling; generous next to the scenario
# itself, which finishes in a few simulated seconds.
SETTLE_MAX_MS = 60_000.0


def derive_seed(base_seed: int, mode_index: int, repeat: int) -> int:
    """Stable per-run seed for the world's jitter RNG."""
    return (base_seed * 1_000_003 + mode_index * 8191 + repeat * 127) & 0x7FFFFFFF


@dataclass
class TurnRecord:
    """One attempted turn in one run."""

    mode: str
    repeat: int
    turn: int
    node_id: str
    request_bytes: int
    response_bytes: int = 0
    response_time_ms: float = 0.0
    tokens_per_second: float = 0.0
    tokens_generated: int = 0
    consistency: str = ""
    retries: int = 0
    tokenize_ms: float = 0.0
    inference_ms: float = 0.0
    total_ms: float = 0.0
    error: str = ""
    sync_bytes: dict[str, int] = field(default_factory=dict)
    text: str = ""


@dataclass
class RunSummary:
    """Per (mode, repeat) totals, collected after the world settled."""

    mode: str
    repeat: int
    turns_attempted: int
    failed_turns: tuple[int, ...]
    total_request_bytes: int
    sync_totals: dict[str, int]
    sync_total_bytes: int
    duration_ms: float


@dataclass
class MetricsReport:
    """Everything one `run_scenario` call measured."""

    scenario_name: str
    model_name: str
    transport: str
    seed: int
    repeats: int
    modes: tuple[str, ...]
    node_ids: tuple[str, ...]
    rows: list[TurnRecord] = field(default_factory=list)
    runs: list[RunSummary] = field(default_factory=list)

    def rows_for(self, mode: str | None = None, repeat: int | None = None,
                 node_id: str | None = None) -> list[TurnRecord]:
        out = []
        for row in self.rows:
            if mode is not None and row.mode != mode:
                continue
            if repeat is not None and row.repeat != repeat:
                continue
            if node_id is not None and row.node_id != node_id:
                continue
            out.append(row)
        return out

    def runs_for(self, mode: str) -> list[RunSummary]:
        return [run for run in self.runs if run.mode == mode]

    def per_turn(self, mode: str, metric: str) -> dict[int, tuple[float, float, float]]:
        """Per turn across repeats: (min, median, max) of one metric."""
        by_turn: dict[int, list[float]] = {}
        for row in self.rows_for(mode=mode):
            by_turn.setdefault(row.turn, []).append(float(getattr(row, metric)))
        return {
            turn: (min(vals), statistics.median(vals), max(vals))
            for turn, vals in sorted(by_turn.items())
        }

    @property
    def failed_turn_count(self) -> int:
        return sum(len(run.failed_turns) for run in self.runs)


# -- simulated world ----------------------------------------------------------

class SimWorld:
    """One cluster on a virtual network, fully wired for a scenario."""

    def __init__(self, scenario: ScenarioConfig, seed: int, vocab: Vocab | None = None):
        self.scenario = scenario
        self.network = SimNetwork(seed=seed)
        self.clock = SimClock(self.network)
        self.vocab = vocab if vocab is not None else scenario.load_vocab()
        self.nodes: dict[str, ContextManagerNode] = {}
        self.sync_pairs: list[tuple[str, str]] = []

        node_ids = scenario.node_ids
        for node_id in node_ids:
            self.network.add_link(LinkSpec(
                CLIENT_ENDPOINT, node_id,
                scenario.client_latency_ms, scenario.jitter_ms))
            self.network.add_link(LinkSpec(
                node_id, CLIENT_ENDPOINT,
                scenario.client_latency_ms, scenario.jitter_ms))
        for src in node_ids:
            for dst in node_ids:
                if src != dst:
                    self.network.add_link(LinkSpec(
                        src, dst,
                        scenario.inter_node_latency_ms, scenario.jitter_ms))
                    self.sync_pairs.append((src, dst))

        for spec in scenario.nodes:
            profile = PROFILES.get(spec.profile)
            if profile is None:
                raise HarnessError(f"unknown hardware profile {spec.profile!r}")
            engine = MockEngine(profile, self.clock)
            store = ReplicatedStore(spec.node_id, now_ms=self.network_now)
            store.on_send = self._sync_sender(spec.node_id)
            config = NodeConfig(
                node_id=spec.node_id,
                profile=spec.profile,
                policy=scenario.policy,
                session_ttl_s=scenario.session_ttl_s,
                models=(scenario.model_id,),
            )
            node = ContextManagerNode(
                config, engine, store, self.clock, defer=self.network.schedule)
            node.serve_model(scenario.model_id, self.vocab, node_ids)
            self.nodes[spec.node_id] = node
            self.network.register(spec.node_id, self._node_handler(node))

        self.transport = SimTransport(self.network, CLIENT_ENDPOINT)

    def network_now(self) -> float:
        return self.network.now_ms

    def _sync_sender(self, node_id: str):
        def send(peer: str, frame: bytes) -> None:
            self.network.send(node_id, peer, frame)
        return send

    def _node_handler(self, node: ContextManagerNode):
        from .node import decode_message, encode_message
        from .store import ReplicaUpdate, SYNC_MAGIC

        def handle(src: str, frame: bytes) -> None:
            if frame[:4] == SYNC_MAGIC:
                node.store.apply_update(
                    ReplicaUpdate.decode(frame), from_node=src, frame_len=len(frame))
                return
            reply = node.handle_message(decode_message(frame))
            if reply is not None:
                self.network.send(node.config.node_id, src, encode_message(reply))
        return handle

    def cumulative_sync_bytes(self) -> dict[str, int]:
        return {
            f"{src}->{dst}": self.network.link_stats(src, dst).bytes_sent
            for src, dst in self.sync_pairs
        }

    def settle(self) -> None:
        self.network.drain(SETTLE_MAX_MS)


# -- running ------------------------------------------------------------------

def run_scenario(
    scenario: ScenarioConfig,
    transport: str = "sim",
    out_dir: str | None = None,
    endpoints: dict[str, tuple[str, int]] | None = None,
) -> MetricsReport:
    """Replay the scenario once per (mode, repeat) and collect metrics.

    `transport` is "sim" (fresh virtual world per run) or "live" (node
    processes already running at `endpoints`). With `out_dir` set, report
    files are written there as a side effect.
    """
    report = MetricsReport(
        scenario_name=scenario.name,
        model_name=scenario.model_name,
        transport=transport,
        seed=scenario.seed,
        repeats=scenario.repeats,
        modes=tuple(scenario.modes),
        node_ids=scenario.node_ids,
    )
    if transport == "sim":
        vocab = scenario.load_vocab()
        for mode_index, mode in enumerate(scenario.modes):
            for repeat in range(scenario.repeats):
                _run_sim_once(scenario, mode, mode_index, repeat, vocab, report)
    elif transport == "live":
        if not endpoints:
            raise HarnessError("live runs need node endpoints")
        _run_live(scenario, endpoints, report)
    else:
        raise HarnessError(f"unknown transport {transport!r}")

    if out_dir is not None:
        from .report import write_report
        write_report(report, out_dir)
    return report


def _replay(
    scenario: ScenarioConfig,
    session: ClientSession,
    mode: str,
    repeat: int,
    report: MetricsReport,
    sample_sync,
) -> list[int]:
    """Send every scenario message through one session; returns failed turns.

    A failed attempt leaves the client turn counter where it was, so the
    next message goes out under the same turn number; the failure is still
    its own metric row.
    """
    failed: list[int] = []
    for prompt in scenario.messages:
        attempted_turn = session.turn
        error = ""
        rows_before = len(session.metrics)
        try:
            session.ask(prompt)
        except RequestError as exc:
            error = exc.code
            failed.append(attempted_turn)
        except (RoutingError, OSError) as exc:
            # The node never answered (dead process, dropped link, missing
            # route). A fault run must still produce a complete report, so
            # the attempt becomes its own failed row.
            error = "unreachable"
            failed.append(attempted_turn)
            log.warning("%s turn %d unreachable: %s", mode, attempted_turn, exc)
        if len(session.metrics) > rows_before:
            row = session.metrics[-1]
        else:
            # Transport failures raise before the client records anything.
            row = ClientTurnMetrics(
                turn=attempted_turn, node_id="", mode=mode, request_bytes=0
            )
        report.rows.append(TurnRecord(
            mode=mode,
            repeat=repeat,
            turn=attempted_turn,
            node_id=row.node_id,
            request_bytes=row.request_bytes,
            response_bytes=row.response_bytes,
            response_time_ms=row.rtt_ms,
            tokens_per_second=row.tokens_per_second,
            tokens_generated=row.tokens_generated,
            consistency=row.consistency,
            retries=row.retries,
            tokenize_ms=row.tokenize_ms,
            inference_ms=row.inference_ms,
            total_ms=row.total_ms,
            error=error,
            sync_bytes=sample_sync(),
            text=row.text,
        ))
    return failed


def _run_sim_once(
    scenario: ScenarioConfig,
    mode: str,
    mode_index: int,
    repeat: int,
    vocab: Vocab,
    report: MetricsReport,
) -> None:
    world = SimWorld(scenario, derive_seed(scenario.seed, mode_index, repeat), vocab)
    session = ClientSession(
        model_id=scenario.model_id,
        user_id=scenario.user_id,
        session_id=scenario.session_id,
        mode=mode,
        params=scenario.params,
        transport=world.transport,
        roam_schedule=scenario.mobility_schedule,
    )
    start_ms = world.network.now_ms
    failed = _replay(scenario, session, mode, repeat, report,
                     world.cumulative_sync_bytes)
    world.settle()
    totals = world.cumulative_sync_bytes()
    report.runs.append(RunSummary(
        mode=mode,
        repeat=repeat,
        turns_attempted=len(scenario.messages),
        failed_turns=tuple(failed),
        total_request_bytes=sum(
            r.request_bytes for r in report.rows_for(mode=mode, repeat=repeat)),
        sync_totals=totals,
        sync_total_bytes=sum(totals.values()),
        duration_ms=world.network.now_ms - start_ms,
    ))


def _run_live(
    scenario: ScenarioConfig,
    endpoints: dict[str, tuple[str, int]],
    report: MetricsReport,
) -> None:
    from .client import LiveTransport

    transport = LiveTransport(endpoints)
    try:
        for mode in scenario.modes:
            for repeat in range(scenario.repeats):
                _run_live_once(scenario, mode, repeat, transport, report)
    finally:
        transport.close()


def _live_sync_totals(transport, node_ids) -> dict[str, int]:
    # Every directed pair is present (zero until traffic flows) so live
    # reports have the same sync columns a simulated run would.
    totals: dict[str, int] = {
        f"{src}->{dst}": 0
        for src in node_ids for dst in node_ids if src != dst
    }
    for node_id in node_ids:
        try:
            reply, _ = transport(node_id, {"type": "counters"})
        except (RoutingError, OSError):
            # A dead node reports nothing; its last known sends are simply
            # missing from the totals rather than aborting the run.
            continue
        for peer, count in reply.get("sync_bytes_sent", {}).items():
            totals[f"{node_id}->{peer}"] = count
    return totals


def _run_live_once(
    scenario: ScenarioConfig,
    mode: str,
    repeat: int,
    transport,
    report: MetricsReport,
) -> None:
    for node_id in scenario.node_ids:
        try:
            transport(node_id, {"type": "reset_counters"})
        except (RoutingError, OSError):
            log.warning("node %s unreachable during counter reset", node_id)
    # Live repeats share one cluster; a per-run session id keeps each run's
    # context (and its eventual tombstone) out of the next run's way.
    session = ClientSession(
        model_id=scenario.model_id,
        user_id=scenario.user_id,
        session_id=f"{scenario.session_id}-{mode}-r{repeat}",
        mode=mode,
        params=scenario.params,
        transport=transport,
        roam_schedule=scenario.mobility_schedule,
    )
    start = time.monotonic()
    failed = _replay(
        scenario, session, mode, repeat, report,
        lambda: _live_sync_totals(transport, scenario.node_ids))
    time.sleep(0.2)  # let the last write-back replicate before totals
    totals = _live_sync_totals(transport, scenario.node_ids)
    report.runs.append(RunSummary(
        mode=mode,
        repeat=repeat,
        turns_attempted=len(scenario.messages),
        failed_turns=tuple(failed),
        total_request_bytes=sum(
            r.request_bytes for r in report.rows_for(mode=mode, repeat=repeat)),
        sync_totals=totals,
        sync_total_bytes=sum(totals.values()),
        duration_ms=(time.monotonic() - start) * 1000.0,
    ))


# -- comparison ---------------------------------------------------------------

TURN_METRICS = ("response_time_ms", "tokens_per_second", "request_bytes")


@dataclass(frozen=True)
class ComparisonRow:
    metric: str
    node_id: str
    base_mode: str
    other_mode: str
    base_median: float
    other_median: float
    delta_pct: float


def _median_for(report: MetricsReport, mode: str, metric: str, node_id: str) -> float | None:
    if node_id == "all":
        rows = report.rows_for(mode=mode)
    else:
        rows = report.rows_for(mode=mode, node_id=node_id)
    values = [float(getattr(r, metric)) for r in rows if not r.error]
    if not values:
        return None
    return statistics.median(values)


def compare_modes(report: MetricsReport) -> list[ComparisonRow]:
    """Median per-metric deltas between every mode pair, per serving node.

    The sign convention is (other - base) / base, base being the mode
    listed first in the report, so a negative delta means the later mode
    was smaller (faster, lighter) on that metric.
    """
    modes = [m for m in report.modes if report.rows_for(mode=m)]
    if len(modes) < 2:
        raise ComparisonError("comparison needs at least two modes in the report")
    nodes = ("all",) + tuple(report.node_ids)
    rows: list[ComparisonRow] = []
    for i, base in enumerate(modes):
        for other in modes[i + 1:]:
            for metric in TURN_METRICS:
                for node_id in nodes:
                    base_med = _median_for(report, base, metric, node_id)
                    other_med = _median_for(report, other, metric, node_id)
                    if base_med is None or other_med is None:
                        continue
                    delta = (
                        (other_med - base_med) / base_med * 100.0
                        if base_med else 0.0
                    )
                    rows.append(ComparisonRow(
                        metric, node_id, base, other, base_med, other_med, delta))
            base_sync = statistics.median(
                [run.sync_total_bytes for run in report.runs_for(base)] or [0])
            other_sync = statistics.median(
                [run.sync_total_bytes for run in report.runs_for(other)] or [0])
            delta = (
                (other_sync - base_sync) / base_sync * 100.0 if base_sync else 0.0
            )
            rows.append(ComparisonRow(
                "sync_total_bytes", "all", base, other,
                float(base_sync), float(other_sync), delta))
    return rows
