"""Spawning and tearing down a live cluster for a scenario.

Each node in the scenario becomes one `discedge node` subprocess with a
generated config file. Ports are allocated by binding to port 0 first;
the window between closing the probe socket and the node binding is
accepted, since the cluster runs on localhost under test control.
"""

from __future__ import annotations

import logging
import os
import socket
import subprocess
import sys
import tempfile
import time

import yaml

from .client import LiveTransport
from .errors import HarnessError
from .scenario import ScenarioConfig, resolve_vocab_path

log = logging.getLogger(__name__)

HEALTH_TIMEOUT_S = 15.0
_POLL_S = 0.1


def free_port() -> int:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


class LiveCluster:
    """Running node processes plus everything needed to reach and stop them."""

    def __init__(self, scenario: ScenarioConfig, workdir: str | None = None):
        self.scenario = scenario
        self._own_workdir = workdir is None
        self.workdir = workdir or tempfile.mkdtemp(prefix="discedge-cluster-")
        self.endpoints: dict[str, tuple[str, int]] = {}
        self.sync_endpoints: dict[str, tuple[str, int]] = {}
        self.procs: dict[str, subprocess.Popen] = {}
        self._spawn()

    # -- lifecycle --

    def _spawn(self) -> None:
        node_ids = self.scenario.node_ids
        for node_id in node_ids:
            self.endpoints[node_id] = ("127.0.0.1", free_port())
            self.sync_endpoints[node_id] = ("127.0.0.1", free_port())
        vocab_path = resolve_vocab_path(self.scenario.vocab, self.scenario.base_dir)
        for spec in self.scenario.nodes:
            node_id = spec.node_id
            peers = [
                {"node_id": other, "sync": "%s:%d" % self.sync_endpoints[other]}
                for other in node_ids if other != node_id
            ]
            config = {
                "node_id": node_id,
                "profile": spec.profile,
                "listen": "%s:%d" % self.endpoints[node_id],
                "sync_listen": "%s:%d" % self.sync_endpoints[node_id],
                "policy": {
                    "mode": self.scenario.policy.mode,
                    "max_retries": self.scenario.policy.max_retries,
                    "backoff_ms": self.scenario.policy.backoff_ms,
                },
                "session_ttl_s": self.scenario.session_ttl_s,
                "peers": peers,
                "models": [{
                    "name": self.scenario.model_name,
                    "vocab": vocab_path,
                    "keygroup": list(node_ids),
                }],
            }
            config_path = os.path.join(self.workdir, f"node-{node_id}.yaml")
            with open(config_path, "w", encoding="utf-8") as fh:
                yaml.safe_dump(config, fh, sort_keys=False)
            log_path = os.path.join(self.workdir, f"node-{node_id}.log")
            log_file = open(log_path, "w", encoding="utf-8")
            proc = subprocess.Popen(
                [sys.executable, "-m", "discedge", "node", "--config", config_path],
                stdout=log_file, stderr=subprocess.STDOUT,
            )
            log_file.close()
            self.procs[node_id] = proc
        try:
            self.wait_healthy()
        except Exception:
            self.stop()
            raise

    def wait_healthy(self, timeout_s: float = HEALTH_TIMEOUT_S) -> None:
        deadline = time.monotonic() + timeout_s
        pending = set(self.endpoints)
        while pending:
            if time.monotonic() > deadline:
                raise HarnessError(
                    f"nodes never became healthy: {sorted(pending)} "
                    f"(logs in {self.workdir})")
            for node_id in sorted(pending):
                proc = self.procs[node_id]
                if proc.poll() is not None:
                    raise HarnessError(
                        f"node {node_id} exited with code {proc.returncode} "
                        f"(log in {self.workdir})")
                if self._healthy(node_id):
                    pending.discard(node_id)
            if pending:
                time.sleep(_POLL_S)

    def _healthy(self, node_id: str) -> bool:
        try:
            transport = LiveTransport({node_id: self.endpoints[node_id]},
                                      timeout_s=2.0)
            try:
                reply, _ = transport(node_id, {"type": "health"})
            finally:
                transport.close()
        except OSError:
            return False
        return reply.get("type") == "health_ok"

    def kill_node(self, node_id: str) -> None:
        """Hard-stop one node (fault injection)."""
        proc = self.procs.get(node_id)
        if proc is not None and proc.poll() is None:
            proc.kill()
            proc.wait(timeout=10)

    def stop(self) -> None:
        for node_id, proc in self.procs.items():
            if proc.poll() is not None:
                continue
            try:
                transport = LiveTransport({node_id: self.endpoints[node_id]},
                                          timeout_s=2.0)
                try:
                    transport(node_id, {"type": "shutdown"})
                finally:
                    transport.close()
            except Exception:
                log.debug("shutdown message to %s failed; will kill", node_id)
        deadline = time.monotonic() + 5.0
        for node_id, proc in self.procs.items():
            remaining = max(deadline - time.monotonic(), 0.1)
            try:
                proc.wait(timeout=remaining)
            except subprocess.TimeoutExpired:
                log.warning("node %s ignored shutdown; killing", node_id)
                proc.kill()
                proc.wait(timeout=10)

    def __enter__(self) -> "LiveCluster":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()


def spawn_live_cluster(scenario: ScenarioConfig, workdir: str | None = None) -> LiveCluster:
    """Start one node process per scenario node; health-checked before return."""
    return LiveCluster(scenario, workdir=workdir)
