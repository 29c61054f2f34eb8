"""Scenario configuration: YAML loading, defaults, and packaged fixtures.

A scenario file keeps the conversational fixture at the top level (name,
model_name, user_id, messages) and everything the runner needs under a
`harness:` section: nodes and their hardware profiles, link latencies, the
mobility schedule, modes, repeats, seed, and generation parameters.

Two scenarios ship inside the package: `default` (a nine-turn session
pinned to one node of a two-node cluster, all three modes) and `mobility`
(the same messages roaming between two nodes on turns 3, 5 and 7).

Model names may contain `/` (registry-style names); storage keys must not,
so the loader derives a sanitized model id with `/` replaced by `_` and
uses the id everywhere internally. The original name is kept for display.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, replace
from importlib import resources

import yaml

from .context import MODE_CLIENT_SIDE, MODE_RAW, MODE_TOKENIZED, GenerationParams
from .errors import HarnessError
from .node import ConsistencyPolicy
from .tokenizer import Vocab, load_vocab

log = logging.getLogger(__name__)

PACKAGED_SCENARIOS = ("default", "mobility")
_VALID_MODES = (MODE_RAW, MODE_TOKENIZED, MODE_CLIENT_SIDE)


@dataclass(frozen=True)
class NodeSpec:
    node_id: str
    profile: str = "m2"


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    model_name: str
    user_id: str
    messages: tuple[str, ...]
    session_id: str = "session-1"
    seed: int = 123
    repeats: int = 3
    modes: tuple[str, ...] = (MODE_RAW, MODE_TOKENIZED, MODE_CLIENT_SIDE)
    params: GenerationParams = field(default_factory=GenerationParams)
    nodes: tuple[NodeSpec, ...] = (NodeSpec("a"), NodeSpec("b"))
    policy: ConsistencyPolicy = field(default_factory=ConsistencyPolicy)
    session_ttl_s: float = 3600.0
    client_latency_ms: float = 5.0
    inter_node_latency_ms: float = 5.0
    jitter_ms: float = 0.0
    mobility: tuple[tuple[int, str], ...] = ((1, "a"),)
    vocab: str = "default"
    base_dir: str = "."

    def __post_init__(self):
        if not self.messages:
            raise HarnessError("scenario needs at least one message")
        if self.repeats < 1:
            raise HarnessError("repeats must be >= 1")
        if not self.modes:
            raise HarnessError("scenario needs at least one mode")
        for mode in self.modes:
            if mode not in _VALID_MODES:
                raise HarnessError(f"unknown mode {mode!r}")
        if not self.nodes:
            raise HarnessError("scenario needs at least one node")
        node_ids = {n.node_id for n in self.nodes}
        if len(node_ids) != len(self.nodes):
            raise HarnessError("duplicate node ids")
        for _, node_id in self.mobility:
            if node_id not in node_ids:
                raise HarnessError(f"mobility schedule names unknown node {node_id!r}")
        if not self.mobility:
            raise HarnessError("mobility schedule needs at least one entry")

    @property
    def model_id(self) -> str:
        return self.model_name.replace("/", "_")

    @property
    def mobility_schedule(self) -> dict[int, str]:
        return dict(self.mobility)

    @property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(n.node_id for n in self.nodes)

    def load_vocab(self) -> Vocab:
        """Resolve and load the scenario's vocabulary, bound to model_id."""
        path = resolve_vocab_path(self.vocab, self.base_dir)
        vocab = load_vocab(path)
        return Vocab(model_id=self.model_id, entries=vocab.entries)


def resolve_vocab_path(name: str, base_dir: str = ".") -> str:
    """Map `default` to the packaged vocab, anything else to a file path."""
    if name == "default":
        return str(resources.files("discedge").joinpath("data/default.vocab"))
    if os.path.isabs(name):
        return name
    return os.path.join(base_dir, name)


def packaged_scenario_path(name: str) -> str:
    return str(resources.files("discedge").joinpath(f"data/scenario_{name}.yaml"))


def load_scenario(source: str, seed_override: int | None = None) -> ScenarioConfig:
    """Load a scenario from a YAML file path or a packaged scenario name."""
    if source in PACKAGED_SCENARIOS and not os.path.exists(source):
        path = packaged_scenario_path(source)
    else:
        path = source
    if not os.path.exists(path):
        raise HarnessError(f"scenario not found: {source}")
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise HarnessError(f"{path}: scenario file must be a YAML mapping")
    try:
        config = _from_dict(raw, base_dir=os.path.dirname(os.path.abspath(path)))
    except (KeyError, TypeError, ValueError) as exc:
        raise HarnessError(f"{path}: {exc}") from None
    if seed_override is not None:
        config = replace(config, seed=seed_override)
    return config


def _from_dict(raw: dict, base_dir: str) -> ScenarioConfig:
    messages = raw.get("messages") or []
    if not isinstance(messages, list):
        raise HarnessError("messages must be a list of strings")
    harness = raw.get("harness") or {}

    params_raw = harness.get("params") or {}
    params = GenerationParams(
        seed=int(params_raw.get("seed", 123)),
        temperature=float(params_raw.get("temperature", 0.0)),
        max_tokens=int(params_raw.get("n_predict", 128)),
    )

    nodes_raw = harness.get("nodes") or [{"id": "a"}, {"id": "b"}]
    nodes = tuple(
        NodeSpec(node_id=str(n["id"]), profile=str(n.get("profile", "m2")))
        for n in nodes_raw
    )

    policy_raw = harness.get("policy") or {}
    policy = ConsistencyPolicy(
        mode=str(policy_raw.get("mode", "strong")),
        max_retries=int(policy_raw.get("max_retries", 3)),
        backoff_ms=float(policy_raw.get("backoff_ms", 10.0)),
    )

    links = harness.get("links") or {}
    mobility_raw = harness.get("mobility") or {1: nodes[0].node_id}
    mobility = tuple(
        sorted((int(turn), str(node)) for turn, node in mobility_raw.items())
    )

    modes = tuple(str(m) for m in harness.get("modes", list(_VALID_MODES)))

    return ScenarioConfig(
        name=str(raw.get("name", "unnamed")),
        model_name=str(raw["model_name"]),
        user_id=str(raw["user_id"]),
        messages=tuple(str(m) for m in messages),
        session_id=str(harness.get("session_id", "session-1")),
        seed=int(harness.get("seed", 123)),
        repeats=int(harness.get("repeats", 3)),
        modes=modes,
        params=params,
        nodes=nodes,
        policy=policy,
        session_ttl_s=float(harness.get("ttl_s", 3600.0)),
        client_latency_ms=float(links.get("client_latency_ms", 5.0)),
        inter_node_latency_ms=float(links.get("inter_node_latency_ms", 5.0)),
        jitter_ms=float(links.get("jitter_ms", 0.0)),
        mobility=mobility,
        vocab=str(harness.get("vocab", "default")),
        base_dir=base_dir,
    )
