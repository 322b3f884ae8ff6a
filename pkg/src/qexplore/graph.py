"""The exploration graph: unique screens as nodes, actions as edges."""

from __future__ import annotations

import logging
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

from .errors import InvalidGraphError, OracleError
from .fuzzy_match import Matcher
from .metrics import dom_signature
from .q_store import Outcome, QTable
from .screen import Action, Screen

if TYPE_CHECKING:
    from .oracle import Oracle

logger = logging.getLogger(__name__)

SIGNATURE_DEPTH = 3


class RWLock:
    """Many readers or one writer."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    @contextmanager
    def read(self):
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1
        try:
            yield
        finally:
            with self._cond:
                self._readers -= 1
                if not self._readers:
                    self._cond.notify_all()

    @contextmanager
    def write(self):
        with self._cond:
            while self._writer or self._readers:
                self._cond.wait()
            self._writer = True
        try:
            yield
        finally:
            with self._cond:
                self._writer = False
                self._cond.notify_all()


@dataclass(frozen=True)
class Edge:
    from_id: str
    action: Action
    to_id: str


@dataclass(frozen=True)
class TraceEntry:
    step: int
    action_key: str
    outcome: Outcome
    from_id: str
    to_id: str


@dataclass(frozen=True)
class TransitionDescription:
    action_key: str
    consequence: str
    clicked_element: str
    fallback: bool = False

    def render(self) -> str:
        return f"- clicked {self.clicked_element}; {self.consequence}"


@dataclass(eq=False)
class ExplorationGraph:
    nodes: dict[str, Screen] = field(default_factory=dict)
    edges: list[Edge] = field(default_factory=list)
    trace: list[TraceEntry] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    qtable: QTable = field(default_factory=QTable)
    descriptions: dict[str, TransitionDescription] = field(default_factory=dict)
    added_step: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.lock = RWLock()
        self._edge_index = {(e.from_id, e.action.action_key): i for i, e in enumerate(self.edges)}
        self._signatures = {nid: dom_signature(s.dom, SIGNATURE_DEPTH) for nid, s in self.nodes.items()}

    @classmethod
    def from_initial(cls, screen: Screen, metadata: Optional[dict] = None) -> ExplorationGraph:
        g = cls(metadata=dict(metadata or {}))
        g._insert_node(screen, step=0)
        return g

    @property
    def initial_id(self) -> Optional[str]:
        return next(iter(self.nodes), None)

    def edge(self, from_id: str, action_key: str) -> Optional[Edge]:
        i = self._edge_index.get((from_id, action_key))
        return None if i is None else self.edges[i]

    def signature(self, node_id: str) -> str:
        return self._signatures[node_id]

    def _fresh_id(self, wanted: str) -> str:
        if wanted and wanted not in self.nodes:
            return wanted
        base = wanted or "screen"
        k = 1
        while f"{base}~{k}" in self.nodes:
            k += 1
        return f"{base}~{k}"

    def _insert_node(self, screen: Screen, step: int) -> str:
        nid = self._fresh_id(screen.id)
        node = screen if nid == screen.id else screen.with_id(nid)
        self.nodes[nid] = node
        self._signatures[nid] = dom_signature(node.dom, SIGNATURE_DEPTH)
        self.added_step[nid] = step
        return nid

    def _insert_edge(self, from_id: str, action: Action, to_id: str) -> bool:
        key = (from_id, action.action_key)
        if key in self._edge_index:
            return False
        self._edge_index[key] = len(self.edges)
        self.edges.append(Edge(from_id, action, to_id))
        return True

    def set_mask(self, node_id: str, mask) -> None:
        with self.lock.write():
            node = self.nodes[node_id]
            node.dynamic_mask = None if mask is None or not mask.any() else mask

    def __eq__(self, other):
        if not isinstance(other, ExplorationGraph):
            return NotImplemented
        return (
            list(self.nodes) == list(other.nodes)
            and all(self.nodes[k] == other.nodes[k] for k in self.nodes)
            and self.edges == other.edges
            and self.trace == other.trace
            and self.metadata == other.metadata
            and self.qtable.snapshot() == other.qtable.snapshot()
            and self.qtable.params() == other.qtable.params()
            and self.descriptions == other.descriptions
            and self.added_step == other.added_step
        )

    def summary(self) -> dict:
        return {"nodes": len(self.nodes), "edges": len(self.edges), "steps": len(self.trace)}


def find_matching_node(graph: ExplorationGraph, screen: Screen, matcher: Matcher,
                       exclude: tuple[str, ...] = ()) -> Optional[str]:
    """First node fuzzy-equal to ``screen``.

    Nodes sharing the probe's depth-truncated DOM signature are tried first,
    then the rest, each group in insertion order.
    """
    sig = dom_signature(screen.dom, SIGNATURE_DEPTH)
    same = [nid for nid in graph.nodes if graph._signatures[nid] == sig]
    rest = [nid for nid in graph.nodes if graph._signatures[nid] != sig]
    for nid in same + rest:
        if nid in exclude:
            continue
        if matcher.same_screen(graph.nodes[nid], screen):
            return nid
    return None


def add_transition(graph: ExplorationGraph, from_id: str, action: Action, observed: Screen,
                   matcher: Matcher, step: Optional[int] = None) -> tuple[str, Outcome]:
    """Record one executed step; the outcome doubles as the reward signal."""
    with graph.lock.write():
        if from_id not in graph.nodes:
            raise InvalidGraphError(f"unknown source node {from_id!r}")
        step = len(graph.trace) + 1 if step is None else step
        if matcher.same_screen(graph.nodes[from_id], observed):
            to_id, outcome = from_id, Outcome.SAME_SCREEN
        else:
            match = find_matching_node(graph, observed, matcher, exclude=(from_id,))
            if match is not None:
                to_id, outcome = match, Outcome.SEEN_SCREEN
            else:
                to_id, outcome = graph._insert_node(observed, step), Outcome.NEW_SCREEN
            graph._insert_edge(from_id, action, to_id)
        graph.trace.append(TraceEntry(step, action.action_key, outcome, from_id, to_id))
        return to_id, outcome


def fallback_description(graph: ExplorationGraph, edge: Edge) -> TransitionDescription:
    a = edge.action
    if a.target.is_full_page:
        clicked = f"full page scroll {a.target.direction or 'down'}"
        text = f"scrolled full page {a.target.direction or 'down'}; arrived at screen {edge.to_id}"
    else:
        clicked = f"{a.target.tag}.{'.'.join(a.target.classes)} at {list(a.target.box)}"
        text = f"clicked element {clicked}; arrived at screen {edge.to_id}"
    return TransitionDescription(a.action_key, text, clicked, fallback=True)


def to_state_descriptions(graph: ExplorationGraph, oracle: Oracle) -> list[TransitionDescription]:
    """One description per edge in insertion order; edges already described are not resent."""
    with graph.lock.read():
        pending = [e for e in graph.edges if e.action.action_key not in graph.descriptions]
        fresh = {}
        for e in pending:
            try:
                parsed = oracle.describe_transition(
                    graph.nodes[e.from_id], e.action, graph.nodes[e.to_id], to_id=e.to_id)
                fresh[e.action.action_key] = TransitionDescription(
                    e.action.action_key, parsed["consequence"], parsed["clicked_element"])
            except OracleError as exc:
                logger.warning("describe failed for edge %s: %s", e.action.action_key, exc)
                fresh[e.action.action_key] = fallback_description(graph, e)
    # The cache is a memo, not graph state that readers depend on.
    graph.descriptions.update(fresh)
    return [graph.descriptions[e.action.action_key] for e in graph.edges]
