"""Exploration and grounding metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence

from .errors import QExploreError
from .screen import Element

if TYPE_CHECKING:
    from .annotate import GroundingRecord
    from .environment.manifest import EnvironmentManifest
    from .graph import ExplorationGraph


@dataclass(frozen=True)
class D3CConfig:
    depth: int = 3

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")


def dom_signature(dom: Optional[Element], depth: int = 3) -> str:
    """Class-only serialization of the tree truncated to ``depth`` levels.

    Tags, text and boxes are dropped; each class list is sorted, children stay
    in document order.
    """
    if dom is None:
        return ""

    def render(node: Element, level: int) -> str:
        inner = "".join(render(c, level + 1) for c in node.children) if level < depth else ""
        return "(" + " ".join(sorted(node.classes)) + inner + ")"

    return render(dom, 1)


def d3c(graph: ExplorationGraph, cfg: D3CConfig = D3CConfig()) -> int:
    """Number of distinct page structures among the graph's screens."""
    return len({dom_signature(s.dom, cfg.depth) for s in graph.nodes.values()})


def d3c_curve(graph: ExplorationGraph, cfg: D3CConfig = D3CConfig(),
              until: Optional[int] = None) -> list[tuple[int, int]]:
    """D3C after every step ``t = 0..until`` (default: the steps the run used)."""
    if until is None:
        last = graph.trace[-1].step if graph.trace else 0
        until = max(last, int(graph.metadata.get("steps_run", last)))
    births = sorted((graph.added_step.get(nid, 0), dom_signature(s.dom, cfg.depth))
                    for nid, s in graph.nodes.items())
    seen: set[str] = set()
    curve = []
    i = 0
    for t in range(until + 1):
        while i < len(births) and births[i][0] <= t:
            seen.add(births[i][1])
            i += 1
        curve.append((t, len(seen)))
    return curve


def curve_at(curve: Sequence[tuple[int, int]], t: int) -> int:
    """Curve value at step ``t``, holding the last value past the end."""
    best = curve[0][1] if curve else 0
    for step, value in curve:
        if step > t:
            break
        best = value
    return best


def coverage_ratio(graph: ExplorationGraph, manifest: EnvironmentManifest) -> float:
    env = graph.metadata.get("environment")
    if env is not None and env != manifest.name:
        raise QExploreError(f"graph explored {env!r}, not {manifest.name!r}")
    truth = len(manifest.reachable_screens())
    return len(graph.nodes) / truth


def point_in_box(x: float, y: float, box: Sequence[float]) -> bool:
    """Half-open containment: min edges inside, max edges outside."""
    x0, y0, x1, y1 = box
    return x0 <= x < x1 and y0 <= y < y1


def grounding_accuracy(predictions: Sequence[tuple[float, float]],
                       gold: Sequence[GroundingRecord]) -> float:
    if len(predictions) != len(gold):
        raise QExploreError(f"{len(predictions)} predictions for {len(gold)} records")
    if not gold:
        return 0.0
    hits = sum(point_in_box(x, y, g.target_box) for (x, y), g in zip(predictions, gold))
    return hits / len(gold)
