"""Grounding data from an explored graph.

Each click edge becomes a handful of (query, screenshot, target point)
records: queries about what the element shows and queries about what it
does, both pointing at the element's centre.
"""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .archive import dumps, write_png
from .errors import DatasetError, OracleError
from .graph import ExplorationGraph
from .metrics import point_in_box

logger = logging.getLogger(__name__)

DATASET_FORMAT = "qexplore-dataset"
DATASET_VERSION = 1


class QueryKind(str, Enum):
    SYSTEM1 = "System1"
    SYSTEM2 = "System2"


class Variant(str, Enum):
    VISION_ONLY = "vision_only"
    VISION_A11Y = "vision_a11y"


@dataclass(frozen=True)
class GroundingRecord:
    query: str
    screenshot_ref: str  # node id in the source graph
    target_box: tuple[int, int, int, int]
    target_point: tuple[float, float]
    query_kind: QueryKind
    edge_ref: str  # "from_id|action_key|to_id"
    a11y: str = ""

    def __post_init__(self):
        object.__setattr__(self, "query_kind", QueryKind(self.query_kind))
        object.__setattr__(self, "target_box", tuple(int(v) for v in self.target_box))
        object.__setattr__(self, "target_point", tuple(float(v) for v in self.target_point))
        if not self.query.strip():
            raise DatasetError("empty query")
        if not point_in_box(*self.target_point, self.target_box):
            raise DatasetError(f"target point {self.target_point} outside {self.target_box}")

    def to_dict(self, with_a11y: bool = True, image: Optional[str] = None) -> dict:
        d = {"query": self.query, "query_kind": self.query_kind.value,
             "screenshot_ref": image or self.screenshot_ref, "target_box": list(self.target_box),
             "target_point": list(self.target_point), "edge_ref": self.edge_ref}
        if with_a11y:
            d["a11y"] = self.a11y
        return d

    @classmethod
    def from_dict(cls, d: dict) -> GroundingRecord:
        return cls(query=d["query"], screenshot_ref=d["screenshot_ref"], target_box=tuple(d["target_box"]),
                   target_point=tuple(d["target_point"]), query_kind=QueryKind(d["query_kind"]),
                   edge_ref=d["edge_ref"], a11y=d.get("a11y", ""))


def box_center(box) -> tuple[float, float]:
    x0, y0, x1, y1 = box
    return (x0 + x1) / 2, (y0 + y1) / 2


def _jittered(box, rng: np.random.Generator) -> tuple[float, float]:
    # Same half-open box the centre lives in, drawn from its middle half.
    x0, y0, x1, y1 = box
    cx, cy = box_center(box)
    return (float(cx + (x1 - x0) / 4 * rng.uniform(-1, 1)), float(cy + (y1 - y0) / 4 * rng.uniform(-1, 1)))


@dataclass
class AnnotationRun:
    records: list[GroundingRecord] = field(default_factory=list)
    annotated_edges: int = 0
    skipped_edges: list[str] = field(default_factory=list)
    scroll_edges: int = 0
    warnings: list[str] = field(default_factory=list)

    @property
    def system2_ratio(self) -> float:
        if not self.records:
            return 0.0
        return sum(r.query_kind is QueryKind.SYSTEM2 for r in self.records) / len(self.records)


def annotate(graph: ExplorationGraph, oracle, jitter: bool = False,
             rng: Optional[np.random.Generator] = None) -> AnnotationRun:
    """Query every click edge in insertion order; failing edges are skipped and listed."""
    run = AnnotationRun()
    if jitter and rng is None:
        rng = np.random.default_rng(0)
    with graph.lock.read():
        for edge in graph.edges:
            action = edge.action
            if action.target.is_full_page:
                run.scroll_edges += 1
                continue
            before, after = graph.nodes[edge.from_id], graph.nodes[edge.to_id]
            ref = f"{edge.from_id}|{action.action_key}|{edge.to_id}"
            try:
                bundle = oracle.generate_queries(before, action, after, to_id=edge.to_id)
            except OracleError as exc:
                logger.warning("edge %s skipped: %s", ref, exc)
                run.skipped_edges.append(ref)
                continue
            run.annotated_edges += 1
            run.warnings.extend(bundle.warnings)
            box = action.target.box
            for kind, queries in ((QueryKind.SYSTEM1, bundle.system1), (QueryKind.SYSTEM2, bundle.system2)):
                for q in queries:
                    point = _jittered(box, rng) if jitter else box_center(box)
                    run.records.append(GroundingRecord(q, edge.from_id, box, point, kind, ref, before.a11y))
    return run


def annotate_graph(graph: ExplorationGraph, oracle, jitter: bool = False,
                   rng: Optional[np.random.Generator] = None) -> list[GroundingRecord]:
    run = annotate(graph, oracle, jitter=jitter, rng=rng)
    if not run.records:
        raise DatasetError("annotation produced no records")
    return run.records


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def export_dataset(records: Sequence[GroundingRecord], variant, path, images: Mapping[str, np.ndarray],
                   provenance: Optional[dict] = None) -> Path:
    """Write ``records.jsonl``, ``images/`` and ``dataset.json`` under ``path``.

    ``images`` maps each ``screenshot_ref`` to its pixels. Nothing is written
    if a reference is dangling. Output bytes depend only on the inputs.
    """
    variant = Variant(variant)
    if not records:
        raise DatasetError("no records to export")
    missing = sorted({r.screenshot_ref for r in records} - set(images))
    if missing:
        raise DatasetError(f"records reference unknown screenshots: {missing[:5]}")
    path = Path(path)
    try:
        if path.exists():
            shutil.rmtree(path)
        (path / "images").mkdir(parents=True)
    except OSError as exc:
        raise DatasetError(f"cannot write dataset to {path}: {exc}") from exc

    files: dict[str, str] = {}
    for r in records:
        if r.screenshot_ref not in files:
            files[r.screenshot_ref] = f"images/{len(files):04d}.png"
            write_png(path / files[r.screenshot_ref], np.asarray(images[r.screenshot_ref]))
    with_a11y = variant is Variant.VISION_A11Y
    lines = [dumps({**r.to_dict(with_a11y, files[r.screenshot_ref]), "screen_id": r.screenshot_ref})
             for r in records]
    (path / "records.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")

    n2 = sum(r.query_kind is QueryKind.SYSTEM2 for r in records)
    digests = {"records.jsonl": _sha256(path / "records.jsonl")}
    digests.update({f: _sha256(path / f) for f in files.values()})
    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "variant": variant.value,
        "counts": {"records": len(records), "system1": len(records) - n2, "system2": n2,
                   "images": len(files), "edges": len({r.edge_ref for r in records})},
        "system2_ratio": n2 / len(records),
        "digests": digests,
        "provenance": provenance or {},
    }
    (path / "dataset.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n",
                                       encoding="utf-8")
    return path


def load_dataset(path) -> tuple[list[GroundingRecord], dict]:
    path = Path(path)
    try:
        manifest = json.loads((path / "dataset.json").read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read dataset manifest in {path}: {exc}") from exc
    if manifest.get("format") != DATASET_FORMAT:
        raise DatasetError(f"{path} is not a {DATASET_FORMAT} directory")
    if manifest.get("version") != DATASET_VERSION:
        raise DatasetError(f"unsupported dataset version {manifest.get('version')!r}")
    records = []
    with open(path / "records.jsonl", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            try:
                d = json.loads(line)
                d["screenshot_ref"] = d.pop("screen_id", d["screenshot_ref"])
                records.append(GroundingRecord.from_dict(d))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DatasetError(f"records.jsonl:{lineno}: {exc}") from exc
    return records, manifest


def dataset_digest(path) -> str:
    """One digest over every file of an exported dataset."""
    path = Path(path)
    h = hashlib.sha256()
    for f in sorted(p for p in path.rglob("*") if p.is_file()):
        h.update(f.relative_to(path).as_posix().encode() + b"\0")
        h.update(f.read_bytes())
    return h.hexdigest()
