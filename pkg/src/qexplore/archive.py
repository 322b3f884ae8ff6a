"""Directory archive format for exploration graphs.

Layout::

    manifest.json     format tag, version, metadata, nodes, Q-table params
    records.jsonl     one JSON record per edge / trace entry / Q value / description
    images/NNNN.png   lossless screenshot per node
    masks/NNNN.png    1-bit dynamic-region mask, only for nodes that have one

Every file is written deterministically, so identical graphs produce
byte-identical archives.
"""

from __future__ import annotations

import json
import shutil
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ArchiveParseError, UnsupportedVersionError
from .graph import Edge, ExplorationGraph, TraceEntry, TransitionDescription
from .q_store import Outcome, QTable
from .screen import Action, Element, Screen

FORMAT = "qexplore-graph"
VERSION = 1


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def write_png(path: Path, arr: np.ndarray) -> None:
    img = Image.fromarray(arr.astype(np.uint8)) if arr.dtype != bool else Image.fromarray(arr).convert("1")
    img.save(path, format="PNG")


def read_png(path: Path, mask: bool = False) -> np.ndarray:
    with Image.open(path) as img:
        if mask:
            return np.array(img.convert("1"), dtype=bool)
        return np.array(img.convert("RGB"), dtype=np.uint8)


def save(graph: ExplorationGraph, path) -> Path:
    path = Path(path)
    with graph.lock.read():
        if path.exists():
            shutil.rmtree(path)
        (path / "images").mkdir(parents=True)
        nodes = []
        for i, (nid, screen) in enumerate(graph.nodes.items()):
            image = f"images/{i:04d}.png"
            write_png(path / image, screen.screenshot)
            mask = None
            if screen.dynamic_mask is not None:
                (path / "masks").mkdir(exist_ok=True)
                mask = f"masks/{i:04d}.png"
                write_png(path / mask, screen.dynamic_mask)
            w, h = screen.resolution
            nodes.append({
                "id": nid,
                "image": image,
                "mask": mask,
                "resolution": [w, h],
                "dom": screen.dom.to_dict(),
                "a11y": screen.a11y,
                "added_step": graph.added_step.get(nid, 0),
            })
        manifest = {
            "format": FORMAT,
            "version": VERSION,
            "metadata": graph.metadata,
            "qtable": graph.qtable.params(),
            "nodes": nodes,
        }
        (path / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")

        lines = []
        for e in graph.edges:
            lines.append({"kind": "edge", "from": e.from_id, "to": e.to_id, "action": e.action.to_dict()})
        for t in graph.trace:
            lines.append({"kind": "trace", "step": t.step, "action_key": t.action_key,
                          "outcome": t.outcome.value, "from": t.from_id, "to": t.to_id})
        for key, value in graph.qtable.snapshot().items():
            lines.append({"kind": "q", "key": key, "value": value})
        for e in graph.edges:
            d = graph.descriptions.get(e.action.action_key)
            if d is not None:
                lines.append({"kind": "description", "action_key": d.action_key,
                              "consequence": d.consequence, "clicked_element": d.clicked_element,
                              "fallback": d.fallback})
        (path / "records.jsonl").write_text("".join(dumps(r) + "\n" for r in lines))
    return path


def load(path) -> ExplorationGraph:
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.is_file():
        raise ArchiveParseError(f"{manifest_path}: missing manifest")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ArchiveParseError(f"{manifest_path}: {exc}") from exc
    if manifest.get("format") != FORMAT:
        raise ArchiveParseError(f"{manifest_path}: not a {FORMAT} archive")
    if manifest.get("version") != VERSION:
        raise UnsupportedVersionError(
            f"archive version {manifest.get('version')!r} unsupported (expected {VERSION})")

    nodes, added = {}, {}
    for i, rec in enumerate(manifest.get("nodes", [])):
        where = f"{manifest_path} nodes[{i}]"
        try:
            shot = read_png(path / rec["image"])
            mask = read_png(path / rec["mask"], mask=True) if rec.get("mask") else None
            screen = Screen(rec["id"], shot, Element.from_dict(rec["dom"]), rec["a11y"], mask)
            if list(screen.resolution) != list(rec["resolution"]):
                raise ValueError("resolution does not match image")
        except (KeyError, ValueError, TypeError, OSError) as exc:
            raise ArchiveParseError(f"{where}: {exc}") from exc
        nodes[screen.id] = screen
        added[screen.id] = int(rec.get("added_step", 0))

    edges, trace, qvalues, descriptions = [], [], {}, {}
    rpath = path / "records.jsonl"
    try:
        text = rpath.read_text()
    except OSError as exc:
        raise ArchiveParseError(f"{rpath}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            r = json.loads(line)
            kind = r["kind"]
            if kind == "edge":
                if r["from"] not in nodes or r["to"] not in nodes:
                    raise ValueError("edge endpoint is not a node")
                edges.append(Edge(r["from"], Action.from_dict(r["action"]), r["to"]))
            elif kind == "trace":
                trace.append(TraceEntry(int(r["step"]), r["action_key"], Outcome(r["outcome"]),
                                        r["from"], r["to"]))
            elif kind == "q":
                qvalues[r["key"]] = float(r["value"])
            elif kind == "description":
                descriptions[r["action_key"]] = TransitionDescription(
                    r["action_key"], r["consequence"], r["clicked_element"], bool(r["fallback"]))
            else:
                raise ValueError(f"unknown record kind {kind!r}")
        except (KeyError, ValueError, TypeError) as exc:
            raise ArchiveParseError(f"{rpath}:{lineno}: {exc}") from exc

    table = QTable(values=qvalues, **manifest.get("qtable", {}))
    return ExplorationGraph(nodes=nodes, edges=edges, trace=trace, metadata=manifest.get("metadata", {}),
                            qtable=table, descriptions=descriptions, added_step=added)
