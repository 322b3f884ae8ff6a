"""Versioned manifest describing a synthetic GUI environment."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..errors import ManifestError
from ..screen import Element

FORMAT = "qexplore-env"
VERSION = 1

HEADER_H = 36
FOOTER_H = 24


@dataclass
class ElementSpec:
    id: str
    tag: str
    classes: tuple[str, ...]
    box: tuple[int, int, int, int]
    text: str = ""
    region: str = "main"  # header / main / footer
    page: int = 0  # ignored outside main
    shape: str = "text"  # text / icon / image / banner
    color: Optional[tuple[int, int, int]] = None
    interactive: bool = True
    executable: bool = True

    def to_dict(self) -> dict:
        d = {"id": self.id, "tag": self.tag, "classes": list(self.classes), "box": list(self.box),
             "text": self.text, "region": self.region, "page": self.page, "shape": self.shape,
             "interactive": self.interactive, "executable": self.executable}
        if self.color is not None:
            d["color"] = list(self.color)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ElementSpec:
        return cls(
            id=d["id"], tag=d["tag"], classes=tuple(d["classes"]), box=tuple(d["box"]),
            text=d.get("text", ""), region=d.get("region", "main"), page=int(d.get("page", 0)),
            shape=d.get("shape", "text"),
            color=tuple(d["color"]) if d.get("color") is not None else None,
            interactive=bool(d.get("interactive", True)),
            executable=bool(d.get("executable", d.get("interactive", True))),
        )


@dataclass
class ScreenSpec:
    id: str
    layout: str
    elements: list[ElementSpec]
    pages: int = 1
    title: str = ""

    def visible(self, page: int) -> list[ElementSpec]:
        return [e for e in self.elements if e.region != "main" or e.page == page]

    def screen_id(self, page: int) -> str:
        return self.id if page == 0 else f"{self.id}#p{page}"


@dataclass
class EnvironmentManifest:
    name: str
    screens: list[ScreenSpec]
    transitions: dict[str, str]  # "<screen>/<element>" -> destination screen
    initial: str
    render_seed: int = 0
    resolution: tuple[int, int] = (400, 300)
    style: str = "text"
    _by_id: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._by_id = {s.id: s for s in self.screens}
        self.validate()

    def screen(self, sid: str) -> ScreenSpec:
        return self._by_id[sid]

    @property
    def invalid_elements(self) -> list[str]:
        return [f"{s.id}/{e.id}" for s in self.screens for e in s.elements
                if e.interactive and not e.executable]

    def validate(self) -> None:
        w, h = self.resolution
        if len(self._by_id) != len(self.screens):
            raise ManifestError("duplicate screen ids")
        if self.initial not in self._by_id:
            raise ManifestError(f"initial screen {self.initial!r} missing")
        for key, dest in self.transitions.items():
            if dest not in self._by_id:
                raise ManifestError(f"transition {key} -> unknown screen {dest!r}")
            sid, _, eid = key.partition("/")
            spec = self._by_id.get(sid)
            if spec is None or not any(e.id == eid for e in spec.elements):
                raise ManifestError(f"transition source {key!r} unknown")
        for s in self.screens:
            ids = [e.id for e in s.elements]
            if len(set(ids)) != len(ids):
                raise ManifestError(f"{s.id}: duplicate element ids")
            for e in s.elements:
                x0, y0, x1, y1 = e.box
                if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
                    raise ManifestError(f"{s.id}/{e.id}: box {e.box} out of bounds")
                if e.executable and not e.interactive:
                    raise ManifestError(f"{s.id}/{e.id}: executable but not interactive")
                if e.executable and f"{s.id}/{e.id}" not in self.transitions:
                    raise ManifestError(f"{s.id}/{e.id}: executable element without transition")
                if not e.executable and f"{s.id}/{e.id}" in self.transitions:
                    raise ManifestError(f"{s.id}/{e.id}: invalid element has a transition")
            for page in range(s.pages):
                vis = s.visible(page)
                for i, a in enumerate(vis):
                    for b in vis[i + 1:]:
                        if _overlap(a.box, b.box):
                            raise ManifestError(f"{s.id} page {page}: {a.id} overlaps {b.id}")

    def build_dom(self, sid: str, page: int) -> Element:
        """Element tree for one scroll page of a screen."""
        spec = self.screen(sid)
        w, h = self.resolution
        regions = {
            "header": Element("header", ("header",), (0, 0, w, HEADER_H), eid="header"),
            "main": Element("main", ("main", f"layout-{spec.layout}", f"view-{spec.id}", f"page-{page}"),
                            (0, HEADER_H, w, h - FOOTER_H), eid="main"),
            "footer": Element("footer", ("footer",), (0, h - FOOTER_H, w, h), eid="footer"),
        }
        nav = Element("nav", ("nav",), (0, 0, w, HEADER_H), eid="nav")
        regions["header"].children.append(nav)
        for e in spec.visible(page):
            el = Element(e.tag, tuple(e.classes), tuple(e.box), eid=e.id, text=e.text,
                         interactive=e.interactive)
            (nav if e.region == "header" else regions[e.region]).children.append(el)
        return Element("body", (f"site-{self.name}", f"style-{self.style}"), (0, 0, w, h), eid="body",
                       children=[regions["header"], regions["main"], regions["footer"]])

    def step(self, sid: str, page: int, element_id: Optional[str] = None,
             scroll: Optional[str] = None) -> tuple[str, int]:
        """Ground-truth transition function over (screen, page) states."""
        spec = self.screen(sid)
        if scroll == "down":
            return (sid, page + 1) if page + 1 < spec.pages else (sid, page)
        if scroll == "up":
            return (sid, page - 1) if page > 0 else (sid, page)
        dest = self.transitions.get(f"{sid}/{element_id}")
        if dest is None:
            return sid, page
        return dest, 0

    def moves(self, sid: str, page: int) -> list[tuple[Optional[str], Optional[str]]]:
        spec = self.screen(sid)
        out: list[tuple[Optional[str], Optional[str]]] = [
            (e.id, None) for e in spec.visible(page) if e.interactive]
        if spec.pages > 1:
            out.append((None, "down"))
            if page > 0:
                out.append((None, "up"))
        return out

    def reachable_screens(self) -> list[str]:
        """Exhaustive BFS from the initial screen; ids as the simulator reports them."""
        start = (self.initial, 0)
        seen = {start}
        order = [start]
        queue = deque([start])
        while queue:
            sid, page = queue.popleft()
            for eid, scroll in self.moves(sid, page):
                nxt = self.step(sid, page, eid, scroll)
                if nxt not in seen:
                    seen.add(nxt)
                    order.append(nxt)
                    queue.append(nxt)
        return [self.screen(s).screen_id(p) for s, p in order]

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "name": self.name,
            "style": self.style,
            "resolution": list(self.resolution),
            "render_seed": self.render_seed,
            "initial": self.initial,
            "screens": [{"id": s.id, "layout": s.layout, "title": s.title, "pages": s.pages,
                         "elements": [e.to_dict() for e in s.elements]} for s in self.screens],
            "transitions": dict(sorted(self.transitions.items())),
        }

    @classmethod
    def from_dict(cls, d: dict) -> EnvironmentManifest:
        if d.get("format") != FORMAT:
            raise ManifestError("not an environment manifest")
        if d.get("version") != VERSION:
            raise ManifestError(f"unsupported manifest version {d.get('version')!r}")
        screens = [ScreenSpec(id=s["id"], layout=s["layout"], title=s.get("title", ""),
                              pages=int(s.get("pages", 1)),
                              elements=[ElementSpec.from_dict(e) for e in s["elements"]])
                   for s in d["screens"]]
        return cls(name=d["name"], screens=screens, transitions=dict(d["transitions"]),
                   initial=d["initial"], render_seed=int(d.get("render_seed", 0)),
                   resolution=tuple(d.get("resolution", (400, 300))), style=d.get("style", "text"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> EnvironmentManifest:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ManifestError(f"{path}: {exc}") from exc
        return cls.from_dict(data)


def _overlap(a, b) -> bool:
    return a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]


BUNDLED = ("icons", "shop", "forum")


def bundled_path(name: str) -> Path:
    return Path(__file__).parent / "manifests" / f"{name}.json"


def load_manifest(name_or_path) -> EnvironmentManifest:
    """Load a bundled manifest by name or any manifest file by path."""
    p = Path(name_or_path)
    if not p.exists() and str(name_or_path) in BUNDLED:
        p = bundled_path(str(name_or_path))
    elif not p.exists() and p.stem in BUNDLED and not p.parent.name:
        p = bundled_path(p.stem)
    return EnvironmentManifest.load(p)
