"""Builds the bundled synthetic environments.

Each site is a hierarchy: a header nav bar reaching every section, section
listings (scrolling when they overflow), item detail screens, optional tab
screens under a detail and a few footer pages. Every screen also carries
controls that look clickable but do nothing.

Run ``python -m qexplore.environment.generate`` to rewrite the shipped files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .manifest import BUNDLED, ElementSpec, EnvironmentManifest, ScreenSpec, bundled_path


@dataclass(frozen=True)
class SitePreset:
    name: str
    style: str  # icon / image / text
    sections: tuple[str, ...]
    items: int
    per_page: int
    tabs: tuple[str, ...]
    tab_every: int  # every n-th item gets tab screens
    footer: tuple[str, ...]
    render_seed: int


PRESETS = {
    "icons": SitePreset("icons", "icon", ("layers", "adjust", "filters", "brushes"), 4, 4,
                        ("options", "presets"), 1, ("about", "help"), 11),
    "shop": SitePreset("shop", "image", ("electronics", "kitchen", "garden", "toys"), 6, 3,
                       ("reviews",), 2, ("about", "help"), 23),
    "forum": SitePreset("forum", "text", ("news", "tech", "games", "music", "books"), 8, 4,
                        ("replies",), 4, ("about", "help", "rules"), 37),
}

W, H = 400, 300


def _row(n, x0, y, w, h, gap):
    return [(x0 + i * (w + gap), y, x0 + i * (w + gap) + w, y + h) for i in range(n)]


class _Builder:
    def __init__(self, p: SitePreset):
        self.p = p
        self.screens: list[ScreenSpec] = []
        self.transitions: dict[str, str] = {}

    def link(self, sid, eid, dest):
        self.transitions[f"{sid}/{eid}"] = dest

    def chrome(self, sid) -> list[ElementSpec]:
        p = self.p
        out = []
        targets = [("home", "home")] + [(s, f"sec-{s}") for s in p.sections]
        if p.style == "icon":
            boxes = _row(len(targets), 8, 4, 28, 28, 6)
            shape = "icon"
        else:
            boxes = _row(len(targets), 8, 6, 48, 24, 4)
            shape = "text"
        for (label, dest), box in zip(targets, boxes):
            eid = f"nav-{label}"
            out.append(ElementSpec(eid, "a", ("nav-link",), box, text=label.title(), region="header",
                                   shape=shape))
            self.link(sid, eid, dest)
        for i, label in enumerate(("search", "alerts")):
            out.append(ElementSpec(f"hdr-{label}", "span", ("icon", "hdr-icon"),
                                   (334 + i * 32, 6, 358 + i * 32, 30), text=label,
                                   region="header", shape="icon", executable=False))
        for i, label in enumerate(p.footer):
            eid = f"ftr-{label}"
            out.append(ElementSpec(eid, "a", ("footer-link",), (8 + i * 64, 280, 64 + i * 64, 296),
                                   text=label.title(), region="footer", shape="text"))
            self.link(sid, eid, f"info-{label}")
        out.append(ElementSpec("ftr-copy", "span", ("copyright",), (300, 282, 392, 294),
                               text="(c) " + p.name, region="footer", interactive=False,
                               executable=False))
        return out

    def heading(self, text, page=0):
        return ElementSpec(f"title-{page}", "h1", ("title",), (16, 42, 216, 60), text=text,
                           page=page, interactive=False, executable=False)

    def card(self, eid, box, text, page):
        p = self.p
        shape = {"icon": "icon", "image": "image", "text": "text"}[p.style]
        return ElementSpec(eid, "a", ("card", f"{p.style}-card"), box, text=text, page=page, shape=shape)

    def add(self, sid, layout, title, elements, pages=1):
        self.screens.append(ScreenSpec(sid, layout, elements, pages=pages, title=title))

    def card_boxes(self, n):
        style = self.p.style
        if style == "image":
            return _row(n, 16, 70, 100, 110, 22)
        if style == "icon":
            return _row(n, 16, 76, 64, 64, 24)
        return [(16, 70 + i * 46, 300, 100 + i * 46) for i in range(n)]

    def badge_box(self, box):
        if self.p.style == "text":
            return (box[2] + 12, box[1] + 4, box[2] + 60, box[3] - 4)
        return (box[0], box[3] + 6, box[2], box[3] + 20)

    def build(self) -> EnvironmentManifest:
        p = self.p
        # Home: banner plus one featured link per section.
        els = self.chrome("home") + [self.heading(p.name.title() + " home"),
                                     ElementSpec("banner", "div", ("banner", "carousel"),
                                                 (16, 66, 384, 110), shape="banner",
                                                 interactive=False, executable=False)]
        feat = _row(len(p.sections), 16, 124, 64, 40, 8)
        for s, box in zip(p.sections, feat):
            eid = f"feat-{s}"
            els.append(self.card(eid, box, f"featured {s}", 0))
            self.link("home", eid, f"item-{s}-0")
        els.append(ElementSpec("promo", "span", ("icon", "promo"), (16, 180, 44, 208), text="promo",
                               shape="icon", executable=False))
        self.add("home", "landing", "home", els)

        for s in p.sections:
            sid = f"sec-{s}"
            pages = math.ceil(p.items / p.per_page)
            els = self.chrome(sid)
            for page in range(pages):
                els.append(self.heading(f"{s} page {page + 1}", page))
                idx = list(range(page * p.per_page, min(p.items, (page + 1) * p.per_page)))
                boxes = self.card_boxes(len(idx))
                for i, box in zip(idx, boxes):
                    eid = f"card-{i}"
                    els.append(self.card(eid, box, f"{s} item {i}", page))
                    self.link(sid, eid, f"item-{s}-{i}")
                    els.append(ElementSpec(f"badge-{i}", "span", ("badge",), self.badge_box(box),
                                           text=f"badge {i % 3}", page=page, shape="icon",
                                           executable=False))
            self.add(sid, "listing", s, els, pages=pages)

            for i in range(p.items):
                iid = f"item-{s}-{i}"
                els = self.chrome(iid) + [self.heading(f"{s} item {i}")]
                els.append(ElementSpec("back", "a", ("back-link",), (16, 66, 76, 86), text="back"))
                self.link(iid, "back", sid)
                els.append(ElementSpec("rating", "span", ("icon", "rating"), (300, 64, 324, 88),
                                       text="rating", shape="icon", executable=False))
                els.append(ElementSpec("share", "span", ("icon", "share"), (332, 64, 356, 88),
                                       text="share", shape="icon", executable=False))
                if p.items > 1:
                    nxt = (i + 1) % p.items
                    els.append(ElementSpec("related", "a", ("related-link",), (16, 130, 136, 150),
                                           text=f"related {s} {nxt}"))
                    self.link(iid, "related", f"item-{s}-{nxt}")
                els.append(ElementSpec("body", "p", ("body-text",), (16, 160, 384, 220),
                                       text=f"about {s} {i}", interactive=False, executable=False))
                has_tabs = i % p.tab_every == 0
                if has_tabs:
                    for k, (tab, box) in enumerate(zip(p.tabs, _row(len(p.tabs), 96, 66, 70, 22, 8))):
                        eid = f"tab-{tab}"
                        els.append(ElementSpec(eid, "button", ("tab",), box, text=tab))
                        self.link(iid, eid, f"tab-{s}-{i}-{k}")
                self.add(iid, "detail", f"{s} {i}", els)
                if has_tabs:
                    for k, tab in enumerate(p.tabs):
                        tid = f"tab-{s}-{i}-{k}"
                        els = self.chrome(tid) + [self.heading(f"{s} {i} {tab}")]
                        els.append(ElementSpec("overview", "button", ("tab", "overview"), (16, 66, 86, 88),
                                               text="overview"))
                        self.link(tid, "overview", iid)
                        for j, other in enumerate(p.tabs):
                            if j == k:
                                continue
                            eid = f"tab-{other}"
                            els.append(ElementSpec(eid, "button", ("tab",), (96 + j * 78, 66, 166 + j * 78, 88),
                                                   text=other))
                            self.link(tid, eid, f"tab-{s}-{i}-{j}")
                        els.append(ElementSpec("like", "span", ("icon", "like"), (300, 64, 324, 88),
                                               text="like", shape="icon", executable=False))
                        els.append(ElementSpec("content", "p", ("tab-content", tab), (16, 100, 384, 240),
                                               text=f"{tab} of {s} {i}", interactive=False,
                                               executable=False))
                        self.add(tid, "tab", f"{s} {i} {tab}", els)

        for label in p.footer:
            fid = f"info-{label}"
            els = self.chrome(fid) + [self.heading(label.title())]
            els.append(ElementSpec("contact", "span", ("icon", "contact"), (16, 70, 40, 94), text="contact",
                                   shape="icon", executable=False))
            els.append(ElementSpec("info", "p", ("info-text",), (16, 104, 384, 200), text=f"{label} text",
                                   interactive=False, executable=False))
            self.add(fid, "info", label, els)

        return EnvironmentManifest(name=p.name, screens=self.screens, transitions=self.transitions,
                                   initial="home", render_seed=p.render_seed, resolution=(W, H),
                                   style=p.style)


def build_manifest(name: str) -> EnvironmentManifest:
    return _Builder(PRESETS[name]).build()


def main() -> None:
    for name in BUNDLED:
        m = build_manifest(name)
        m.save(bundled_path(name))
        print(f"{name}: {len(m.screens)} screen specs, {len(m.reachable_screens())} reachable screens")


if __name__ == "__main__":
    main()
