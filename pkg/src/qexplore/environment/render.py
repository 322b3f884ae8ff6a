"""Procedural screenshot rendering for manifest screens."""

from __future__ import annotations

import hashlib

import numpy as np

from .manifest import FOOTER_H, HEADER_H, ElementSpec, EnvironmentManifest

BACKGROUNDS = {
    "icon": (46, 48, 54),
    "image": (247, 246, 242),
    "text": (255, 255, 255),
}

BANNER_COLORS = [(230, 90, 60), (60, 150, 230), (90, 200, 110)]


def _bits(seed: int, label: str, n: int) -> np.ndarray:
    raw = b""
    counter = 0
    while len(raw) * 8 < n:
        raw += hashlib.sha256(f"{seed}:{label}:{counter}".encode()).digest()
        counter += 1
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[:n]
    return bits.astype(bool)


def class_color(seed: int, classes) -> tuple[int, int, int]:
    h = hashlib.sha256(f"{seed}:color:{'.'.join(classes)}".encode()).digest()
    # Keep fills mid-range so glyphs contrast in both directions.
    return tuple(60 + int(b) * 140 // 255 for b in h[:3])


def text_tint(seed: int, color, text: str) -> tuple[int, int, int]:
    """Shift a fill by a text-derived offset so distinct content differs in tone."""
    if not text:
        return tuple(color)
    h = hashlib.sha256(f"{seed}:tint:{text}".encode()).digest()
    return tuple(int(np.clip(c + int(b) * 100 // 255 - 50, 0, 255)) for c, b in zip(color, h[:3]))


def _contrast(color) -> tuple[int, int, int]:
    lum = 0.299 * color[0] + 0.587 * color[1] + 0.114 * color[2]
    return (20, 20, 24) if lum > 120 else (245, 245, 240)


def _draw_glyph(canvas: np.ndarray, spec: ElementSpec, seed: int, fill, ink) -> None:
    x0, y0, x1, y1 = spec.box
    w, h = x1 - x0, y1 - y0
    if spec.shape == "image":
        cols, rows = 6, 4
        cells = np.frombuffer(hashlib.sha256(f"{seed}:img:{spec.text}:{spec.id}".encode()).digest()
                              + hashlib.sha256(f"{seed}:img2:{spec.text}".encode()).digest(),
                              dtype=np.uint8)
        for r in range(rows):
            for c in range(cols):
                cx0 = x0 + 2 + c * (w - 4) // cols
                cx1 = x0 + 2 + (c + 1) * (w - 4) // cols
                cy0 = y0 + 2 + r * (h - 4) // rows
                cy1 = y0 + 2 + (r + 1) * (h - 4) // rows
                k = (r * cols + c) * 3 % (len(cells) - 3)
                canvas[cy0:cy1, cx0:cx1] = cells[k:k + 3]
        return
    if spec.shape == "icon":
        n = 4
        bits = _bits(seed, spec.text + spec.id, n * n).reshape(n, n)
        m = max(2, min(w, h) // 6)
        cw, ch = (w - 2 * m) // n, (h - 2 * m) // n
        for r in range(n):
            for c in range(n):
                if bits[r, c]:
                    canvas[y0 + m + r * ch:y0 + m + (r + 1) * ch, x0 + m + c * cw:x0 + m + (c + 1) * cw] = ink
        return
    # Text-like: dashes of varying length on one or more lines.
    line_h = 6
    lines = max(1, (h - 4) // (line_h + 3))
    glyphs = max(1, (w - 8) // 7)
    bits = _bits(seed, spec.text or spec.id, lines * glyphs).reshape(lines, glyphs)
    top = y0 + (h - lines * (line_h + 3) + 3) // 2
    for r in range(lines):
        ly = top + r * (line_h + 3)
        for c in range(glyphs):
            if bits[r, c]:
                gx = x0 + 4 + c * 7
                canvas[ly:ly + line_h, gx:gx + 5] = ink


def render_static(manifest: EnvironmentManifest, sid: str, page: int) -> np.ndarray:
    """Everything except animated regions."""
    w, h = manifest.resolution
    seed = manifest.render_seed
    spec = manifest.screen(sid)
    bg = BACKGROUNDS.get(manifest.style, (255, 255, 255))
    canvas = np.empty((h, w, 3), dtype=np.uint8)
    canvas[:] = bg
    band = class_color(seed, ("band", manifest.name))
    canvas[:HEADER_H] = band
    canvas[h - FOOTER_H:] = tuple(int(c * 0.6) for c in band)
    for e in spec.visible(page):
        if e.shape == "banner":
            continue
        fill = e.color or text_tint(seed, class_color(seed, e.classes), e.text)
        x0, y0, x1, y1 = e.box
        canvas[y0:y1, x0:x1] = fill
        _draw_glyph(canvas, e, seed, fill, _contrast(fill))
    return canvas


def draw_animated(canvas: np.ndarray, manifest: EnvironmentManifest, sid: str, page: int,
                  tick: int) -> np.ndarray:
    for e in manifest.screen(sid).visible(page):
        if e.shape != "banner":
            continue
        x0, y0, x1, y1 = e.box
        fill = BANNER_COLORS[tick % len(BANNER_COLORS)]
        canvas[y0:y1, x0:x1] = fill
        stripe = (tick * 9) % max(1, x1 - x0)
        canvas[y0 + 4:y1 - 4, x0 + stripe:min(x1, x0 + stripe + 12)] = _contrast(fill)
    return canvas


def has_animation(manifest: EnvironmentManifest, sid: str, page: int) -> bool:
    return any(e.shape == "banner" for e in manifest.screen(sid).visible(page))
