"""Numbered box overlays burned into screenshots."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from PIL import Image, ImageDraw, ImageFont

MARK_COLORS = [(255, 0, 64), (0, 160, 255), (255, 170, 0), (0, 200, 120)]

_FONT = None


def _font():
    global _FONT
    if _FONT is None:
        _FONT = ImageFont.load_default()
    return _FONT


def mark_boxes(screenshot: np.ndarray, boxes: Sequence, width: int = 2) -> np.ndarray:
    """Copy of ``screenshot`` with ``boxes[i]`` outlined and labelled ``i + 1``.

    A ``None`` entry keeps its number reserved but draws nothing.
    """
    img = Image.fromarray(np.asarray(screenshot, dtype=np.uint8))
    draw = ImageDraw.Draw(img)
    font = _font()
    w, h = img.size
    for i, box in enumerate(boxes):
        if box is None:
            continue
        color = MARK_COLORS[i % len(MARK_COLORS)]
        x0, y0, x1, y1 = (int(v) for v in box)
        x1, y1 = max(x0, x1 - 1), max(y0, y1 - 1)
        draw.rectangle((x0, y0, x1, y1), outline=color, width=width)
        label = str(i + 1)
        lx, ly = min(x0, w - 9), max(0, y0 - 11)
        draw.rectangle((lx, ly, lx + 8, ly + 10), fill=color)
        draw.text((lx + 2, ly), label, fill=(255, 255, 255), font=font)
    return np.asarray(img)
