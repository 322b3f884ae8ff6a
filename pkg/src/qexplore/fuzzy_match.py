"""Shift-tolerant visual matching of GUI elements and screens.

Two patches are compared after Gaussian smoothing, sliding one over the other
across every integer shift that keeps the required overlap, and keeping the
best alignment. Screens are compared element by element; the screen score is
the worst element score.
"""

from __future__ import annotations

import hashlib
import logging
from collections import OrderedDict
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .screen import Screen

logger = logging.getLogger(__name__)

_EPS = 1e-12


@dataclass(frozen=True)
class MatchConfig:
    identity_threshold: float = 0.05
    min_overlap: float = 0.75
    gaussian_sigma: float = 1.0
    gaussian_kernel: int = 5
    shift_step: int = 1
    dynamic_frames: int = 3
    aggregate: str = "mean"  # "mean" or "max" (max over pixels)

    def __post_init__(self):
        if not 0 < self.identity_threshold < 1:
            raise ValueError("identity_threshold must be in (0, 1)")
        if not 0.5 <= self.min_overlap <= 1:
            raise ValueError("min_overlap must be in [0.5, 1]")
        if self.gaussian_sigma <= 0 or self.gaussian_kernel <= 0 or self.shift_step <= 0:
            raise ValueError("pixel parameters must be positive")
        if self.dynamic_frames < 1:
            raise ValueError("dynamic_frames must be positive")
        if self.aggregate not in ("mean", "max"):
            raise ValueError("aggregate must be 'mean' or 'max'")

    def to_dict(self) -> dict:
        return asdict(self)


def smooth(img: np.ndarray, cfg: MatchConfig) -> np.ndarray:
    """Gaussian-smooth an (H, W[, C]) raster spatially, returning float64."""
    arr = np.asarray(img, dtype=np.float64)
    radius = (cfg.gaussian_kernel - 1) / 2
    truncate = radius / cfg.gaussian_sigma if radius > 0 else 0.0
    sigma = (cfg.gaussian_sigma, cfg.gaussian_sigma) + (0,) * (arr.ndim - 2)
    if truncate == 0:
        return arr
    return ndimage.gaussian_filter(arr, sigma=sigma, truncate=truncate, mode="nearest")


def _as3(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    return a[:, :, None] if a.ndim == 2 else a


def _valid_shifts(ha, wa, hb, wb, cfg: MatchConfig):
    """(dy, dx) offsets of b's origin in a's frame meeting the overlap bound."""
    step = cfg.shift_step
    dys = np.arange(-((hb - 1) // step) * step, ha, step)
    dxs = np.arange(-((wb - 1) // step) * step, wa, step)
    oh = np.minimum(ha, dys + hb) - np.maximum(0, dys)
    ow = np.minimum(wa, dxs + wb) - np.maximum(0, dxs)
    area = oh[:, None] * ow[None, :]
    ok = area >= cfg.min_overlap * max(ha * wa, hb * wb) - _EPS
    iy, ix = np.nonzero(ok)
    if len(iy) == 0:
        return np.array([0]), np.array([0])
    return dys[iy], dxs[ix]


def _sat(x: np.ndarray) -> np.ndarray:
    s = np.zeros((x.shape[0] + 1, x.shape[1] + 1, x.shape[2]))
    s[1:, 1:] = x.cumsum(0).cumsum(1)
    return s


def _box_sums(sat, y0, y1, x0, x1):
    return sat[y1, x1] - sat[y0, x1] - sat[y1, x0] + sat[y0, x0]


def _projection_bound(a, b, dys, dxs, y0, y1, x0, x1, axis):
    """Sum over overlap rows (axis=0) or columns (axis=1) of |row sum a - row sum b|.

    Grouping pixels can only lose mass in the triangle inequality, so this is
    a lower bound on the summed absolute difference, and tighter than the
    whole-overlap bound.
    """
    if axis == 1:
        a, b = a.transpose(1, 0, 2), b.transpose(1, 0, 2)
        dys, dxs, y0, y1, x0, x1 = dxs, dys, x0, x1, y0, y1
    ca = np.zeros((a.shape[0], a.shape[1] + 1, a.shape[2]))
    ca[:, 1:] = a.cumsum(1)
    cb = np.zeros((b.shape[0], b.shape[1] + 1, b.shape[2]))
    cb[:, 1:] = b.cumsum(1)
    span = int((y1 - y0).max())
    rows = y0[:, None] + np.arange(span)[None, :]
    valid = rows < y1[:, None]
    ra = np.minimum(rows, a.shape[0] - 1)
    rb = np.clip(rows - dys[:, None], 0, b.shape[0] - 1)
    sa = ca[ra, x1[:, None]] - ca[ra, x0[:, None]]
    sb = cb[rb, (x1 - dxs)[:, None]] - cb[rb, (x0 - dxs)[:, None]]
    return (np.abs(sa - sb).sum(axis=2) * valid).sum(axis=1)


_PROJECTION_BUDGET = 1_000_000


def _score_at(a, b, dy, dx, mask, cfg: MatchConfig) -> float:
    ha, wa = a.shape[:2]
    hb, wb = b.shape[:2]
    y0, y1 = max(0, dy), min(ha, dy + hb)
    x0, x1 = max(0, dx), min(wa, dx + wb)
    if y1 <= y0 or x1 <= x0:
        return 1.0
    diff = np.abs(a[y0:y1, x0:x1] - b[y0 - dy:y1 - dy, x0 - dx:x1 - dx])
    if mask is not None:
        diff = diff * ~mask[y0:y1, x0:x1, None]
    if cfg.aggregate == "max":
        val = float(diff.max())
    else:
        # Masked pixels count as zero difference so a larger mask never
        # raises the score.
        val = float(diff.mean())
    return min(1.0, max(0.0, val / 255.0))


def _difference_smoothed(a, b, cfg: MatchConfig, mask=None, early_exit=False) -> float:
    a = _as3(a)
    b = _as3(b)
    ha, wa = a.shape[:2]
    hb, wb = b.shape[:2]
    dys, dxs = _valid_shifts(ha, wa, hb, wb, cfg)
    if len(dys) == 1:
        return _score_at(a, b, int(dys[0]), int(dxs[0]), mask, cfg)

    if early_exit:
        # Unshifted renders usually line up, so try that before any bounds.
        if np.any((dys == 0) & (dxs == 0)):
            s0 = _score_at(a, b, 0, 0, mask, cfg)
            if s0 <= cfg.identity_threshold:
                return s0

    if mask is None:
        # Triangle inequality per channel: mean|a-b| >= |mean a - mean b|.
        y0 = np.maximum(0, dys)
        y1 = np.minimum(ha, dys + hb)
        x0 = np.maximum(0, dxs)
        x1 = np.minimum(wa, dxs + wb)
        sa = _box_sums(_sat(a), y0, y1, x0, x1)
        sb = _box_sums(_sat(b), y0 - dys, y1 - dys, x0 - dxs, x1 - dxs)
        n = (y1 - y0) * (x1 - x0) * a.shape[2] * 255.0
        bound = np.abs(sa - sb).sum(axis=1) / n
        # Tighten only where the cheap bound leaves the shift in play.
        live = np.nonzero(bound <= cfg.identity_threshold)[0] if early_exit else np.arange(len(dys))
        chunk = max(1, _PROJECTION_BUDGET // (max(ha, wa) * a.shape[2]))
        for start in range(0, len(live), chunk):
            sel = live[start:start + chunk]
            args = (dys[sel], dxs[sel], y0[sel], y1[sel], x0[sel], x1[sel])
            proj = np.maximum(_projection_bound(a, b, *args, axis=0),
                              _projection_bound(a, b, *args, axis=1))
            bound[sel] = np.maximum(bound[sel], proj / n[sel])
    else:
        bound = np.zeros(len(dys))
    radius = np.abs(dys) + np.abs(dxs)
    order = np.lexsort((radius, bound))

    best = np.inf
    for idx in order:
        if bound[idx] - _EPS >= best:
            break
        if early_exit and bound[idx] - _EPS > cfg.identity_threshold:
            # Only the classification matters and no remaining shift can pass.
            best = min(best, float(bound[idx]))
            break
        s = _score_at(a, b, int(dys[idx]), int(dxs[idx]), mask, cfg)
        if s < best:
            best = s
            if best == 0.0 or (early_exit and best <= cfg.identity_threshold):
                break
    return float(best)


def patch_difference(a: np.ndarray, b: np.ndarray, cfg: MatchConfig = MatchConfig(),
                     mask: Optional[np.ndarray] = None, early_exit: bool = False) -> float:
    """Best-alignment difference score in [0, 1] between two raster patches.

    ``mask`` is in ``a``'s frame; True pixels are excluded. With
    ``early_exit`` the search stops at the first shift scoring at or below the
    identity threshold, so the value is only guaranteed to classify correctly.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    mask = _check_patches(a, b, mask)
    if mask is not None and mask.all():
        return 0.0
    if mask is None and a.shape == b.shape and np.array_equal(a, b):
        return 0.0
    return _difference_smoothed(smooth(a, cfg), smooth(b, cfg), cfg, mask, early_exit)


def _check_patches(a, b, mask):
    if a.size == 0 or b.size == 0:
        raise ValueError("patches must be non-empty")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != a.shape[:2]:
            raise ValueError("mask must match the first patch's dimensions")
    return mask


def screens_equal(a: Screen, b: Screen, cfg: MatchConfig = MatchConfig(),
                  extra_mask: Optional[np.ndarray] = None,
                  exhaustive: bool = True, patch_fn=None) -> tuple[bool, float]:
    """Compare every element of ``a`` with the same-coordinates crop of ``b``.

    Returns ``(p <= threshold, p)`` where ``p`` is the worst element score.
    With ``exhaustive=False`` the comparison stops at the first element over
    the threshold and ``p`` is that element's score (a lower bound on the true
    maximum, still above the threshold).
    """
    ha, wa = a.screenshot.shape[:2]
    hb, wb = b.screenshot.shape[:2]
    if hb < ha or wb < wa:
        return False, 1.0
    mask = a.dynamic_mask
    if extra_mask is not None:
        mask = extra_mask if mask is None else (mask | extra_mask)

    elements = [el for _, el in a.elements() if el.box[2] > el.box[0] and el.box[3] > el.box[1]]
    if not exhaustive:
        if (hb, wb) == (ha, wa) and np.array_equal(a.screenshot, b.screenshot):
            return True, 0.0
        # Small elements first: cheap to compare and the most discriminative.
        elements.sort(key=lambda el: (el.box[2] - el.box[0]) * (el.box[3] - el.box[1]))

    p = 0.0
    for el in elements:
        x0, y0, x1, y1 = el.box
        m = None
        if mask is not None:
            m = mask[y0:y1, x0:x1]
            if m.all():
                continue
            if not m.any():
                m = None
        pa, pb = a.screenshot[y0:y1, x0:x1], b.screenshot[y0:y1, x0:x1]
        if patch_fn is None:
            s = patch_difference(pa, pb, cfg, mask=m, early_exit=not exhaustive)
        else:
            s = patch_fn(pa, pb, mask=m, early_exit=not exhaustive)
        p = max(p, s)
        if not exhaustive and p > cfg.identity_threshold:
            return False, p
    return p <= cfg.identity_threshold, p


def dynamic_region_mask(frames: Sequence[np.ndarray], cfg: MatchConfig = MatchConfig()) -> np.ndarray:
    """Pixels whose smoothed value varies beyond the threshold across frames."""
    if len(frames) == 0:
        raise ValueError("need at least one frame")
    shape = np.asarray(frames[0]).shape
    if any(np.asarray(f).shape != shape for f in frames):
        raise ValueError("frames must share dimensions")
    first = np.asarray(frames[0])
    if len(frames) < 2 or all(np.array_equal(first, f) for f in frames[1:]):
        return np.zeros(shape[:2], dtype=bool)
    stack = np.stack([_as3(smooth(f, cfg)) for f in frames])
    spread = (stack.max(axis=0) - stack.min(axis=0)) / 255.0
    return spread.max(axis=2) > cfg.identity_threshold


def _digest(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr)
    h = hashlib.blake2b(digest_size=16)
    h.update(repr((arr.shape, arr.dtype.str)).encode())
    h.update(arr.tobytes())
    return h.digest()


class Matcher:
    """A MatchConfig plus memos of patch and screen comparisons.

    Explored screens are revisited often, so the same element pairs and the
    same screen pairs get compared many times over a run.
    """

    def __init__(self, cfg: MatchConfig = MatchConfig(), cache_size: int = 65536):
        self.cfg = cfg
        self.cache_size = cache_size
        self._cache: OrderedDict = OrderedDict()
        self._screens: OrderedDict = OrderedDict()
        self._smooth: OrderedDict = OrderedDict()

    def _remember(self, memo: OrderedDict, key, val):
        memo[key] = val
        if len(memo) > self.cache_size:
            memo.popitem(last=False)
        return val

    def _smoothed(self, patch: np.ndarray, digest: bytes) -> np.ndarray:
        hit = self._smooth.get(digest)
        if hit is None:
            hit = self._remember(self._smooth, digest, smooth(patch, self.cfg))
        return hit

    def patch_difference(self, a, b, mask=None, early_exit=False) -> float:
        a, b = np.asarray(a), np.asarray(b)
        mask = _check_patches(a, b, mask)
        if mask is not None and mask.all():
            return 0.0
        da, db = _digest(a), _digest(b)
        key = (da, db, None if mask is None else _digest(np.packbits(mask)), early_exit)
        hit = self._cache.get(key)
        if hit is not None:
            self._cache.move_to_end(key)
            return hit
        if mask is None and da == db:
            val = 0.0
        else:
            val = _difference_smoothed(self._smoothed(a, da), self._smoothed(b, db), self.cfg,
                                       mask, early_exit)
        return self._remember(self._cache, key, val)

    def screens_equal(self, a: Screen, b: Screen, extra_mask=None, exhaustive=False):
        return screens_equal(a, b, self.cfg, extra_mask=extra_mask, exhaustive=exhaustive,
                             patch_fn=self.patch_difference)

    def same_screen(self, node: Screen, probe: Screen) -> bool:
        """Fuzzy identity used for graph deduplication.

        Different resolutions never match. The check runs in both directions
        with the union of both dynamic masks, so neither screen's elements may
        differ from the other's pixels.
        """
        if node.screenshot.shape != probe.screenshot.shape:
            return False
        union = _union(node.dynamic_mask, probe.dynamic_mask)
        key = (_screen_key(node), _screen_key(probe), None if union is None else _digest(np.packbits(union)))
        hit = self._screens.get(key)
        if hit is not None:
            return hit
        same = (self.screens_equal(node, probe, extra_mask=union)[0]
                and self.screens_equal(probe, node, extra_mask=union)[0])
        return self._remember(self._screens, key, same)

    def most_similar(self, target, pool):
        return most_similar_elements(target, pool, self.cfg, matcher=self)


def _screen_key(s: Screen) -> bytes:
    # Screenshots and DOMs are never edited in place, so the key is memoized
    # on the object; only the mask can change and it is keyed separately.
    memo = s.__dict__.get("_match_key")
    if memo is not None and memo[0] is s.screenshot and memo[1] is s.dom:
        return memo[2]
    boxes = np.array([el.box for _, el in s.elements()], dtype=np.int64)
    key = _digest(s.screenshot) + _digest(boxes)
    s.__dict__["_match_key"] = (s.screenshot, s.dom, key)
    return key


def _union(m1, m2):
    if m1 is None:
        return m2
    if m2 is None:
        return m1
    return m1 | m2


def most_similar_elements(target: np.ndarray, pool: Sequence[tuple[str, np.ndarray]],
                          cfg: MatchConfig = MatchConfig(), matcher: Optional[Matcher] = None
                          ) -> list[tuple[str, np.ndarray, float]]:
    """Pool entries sorted ascending by difference to ``target`` (stable)."""
    score = matcher.patch_difference if matcher is not None else (
        lambda a, b: patch_difference(a, b, cfg))
    scored = [(key, patch, score(target, patch)) for key, patch in pool]
    return sorted(scored, key=lambda item: item[2])
