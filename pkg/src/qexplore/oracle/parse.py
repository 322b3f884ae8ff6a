"""Tolerant parsers for model responses."""

from __future__ import annotations

import json
import logging
import re
from typing import Optional

from ..errors import OracleParseError
from .request import QueryBundle

logger = logging.getLogger(__name__)

SYSTEM1_CAP = 6
SYSTEM2_CAP = 5
APPEARANCE_CAP = 3

_NUMBER = re.compile(r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?")
_BOX_REF = re.compile(r"\s*[\(\[]?\s*\b(?:(?:in|inside|within|marked by|marked with|at)\s+)?(?:the\s+)?"
                      r"(?:bounding\s+)?box\s*(?:no\.?\s*|number\s*|#\s*)?\d+\b\s*[\)\]]?", re.IGNORECASE)


def strip_box_mentions(text: str) -> str:
    out = _BOX_REF.sub(" ", text)
    out = re.sub(r"\s+([,.;:!?])", r"\1", out)
    return re.sub(r"\s{2,}", " ", out).strip()


def parse_score(text: str, low: float = 0.0, high: float = 100.0) -> float:
    """First number in the reply, clamped to ``[low, high]``.

    Box labels are removed first so "box 1: 70" reads as 70.
    """
    m = _NUMBER.search(_BOX_REF.sub(" ", text or ""))
    if m is None:
        raise OracleParseError(f"no number in response {text!r:.80}")
    value = float(m.group())
    if value != value:  # NaN cannot come out of the regex, but be safe
        raise OracleParseError("score is NaN")
    return min(high, max(low, value))


def first_json_object(text: str) -> Optional[dict]:
    """The first well-formed JSON object anywhere in ``text``."""
    decoder = json.JSONDecoder()
    text = text or ""
    start = text.find("{")
    while start != -1:
        try:
            obj, _ = decoder.raw_decode(text, start)
        except json.JSONDecodeError:
            obj = None
        if isinstance(obj, dict):
            return obj
        start = text.find("{", start + 1)
    return None


def parse_description(text: str) -> dict:
    obj = first_json_object(text)
    if obj is None:
        raise OracleParseError("no JSON object in description response")
    out = {}
    for k in ("consequence", "clicked_element"):
        v = obj.get(k)
        if not isinstance(v, str) or not strip_box_mentions(v):
            raise OracleParseError(f"description missing field {k!r}")
        out[k] = strip_box_mentions(v)
    return out


def _entries(raw) -> list[tuple[str, bool]]:
    if not isinstance(raw, list):
        return []
    out = []
    for item in raw:
        if isinstance(item, str):
            text, appearance = item, False
        elif isinstance(item, dict) and isinstance(item.get("text"), str):
            text, appearance = item["text"], bool(item.get("appearance", False))
        else:
            continue
        text = strip_box_mentions(text)
        if text:
            out.append((text, appearance))
    return out


def parse_bundle(text: str) -> QueryBundle:
    obj = first_json_object(text)
    if obj is None:
        raise OracleParseError("no JSON object in query response")
    warnings = []
    s1 = _entries(obj.get("system1"))
    s2 = _entries(obj.get("system2"))

    kept, n_appearance = [], 0
    for q, appearance in s1:
        if appearance:
            if n_appearance >= APPEARANCE_CAP:
                warnings.append(f"dropped appearance query beyond {APPEARANCE_CAP}: {q!r}")
                continue
            n_appearance += 1
        kept.append(q)
    if len(kept) > SYSTEM1_CAP:
        warnings.append(f"system1 truncated from {len(kept)} to {SYSTEM1_CAP}")
        kept = kept[:SYSTEM1_CAP]
    s2q = [q for q, _ in s2]
    if len(s2q) > SYSTEM2_CAP:
        warnings.append(f"system2 truncated from {len(s2q)} to {SYSTEM2_CAP}")
        s2q = s2q[:SYSTEM2_CAP]
    if not kept and not s2q:
        raise OracleParseError("no usable queries in response")
    for w in warnings:
        logger.warning(w)
    analysis = obj.get("analysis") if isinstance(obj.get("analysis"), str) else ""
    return QueryBundle(strip_box_mentions(analysis), tuple(kept), tuple(s2q), tuple(warnings))


def parse_verdict(text: str) -> Optional[str]:
    """"A" or "B" when the reply names exactly one of them."""
    found = set(re.findall(r"\b([AB])\b", text or ""))
    if len(found) == 1:
        return found.pop()
    return None
