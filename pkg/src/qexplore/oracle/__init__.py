"""The multimodal model behind scoring, description, query generation and ranking."""

from __future__ import annotations

import logging
from collections import Counter
from pathlib import Path
from typing import Optional, Sequence

from ..errors import OracleError, OracleParseError
from ..screen import Action, Screen, action_patch
from .backends import Backend, CassetteBackend, MockBackend, RateLimiter, RemoteBackend, heuristic_reply
from .marks import mark_boxes
from .parse import (APPEARANCE_CAP, SYSTEM1_CAP, SYSTEM2_CAP, parse_bundle, parse_description,
                    parse_score, parse_verdict, strip_box_mentions)
from .request import TEMPLATE_VERSION, OracleRequest, QueryBundle, Task, render, template_text

logger = logging.getLogger(__name__)

__all__ = [
    "APPEARANCE_CAP", "Backend", "CassetteBackend", "MockBackend", "Oracle", "OracleRequest",
    "QueryBundle", "RateLimiter", "RemoteBackend", "SYSTEM1_CAP", "SYSTEM2_CAP", "TEMPLATE_VERSION",
    "Task", "element_label", "heuristic_reply", "make_oracle", "mark_boxes", "parse_bundle",
    "parse_description", "parse_score", "parse_verdict", "render", "strip_box_mentions",
    "template_text",
]


def element_label(screen: Screen, action: Action) -> str:
    """Short human-readable name of an action's target."""
    t = action.target
    if t.is_full_page:
        return f"the page (scroll {t.direction or 'down'})"
    el = screen.dom.find(t.element_id) if t.element_id else None
    text = el.text if el is not None and el.text else ""
    kind = {"a": "link", "button": "button", "span": "icon"}.get(t.tag, t.tag or "element")
    return f'the "{text}" {kind}' if text else f"the {kind} at {list(t.box)}"


def _box(screen: Screen, action: Action):
    if action.target.is_full_page or action.target.box is None:
        h, w = screen.screenshot.shape[:2]
        return (0, 0, w, h)
    return action.target.box


class Oracle:
    """Task-level calls with retries and output contracts over any backend."""

    def __init__(self, backend: Backend, retries: int = 2, score_clamp=(0.0, 100.0)):
        if retries < 0:
            raise ValueError("retries must be >= 0")
        self.backend = backend
        self.retries = retries
        self.score_clamp = tuple(score_clamp)
        self.calls: Counter = Counter()

    @property
    def total_calls(self) -> int:
        return sum(self.calls.values())

    def _ask(self, request: OracleRequest, parse):
        last: Optional[Exception] = None
        for _ in range(self.retries + 1):
            self.calls[request.task.value] += 1
            try:
                return parse(self.backend.complete(request))
            except OracleError as exc:
                last = exc
                logger.debug("%s attempt failed: %s", request.task.value, exc)
        if isinstance(last, OracleParseError):
            raise last
        raise OracleParseError(f"{request.task.value} failed after {self.retries + 1} attempts: {last}")

    def predict_qhat(self, screen: Screen, candidate: Action, history: Sequence = (),
                     examples: Sequence[tuple[Action, float]] = (), notes: Sequence[str] = (),
                     q: Optional[float] = None) -> float:
        """Score one candidate in [score_clamp]; the candidate is box 1, examples boxes 2 and 3.

        ``history`` holds transition descriptions (objects with ``render()``).
        ``q`` is the candidate's current table value, forwarded to the mock only.
        ``notes`` are extra free-text examples for callers without boxed ones.
        """
        examples = list(examples)[:2]
        lines = [f"Box {i + 2} marks an action already taken from this screen; "
                 f"its estimated value was {qv:.2f}." for i, (_, qv) in enumerate(examples)]
        lines += [f"Earlier the agent did this: {n}" for n in notes]
        example_text = ("\n" + "\n".join(lines) + "\n") if lines else ""
        hist = "\n".join(d.render() for d in history) or "(nothing yet)"
        prompt = render(Task.SCORE_QHAT, history=hist, examples=example_text)
        image = mark_boxes(screen.screenshot, [_box(screen, candidate)] + [_box(screen, a) for a, _ in examples])
        ctx = {"candidate_key": candidate.action_key, "q": q,
               "example_q": [qv for _, qv in examples],
               "described_keys": [d.action_key for d in history]}
        req = OracleRequest(Task.SCORE_QHAT, prompt, [image], ctx)
        lo, hi = self.score_clamp
        return self._ask(req, lambda text: parse_score(text, lo, hi))

    def describe_transition(self, before: Screen, action: Action, after: Screen,
                            to_id: Optional[str] = None) -> dict:
        label = element_label(before, action)
        prompt = render(Task.DESCRIBE_TRANSITION, action=f"{action.action_type.value} on {label}")
        images = [mark_boxes(before.screenshot, [_box(before, action)]), after.screenshot]
        ctx = {"element": label, "to_id": to_id or after.id}
        return self._ask(OracleRequest(Task.DESCRIBE_TRANSITION, prompt, images, ctx), parse_description)

    def generate_queries(self, before: Screen, action: Action, after: Screen,
                         to_id: Optional[str] = None) -> QueryBundle:
        """Queries grounding ``action``'s element, from the before/after/crop views."""
        label = element_label(before, action)
        prompt = render(Task.GENERATE_QUERIES, element=label)
        images = [mark_boxes(before.screenshot, [_box(before, action)]), after.screenshot,
                  action_patch(before, action)]
        ctx = {"element": label, "to_id": to_id or after.id}
        return self._ask(OracleRequest(Task.GENERATE_QUERIES, prompt, images, ctx), parse_bundle)

    def rank_coverage(self, d_a: Sequence, d_b: Sequence) -> str:
        """"A" or "B": which description list shows broader coverage. Ties go to A."""
        prompt = render(Task.RANK_COVERAGE,
                        list_a="\n".join(d.render() for d in d_a) or "(no actions)",
                        list_b="\n".join(d.render() for d in d_b) or "(no actions)")
        ctx = {"keys_a": [d.action_key for d in d_a], "keys_b": [d.action_key for d in d_b]}
        self.calls[Task.RANK_COVERAGE.value] += 1
        verdict = parse_verdict(self.backend.complete(OracleRequest(Task.RANK_COVERAGE, prompt, [], ctx)))
        if verdict is None:
            logger.warning("coverage ranking undecided; defaulting to A")
            return "A"
        return verdict


def make_oracle(kind: str = "mock", cassette: Optional[Path] = None, retries: int = 2,
                env=None) -> Oracle:
    """Build an oracle from a backend name: mock, remote, replay or record.

    ``record`` wraps the remote backend (configured from the environment)
    and appends every reply to ``cassette``; ``replay`` never touches the
    network.
    """
    if kind == "mock":
        backend: Backend = MockBackend()
    elif kind == "remote":
        backend = RemoteBackend.from_env(env)
    elif kind in ("replay", "record", "record-mock"):
        if cassette is None:
            raise OracleError(f"oracle {kind!r} needs a cassette path")
        if kind == "replay":
            backend = CassetteBackend(cassette, "replay")
        else:
            inner = MockBackend() if kind == "record-mock" else RemoteBackend.from_env(env)
            backend = CassetteBackend(cassette, "auto", inner)
    else:
        raise OracleError(f"unknown oracle backend {kind!r}")
    return Oracle(backend, retries=retries)
