"""Interchangeable completion backends: offline mock, cassette and remote HTTP.

A backend turns an :class:`OracleRequest` into raw response text. Parsing,
retries and clamping live one level up in :class:`~qexplore.oracle.Oracle`,
so every backend is held to the same contracts.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import logging
import os
import threading
import time
from pathlib import Path
from typing import Callable, Mapping, Optional, Protocol, Union

import httpx
import numpy as np
from PIL import Image

from ..errors import CassetteMissError, OracleError
from .request import OracleRequest, Task

logger = logging.getLogger(__name__)


class Backend(Protocol):
    name: str

    def complete(self, request: OracleRequest) -> str:
        ...


Scripted = Union[str, list, Callable[[OracleRequest], str]]


class MockBackend:
    """Deterministic offline stand-in for a multimodal model.

    ``script`` maps a request hash or a task name to a fixed reply, a list of
    replies consumed in order (the last one repeats) or a callable. Anything
    unscripted falls through to a heuristic that reads ``request.context``.
    """

    name = "mock"

    def __init__(self, script: Optional[Mapping[str, Scripted]] = None):
        self.script = dict(script or {})
        self._cursor: dict[str, int] = {}
        self.calls = 0
        self.requests: list[OracleRequest] = []
        self._lock = threading.Lock()

    def complete(self, request: OracleRequest) -> str:
        with self._lock:
            self.calls += 1
            self.requests.append(request)
            for key in (request.request_hash, request.task.value):
                if key in self.script:
                    return self._scripted(key, request)
        return heuristic_reply(request)

    def _scripted(self, key: str, request: OracleRequest) -> str:
        entry = self.script[key]
        if callable(entry):
            return entry(request)
        if isinstance(entry, list):
            i = self._cursor.get(key, 0)
            self._cursor[key] = i + 1
            return entry[min(i, len(entry) - 1)]
        return entry


def _h(request: OracleRequest, salt: str) -> int:
    return int(hashlib.sha256((salt + request.request_hash).encode()).hexdigest()[:12], 16)


def heuristic_reply(request: OracleRequest) -> str:
    ctx = request.context
    task = request.task
    if task is Task.SCORE_QHAT:
        if ctx.get("q") is not None:
            return repr(float(ctx["q"]))
        # Without a Q-table the stand-in judges novelty from the described edges.
        tried = ctx.get("candidate_key") in set(ctx.get("described_keys", ()))
        return "50" if tried else "100"
    if task is Task.DESCRIBE_TRANSITION:
        element = ctx.get("element", "the element")
        dest = ctx.get("to_id", "another screen")
        return json.dumps({"consequence": f"the screen changed to {dest}",
                           "clicked_element": element})
    if task is Task.GENERATE_QUERIES:
        element = ctx.get("element", "the element")
        dest = ctx.get("to_id", "the next screen")
        n1 = 1 + _h(request, "s1") % 6
        n2 = 1 + _h(request, "s2") % 5
        forms1 = ["click {e}", "select {e}", "tap {e}", "press {e}", "choose {e}", "hit {e}"]
        forms2 = ["go to {d}", "open {d}", "show me {d}", "navigate to {d}", "bring up {d}"]
        system1 = [{"text": f.format(e=element), "appearance": i < 2} for i, f in enumerate(forms1[:n1])]
        system2 = [f.format(d=dest) for f in forms2[:n2]]
        return json.dumps({"analysis": f"{element} leads to {dest}", "system1": system1,
                           "system2": system2})
    if task is Task.RANK_COVERAGE:
        a = len(set(ctx.get("keys_a", ())))
        b = len(set(ctx.get("keys_b", ())))
        return "A" if a > b else "B" if b > a else "tie"
    raise OracleError(f"no heuristic for task {task}")


class CassetteBackend:
    """Append-only JSONL log of (request_hash, task, response).

    ``mode="replay"`` answers only from the log and raises
    :class:`CassetteMissError` for anything unrecorded. ``"record"`` forwards
    every request to ``inner`` and appends the reply. ``"auto"`` replays when
    it can and records otherwise. Repeated identical requests replay their
    recordings in order, the last one repeating.
    """

    name = "cassette"

    def __init__(self, path, mode: str = "replay", inner: Optional[Backend] = None):
        if mode not in ("replay", "record", "auto"):
            raise ValueError(f"unknown cassette mode {mode!r}")
        if mode != "replay" and inner is None:
            raise ValueError(f"cassette mode {mode!r} needs an inner backend")
        self.path = Path(path)
        self.mode = mode
        self.inner = inner
        self.calls = 0
        self._lock = threading.Lock()
        self._recorded: dict[str, list[str]] = {}
        self._cursor: dict[str, int] = {}
        if self.path.exists():
            self._load()
        elif mode == "replay":
            raise CassetteMissError(f"cassette {self.path} does not exist")

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    self._recorded.setdefault(rec["request_hash"], []).append(rec["response"])
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise OracleError(f"{self.path}:{lineno}: bad cassette record ({exc})") from exc

    def __len__(self) -> int:
        return sum(len(v) for v in self._recorded.values())

    def complete(self, request: OracleRequest) -> str:
        with self._lock:
            self.calls += 1
            h = request.request_hash
            if self.mode != "record" and h in self._recorded:
                i = self._cursor.get(h, 0)
                self._cursor[h] = i + 1
                replies = self._recorded[h]
                return replies[min(i, len(replies) - 1)]
            if self.mode == "replay":
                raise CassetteMissError(f"no recording for {request.task.value} request {h[:16]}")
            reply = self.inner.complete(request)
            self._append(h, request.task.value, reply)
            return reply

    def _append(self, h: str, task: str, reply: str) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        line = json.dumps({"request_hash": h, "task": task, "response": reply},
                          sort_keys=True, ensure_ascii=False)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
        self._recorded.setdefault(h, []).append(reply)


def png_base64(img: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(img, dtype=np.uint8)).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


class RateLimiter:
    """At most ``rps`` acquisitions per second, shared across threads."""

    def __init__(self, rps: float, clock=time.monotonic, sleep=time.sleep):
        if rps <= 0:
            raise ValueError("rps must be positive")
        self.interval = 1.0 / rps
        self._clock = clock
        self._sleep = sleep
        self._next = 0.0
        self._lock = threading.Lock()

    def acquire(self) -> None:
        with self._lock:
            now = self._clock()
            wait = self._next - now
            if wait > 0:
                self._sleep(wait)
                now += wait
            self._next = now + self.interval


class RemoteBackend:
    """Chat-completions style HTTP endpoint with images sent inline as base64 PNG."""

    name = "remote"

    def __init__(self, url: str, key: str, model: str, rps: float = 1.0, timeout: float = 60.0,
                 client: Optional[httpx.Client] = None):
        if not url or not model:
            raise OracleError("remote oracle needs a URL and a model name")
        self.url = url
        self.model = model
        self._headers = {"Authorization": f"Bearer {key}"} if key else {}
        self.limiter = RateLimiter(rps)
        self.client = client or httpx.Client(timeout=timeout)
        self.calls = 0

    @classmethod
    def from_env(cls, env: Optional[Mapping[str, str]] = None, **kw) -> RemoteBackend:
        env = os.environ if env is None else env
        missing = [k for k in ("ORACLE_URL", "ORACLE_MODEL") if not env.get(k)]
        if missing:
            raise OracleError(f"remote oracle not configured; set {', '.join(missing)}")
        try:
            rps = float(env.get("ORACLE_RPS", "1"))
        except ValueError as exc:
            raise OracleError(f"ORACLE_RPS must be a number, got {env['ORACLE_RPS']!r}") from exc
        return cls(env["ORACLE_URL"], env.get("ORACLE_KEY", ""), env["ORACLE_MODEL"], rps=rps, **kw)

    def payload(self, request: OracleRequest) -> dict:
        content = [{"type": "text", "text": request.prompt}]
        for img in request.images:
            content.append({"type": "image_url",
                            "image_url": {"url": "data:image/png;base64," + png_base64(img)}})
        return {"model": self.model, "temperature": 0,
                "messages": [{"role": "user", "content": content}]}

    def complete(self, request: OracleRequest) -> str:
        self.limiter.acquire()
        self.calls += 1
        try:
            resp = self.client.post(self.url, json=self.payload(request), headers=self._headers)
            resp.raise_for_status()
            body = resp.json()
            content = body["choices"][0]["message"]["content"]
        except httpx.HTTPError as exc:
            raise OracleError(f"oracle request failed: {exc}") from exc
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise OracleError(f"unexpected oracle response shape: {exc}") from exc
        if isinstance(content, list):  # some servers return content parts
            content = "".join(p.get("text", "") for p in content if isinstance(p, dict))
        if not isinstance(content, str):
            raise OracleError("oracle response content is not text")
        return content
