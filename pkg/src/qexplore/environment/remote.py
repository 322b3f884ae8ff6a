"""Length-prefixed socket protocol for driving an environment in another process.

Every message is one frame::

    >II  header length, blob length (big-endian uint32)
    header  UTF-8 JSON object
    blob    PNG bytes of a screenshot, or empty

Requests carry ``{"op": ..., "version": 1}`` with op one of RESET,
CANDIDATES, EXECUTE (plus ``action_key`` and ``source_screen_id``) and
OBSERVE. Replies carry ``{"ok": true, ...}``; screen-returning ops add
``screen = {id, dom, a11y}`` and the screenshot in the blob, CANDIDATES adds
``actions``. Failures reply ``{"ok": false, "error": ...}``.
"""

from __future__ import annotations

import io
import json
import socket
import socketserver
import struct
import threading
from typing import Optional

import numpy as np
from PIL import Image

from ..errors import EnvironmentProtocolError
from ..screen import Action, Element, Screen

PROTOCOL_VERSION = 1
OPS = ("RESET", "CANDIDATES", "EXECUTE", "OBSERVE")
MAX_FRAME = 64 * 1024 * 1024
_PREFIX = struct.Struct(">II")


def encode_frame(header: dict, blob: bytes = b"") -> bytes:
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREFIX.pack(len(head), len(blob)) + head + blob


def _read_exact(sock, n: int) -> bytes:
    chunks, got = [], 0
    while got < n:
        chunk = sock.recv(min(n - got, 1 << 20))
        if not chunk:
            raise EnvironmentProtocolError("connection closed mid-frame" if got else "connection closed")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_frame(sock) -> tuple[dict, bytes]:
    hlen, blen = _PREFIX.unpack(_read_exact(sock, _PREFIX.size))
    if hlen + blen > MAX_FRAME:
        raise EnvironmentProtocolError(f"frame of {hlen + blen} bytes exceeds limit")
    try:
        header = json.loads(_read_exact(sock, hlen).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise EnvironmentProtocolError(f"bad frame header: {exc}") from exc
    if not isinstance(header, dict):
        raise EnvironmentProtocolError("frame header must be a JSON object")
    return header, _read_exact(sock, blen) if blen else b""


def png_bytes(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(img, dtype=np.uint8)).save(buf, format="PNG")
    return buf.getvalue()


def png_array(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as img:
        return np.array(img.convert("RGB"), dtype=np.uint8)


def screen_message(screen: Screen) -> tuple[dict, bytes]:
    return ({"id": screen.id, "dom": screen.dom.to_dict(), "a11y": screen.a11y},
            png_bytes(screen.screenshot))


def screen_from_message(meta: dict, blob: bytes) -> Screen:
    try:
        return Screen(meta["id"], png_array(blob), Element.from_dict(meta["dom"]), meta.get("a11y", ""))
    except (KeyError, TypeError, ValueError, OSError) as exc:
        raise EnvironmentProtocolError(f"malformed screen message: {exc}") from exc


class AdapterSession:
    """Server-side state for one connection: the environment plus issued actions."""

    def __init__(self, env):
        self.env = env
        self.current: Optional[Screen] = None
        self.issued: dict[str, Action] = {}

    def _screen_reply(self, screen: Screen) -> tuple[dict, bytes]:
        self.current = screen
        self.issued = {}
        meta, blob = screen_message(screen)
        return {"ok": True, "screen": meta}, blob

    def handle(self, header: dict) -> tuple[dict, bytes]:
        if header.get("version") != PROTOCOL_VERSION:
            return {"ok": False, "error": f"unsupported protocol version {header.get('version')!r}"}, b""
        op = header.get("op")
        try:
            if op == "RESET":
                return self._screen_reply(self.env.reset())
            if self.current is None:
                return {"ok": False, "error": "RESET must come first"}, b""
            if op == "OBSERVE":
                screen = self.env.observe()
                self.current = screen
                meta, blob = screen_message(screen)
                return {"ok": True, "screen": meta}, blob
            if op == "CANDIDATES":
                actions = self.env.get_candidate_actions(self.current)
                self.issued = {a.env_key: a for a in actions}
                return {"ok": True, "actions": [a.to_dict() for a in actions]}, b""
            if op == "EXECUTE":
                key = header.get("action_key")
                if header.get("source_screen_id") not in (None, self.current.id) or key not in self.issued:
                    return {"ok": False, "error": f"stale or unknown action {key!r}"}, b""
                return self._screen_reply(self.env.execute(self.issued[key]))
        except EnvironmentProtocolError as exc:
            return {"ok": False, "error": str(exc)}, b""
        return {"ok": False, "error": f"unknown op {op!r}"}, b""


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        session = AdapterSession(self.server.env_factory())
        while True:
            try:
                header, _ = read_frame(self.request)
            except (EnvironmentProtocolError, OSError, struct.error):
                return
            reply, blob = session.handle(header)
            try:
                self.request.sendall(encode_frame(reply, blob))
            except OSError:
                return


class AdapterServer(socketserver.ThreadingTCPServer):
    """Serves environments over TCP; each connection gets a fresh one from ``env_factory``."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, env_factory, host: str = "127.0.0.1", port: int = 0):
        self.env_factory = env_factory
        super().__init__((host, port), _Handler)

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[:2]

    def start(self) -> AdapterServer:
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        # shutdown() waits for serve_forever, so only call it while that loop runs
        thread = getattr(self, "_thread", None)
        if thread is not None:
            self._thread = None
            self.shutdown()
            thread.join()
            self.server_close()


class RemoteEnvironment:
    """Client side of the protocol; satisfies :class:`GUIEnvironment`."""

    def __init__(self, host: str, port: int, name: str = "remote", timeout: float = 30.0):
        self.name = name
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise EnvironmentProtocolError(f"cannot reach adapter at {host}:{port}: {exc}") from exc
        self._lock = threading.Lock()
        self.current_id: Optional[str] = None

    @classmethod
    def from_address(cls, address: str, **kw) -> RemoteEnvironment:
        host, _, port = address.rpartition(":")
        if not host or not port.isdigit():
            raise EnvironmentProtocolError(f"adapter address must be host:port, got {address!r}")
        return cls(host, int(port), **kw)

    def _call(self, header: dict) -> tuple[dict, bytes]:
        with self._lock:
            try:
                self._sock.sendall(encode_frame({**header, "version": PROTOCOL_VERSION}))
                reply, blob = read_frame(self._sock)
            except OSError as exc:
                raise EnvironmentProtocolError(f"adapter connection failed: {exc}") from exc
        if not reply.get("ok"):
            raise EnvironmentProtocolError(reply.get("error", "adapter reported failure"))
        return reply, blob

    def _screen(self, header: dict) -> Screen:
        reply, blob = self._call(header)
        screen = screen_from_message(reply.get("screen", {}), blob)
        self.current_id = screen.id
        return screen

    def reset(self) -> Screen:
        return self._screen({"op": "RESET"})

    def observe(self) -> Screen:
        return self._screen({"op": "OBSERVE"})

    def get_candidate_actions(self, screen: Screen) -> list[Action]:
        reply, _ = self._call({"op": "CANDIDATES"})
        try:
            return [Action.from_dict(d) for d in reply["actions"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise EnvironmentProtocolError(f"malformed candidate list: {exc}") from exc

    def execute(self, action: Action) -> Screen:
        return self._screen({"op": "EXECUTE", "action_key": action.env_key,
                             "source_screen_id": action.source_screen_id})

    def close(self) -> None:
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
