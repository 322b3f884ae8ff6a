import json
import socket
import struct
import threading

import numpy as np
import pytest

from qexplore import archive
from qexplore.environment import AdapterServer, RemoteEnvironment, Simulator, check_environment
from qexplore.environment.remote import (MAX_FRAME, PROTOCOL_VERSION, AdapterSession, encode_frame,
                                         png_array, png_bytes, read_frame, screen_from_message,
                                         screen_message)
from qexplore.errors import EnvironmentProtocolError
from qexplore.oracle import make_oracle
from qexplore.policy import PolicyConfig, run_exploration

from conftest import noisy_manifest, two_screen_manifest


@pytest.fixture
def server():
    srv = AdapterServer(lambda: Simulator(noisy_manifest())).start()
    yield srv
    srv.stop()


def test_frame_layout():
    frame = encode_frame({"op": "RESET", "version": 1}, b"\x89PNG")
    hlen, blen = struct.unpack(">II", frame[:8])
    assert json.loads(frame[8:8 + hlen]) == {"op": "RESET", "version": 1}
    assert frame[8 + hlen:] == b"\x89PNG" and blen == 4


def test_frame_round_trip_over_socketpair():
    a, b = socket.socketpair()
    with a, b:
        blob = bytes(range(256)) * 1000  # larger than the socket buffer
        sender = threading.Thread(target=a.sendall, args=(encode_frame({"k": [1, 2]}, blob),))
        sender.start()
        assert read_frame(b) == ({"k": [1, 2]}, blob)
        sender.join()


@pytest.mark.parametrize("raw, message", [
    (struct.pack(">II", 3, 0) + b"{x}", "bad frame header"),
    (struct.pack(">II", 2, 0) + b"[]", "JSON object"),
    (struct.pack(">II", MAX_FRAME, 1), "exceeds"),
    (struct.pack(">II", 10, 0) + b"{}", "mid-frame"),
    (b"", "connection closed"),
])
def test_framing_errors(raw, message):
    a, b = socket.socketpair()
    with a, b:
        a.sendall(raw)
        a.shutdown(socket.SHUT_WR)
        with pytest.raises(EnvironmentProtocolError, match=message):
            read_frame(b)


def test_png_and_screen_messages(rng):
    img = rng.integers(0, 256, (30, 40, 3), dtype=np.uint8)
    assert np.array_equal(png_array(png_bytes(img)), img)
    s = Simulator(two_screen_manifest()).reset()
    back = screen_from_message(*screen_message(s))
    assert back == s
    with pytest.raises(EnvironmentProtocolError):
        screen_from_message({"id": "x"}, png_bytes(img))


def test_session_contract():
    sess = AdapterSession(Simulator(two_screen_manifest()))
    assert "version" in sess.handle({"op": "RESET"})[0]["error"]
    assert "RESET" in sess.handle({"op": "CANDIDATES", "version": 1})[0]["error"]
    reply, blob = sess.handle({"op": "RESET", "version": PROTOCOL_VERSION})
    assert reply["ok"] and reply["screen"]["id"] == "start" and blob.startswith(b"\x89PNG")
    assert "unknown op" in sess.handle({"op": "DANCE", "version": 1})[0]["error"]
    acts = sess.handle({"op": "CANDIDATES", "version": 1})[0]["actions"]
    key = acts[0]["env_key"]
    bad = sess.handle({"op": "EXECUTE", "version": 1, "action_key": key, "source_screen_id": "end"})[0]
    assert not bad["ok"] and "stale" in bad["error"]
    ok = sess.handle({"op": "EXECUTE", "version": 1, "action_key": key, "source_screen_id": "start"})[0]
    assert ok["screen"]["id"] == "end"
    again = sess.handle({"op": "EXECUTE", "version": 1, "action_key": key})[0]
    assert not again["ok"]  # issued actions expire with their screen


def test_remote_matches_simulator(server):
    host, port = server.address
    with RemoteEnvironment(host, port) as remote:
        local = Simulator(noisy_manifest())
        r, s = remote.reset(), local.reset()
        assert r == s
        for _ in range(6):
            rc, sc = remote.get_candidate_actions(r), local.get_candidate_actions(s)
            assert rc == sc
            r, s = remote.execute(rc[-1]), local.execute(sc[-1])
            assert r == s
        assert remote.observe().id == local.observe().id


def test_remote_conforms(server):
    with RemoteEnvironment.from_address(f"{server.address[0]}:{server.address[1]}") as remote:
        assert check_environment(remote, steps=10) == []


def test_remote_stale_action_raises(server):
    with RemoteEnvironment(*server.address) as remote:
        home = remote.reset()
        first = remote.get_candidate_actions(home)[0]
        remote.execute(first)
        with pytest.raises(EnvironmentProtocolError, match="stale"):
            remote.execute(first)


def test_exploration_over_the_wire_is_identical(server, tmp_path, matcher):
    cfg = PolicyConfig(T=30)
    with RemoteEnvironment(*server.address, name="noisy") as remote:
        g_remote = run_exploration(remote, "qicrl", cfg, make_oracle("mock"), matcher, seed=4)
    g_local = run_exploration(Simulator(noisy_manifest()), "qicrl", cfg, make_oracle("mock"), matcher, seed=4)
    assert g_remote == g_local
    archive.save(g_remote, tmp_path / "r")
    archive.save(g_local, tmp_path / "l")
    assert (tmp_path / "r" / "records.jsonl").read_bytes() == (tmp_path / "l" / "records.jsonl").read_bytes()


def test_connection_failures(server):
    with pytest.raises(EnvironmentProtocolError, match="host:port"):
        RemoteEnvironment.from_address("nohost")
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    with pytest.raises(EnvironmentProtocolError, match="cannot reach"):
        RemoteEnvironment("127.0.0.1", port, timeout=1)
    remote = RemoteEnvironment(*server.address)
    remote.reset()
    server.stop()
    remote._sock.shutdown(socket.SHUT_RDWR)
    with pytest.raises(EnvironmentProtocolError):
        remote.observe()
    remote.close()


def test_server_survives_garbage(server):
    with socket.create_connection(server.address) as raw:
        raw.sendall(b"\x00\x00\x00\x03\x00\x00\x00\x00{x}")
        assert raw.recv(16) == b""  # server hangs up on a malformed frame
    with RemoteEnvironment(*server.address) as remote:
        assert remote.reset().id == "home"
