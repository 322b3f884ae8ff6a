import json

import numpy as np
import pytest

from qexplore import archive
from qexplore.environment import Simulator
from qexplore.errors import ArchiveParseError, UnsupportedVersionError
from qexplore.oracle import make_oracle
from qexplore.graph import to_state_descriptions
from qexplore.policy import PolicyConfig, run_exploration


def tree_bytes(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


@pytest.fixture
def explored(noisy, matcher):
    oracle = make_oracle("mock")
    g = run_exploration(Simulator(noisy), "qicrl", PolicyConfig(T=25), oracle, matcher, seed=3)
    to_state_descriptions(g, oracle)
    return g


def test_round_trip(explored, tmp_path):
    archive.save(explored, tmp_path / "a")
    back = archive.load(tmp_path / "a")
    assert back == explored
    assert back.nodes["home"].dynamic_mask is not None  # the banner animates
    archive.save(back, tmp_path / "b")
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


def test_layout(explored, tmp_path):
    archive.save(explored, tmp_path / "a")
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["format"] == "qexplore-graph" and manifest["version"] == 1
    assert [n["id"] for n in manifest["nodes"]] == list(explored.nodes)
    kinds = {json.loads(line)["kind"] for line in (tmp_path / "a" / "records.jsonl").read_text().splitlines()}
    assert kinds == {"edge", "trace", "q", "description"}
    assert (tmp_path / "a" / "masks").is_dir()


def test_save_overwrites(explored, tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "a" / "stale.txt").write_text("x")
    archive.save(explored, tmp_path / "a")
    assert not (tmp_path / "a" / "stale.txt").exists()


def test_version_and_format_checks(explored, tmp_path):
    path = archive.save(explored, tmp_path / "a")
    m = json.loads((path / "manifest.json").read_text())
    (path / "manifest.json").write_text(json.dumps({**m, "version": 99}))
    with pytest.raises(UnsupportedVersionError):
        archive.load(path)
    (path / "manifest.json").write_text(json.dumps({**m, "format": "nope"}))
    with pytest.raises(ArchiveParseError):
        archive.load(path)
    (path / "manifest.json").write_text("{")
    with pytest.raises(ArchiveParseError):
        archive.load(path)
    with pytest.raises(ArchiveParseError):
        archive.load(tmp_path / "missing")


def test_corrupt_records_report_line(explored, tmp_path):
    path = archive.save(explored, tmp_path / "a")
    lines = (path / "records.jsonl").read_text().splitlines()
    lines.insert(2, '{"kind": "mystery"}')
    (path / "records.jsonl").write_text("\n".join(lines) + "\n")
    with pytest.raises(ArchiveParseError, match="records.jsonl:3"):
        archive.load(path)


def test_dangling_edge_rejected(explored, tmp_path):
    path = archive.save(explored, tmp_path / "a")
    text = (path / "records.jsonl").read_text().replace('"to":"about"', '"to":"nowhere"', 1)
    (path / "records.jsonl").write_text(text)
    with pytest.raises(ArchiveParseError):
        archive.load(path)


def test_resolution_mismatch_rejected(explored, tmp_path):
    path = archive.save(explored, tmp_path / "a")
    m = json.loads((path / "manifest.json").read_text())
    m["nodes"][0]["resolution"] = [1, 1]
    (path / "manifest.json").write_text(json.dumps(m))
    with pytest.raises(ArchiveParseError, match="nodes\\[0\\]"):
        archive.load(path)


def test_png_lossless(tmp_path, rng):
    img = rng.integers(0, 256, (17, 23, 3), dtype=np.uint8)
    archive.write_png(tmp_path / "x.png", img)
    assert np.array_equal(archive.read_png(tmp_path / "x.png"), img)
    mask = rng.random((17, 23)) < 0.5
    archive.write_png(tmp_path / "m.png", mask)
    assert np.array_equal(archive.read_png(tmp_path / "m.png", mask=True), mask)
