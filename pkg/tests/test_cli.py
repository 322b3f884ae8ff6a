import json
import subprocess
import sys

import pytest

from qexplore import archive
from qexplore.annotate import box_center, load_dataset
from qexplore.cli import main

from conftest import noisy_manifest


@pytest.fixture(scope="module")
def noisy_path(tmp_path_factory):
    p = tmp_path_factory.mktemp("m") / "noisy.json"
    noisy_manifest().save(p)
    return str(p)


@pytest.fixture(scope="module")
def explored(noisy_path, tmp_path_factory):
    out = tmp_path_factory.mktemp("explore")
    assert main(["explore", "--manifest", noisy_path, "--seed", "3", "--steps", "30", "--out", str(out)]) == 0
    return out


def test_explore_outputs(explored, capsys):
    summary = json.loads((explored / "summary.json").read_text())
    assert summary["summary"]["steps_run"] == 30 and summary["summary"]["steps"] <= 30
    assert summary["config"]["steps"] == 30 and summary["config"]["policy"] == "qicrl"
    g = archive.load(explored / "graph")
    assert g.metadata["run_config"]["seed"] == 3 and "out" not in g.metadata["run_config"]
    assert len(g.trace) == summary["summary"]["steps"]


def test_explore_defaults_to_full_budget():
    from qexplore.cli import build_parser
    args = build_parser().parse_args(["explore", "--manifest", "shop", "--out", "x"])
    assert args.steps == 400 and args.candidates == 3 and args.oracle == "mock"


def test_explore_twice_identical(noisy_path, tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        main(["explore", "--manifest", noisy_path, "--policy", "icrl", "--seed", "1", "--steps", "15",
              "--out", str(tmp_path / name)])
        outs.append(capsys.readouterr().out)
    assert outs[0] == outs[1]
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a" / "graph").rglob("*") if p.is_file())
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_annotate_and_eval(explored, tmp_path, capsys):
    ds = tmp_path / "ds"
    assert main(["annotate", "--archive", str(explored / "graph"), "--variant", "vision_a11y",
                 "--out", str(ds)]) == 0
    summary = json.loads(capsys.readouterr().out)
    records, manifest = load_dataset(ds)
    assert summary["records"] == len(records) == manifest["counts"]["records"]
    assert all(r.a11y for r in records)

    centre = tmp_path / "centre.jsonl"
    centre.write_text("".join(json.dumps(list(box_center(r.target_box))) + "\n" for r in records))
    assert main(["eval", "--predictions", str(centre), "--dataset", str(ds), "--out", str(tmp_path / "r.json")]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["overall"] == 1.0 and result["n"] == len(records)
    assert json.loads((tmp_path / "r.json").read_text())["result"] == result

    off = tmp_path / "off.jsonl"
    off.write_text("".join('{"x": -5, "y": -5}\n' for _ in records))
    main(["eval", "--predictions", str(off), "--dataset", str(ds)])
    assert json.loads(capsys.readouterr().out)["overall"] == 0.0

    half = tmp_path / "half.jsonl"
    k = len(records) // 2
    half.write_text("".join(json.dumps(list(box_center(r.target_box)) if i < k else [-1, -1]) + "\n"
                            for i, r in enumerate(records)))
    main(["eval", "--predictions", str(half), "--dataset", str(ds)])
    assert json.loads(capsys.readouterr().out)["overall"] == k / len(records)


def test_domain_errors_exit_1(tmp_path, explored, capsys):
    assert main(["annotate", "--archive", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 1
    assert "archive not found" in capsys.readouterr().err
    assert main(["annotate", "--archive", str(explored / "graph"), "--oracle", "replay",
                 "--out", str(tmp_path / "o")]) == 1
    assert main(["explore", "--manifest", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 1
    assert main(["explore", "--manifest", "shop", "--steps", "-1", "--out", str(tmp_path / "o")]) == 1
    assert main(["explore", "--manifest", "shop", "--min-overlap", "0.1", "--out", str(tmp_path / "o")]) == 1
    assert main(["report", "--input", str(tmp_path)]) == 1
    bad = tmp_path / "bad.jsonl"
    bad.write_text("[1]\n")
    (tmp_path / "ds").mkdir()
    assert main(["eval", "--predictions", str(bad), "--dataset", str(tmp_path / "ds")]) == 1
    assert main(["compare", "--policies", "clever", "--out", str(tmp_path / "c")]) == 1


@pytest.mark.parametrize("argv", [[], ["explore", "--manifest", "shop"], ["explore", "--out", "x"],
                                  ["explore", "--manifest", "a", "--adapter", "h:1", "--out", "x"],
                                  ["compare", "--seeds", "one", "--out", "x"], ["frobnicate"]])
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def test_empty_annotation_exit_1(noisy_path, tmp_path):
    main(["explore", "--manifest", noisy_path, "--steps", "0", "--out", str(tmp_path / "e")])
    assert main(["annotate", "--archive", str(tmp_path / "e" / "graph"), "--out", str(tmp_path / "d")]) == 1


def test_compare_and_report(noisy_path, tmp_path, capsys):
    out = tmp_path / "cmp"
    assert main(["compare", "--manifests", noisy_path, "--seeds", "0,1", "--steps", "12", "--keep-archives",
                 "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert printed.splitlines()[0].startswith("scope\tpolicy\truns")
    assert "# coverage ranking qicrl vs icrl" in printed
    report = json.loads((out / "report.json").read_text())
    assert len(report["cells"]) == 6 and report["config"]["run_config"]["steps"] == 12
    assert len(list((out / "archives").iterdir())) == 6
    assert main(["report", "--input", str(out), "--out", str(tmp_path / "fig")]) == 0
    printed = capsys.readouterr().out
    assert {p.name for p in (tmp_path / "fig").iterdir()} == {"d3c_noisy.png", "d3c_all.png", "coverage.png"}
    assert printed.count("# figure:") == 3


def test_record_mock_cassette_then_replay(explored, tmp_path):
    cas = tmp_path / "c.jsonl"
    assert main(["annotate", "--archive", str(explored / "graph"), "--oracle", "record-mock", "--cassette",
                 str(cas), "--out", str(tmp_path / "a")]) == 0
    assert main(["annotate", "--archive", str(explored / "graph"), "--oracle", "replay", "--cassette",
                 str(cas), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "records.jsonl").read_bytes() == (tmp_path / "b" / "records.jsonl").read_bytes()


def test_serve_and_explore_over_adapter(noisy_path, tmp_path):
    proc = subprocess.Popen([sys.executable, "-m", "qexplore.cli", "serve", "--manifest", noisy_path],
                            stdout=subprocess.PIPE, text=True)
    try:
        line = proc.stdout.readline()
        assert line.startswith("# serving noisy on ")
        address = line.split()[-1]
        assert main(["explore", "--adapter", address, "--seed", "3", "--steps", "30",
                     "--out", str(tmp_path / "r")]) == 0
        assert main(["explore", "--manifest", noisy_path, "--seed", "3", "--steps", "30",
                     "--out", str(tmp_path / "l")]) == 0
        remote = (tmp_path / "r" / "graph" / "records.jsonl").read_bytes()
        assert remote == (tmp_path / "l" / "graph" / "records.jsonl").read_bytes()
    finally:
        proc.terminate()
        proc.wait(10)


def test_unreachable_adapter_exit_1(tmp_path):
    import socket
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    assert main(["explore", "--adapter", f"127.0.0.1:{port}", "--out", str(tmp_path / "o")]) == 1
