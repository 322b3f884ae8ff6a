"""Command-line entry point: explore, annotate, eval, compare, report, serve.

Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import archive
from .annotate import QueryKind, Variant, annotate, export_dataset, load_dataset
from .errors import DatasetError, QExploreError
from .fuzzy_match import MatchConfig, Matcher
from .metrics import D3CConfig, coverage_ratio, d3c, grounding_accuracy
from .policy import PolicyConfig, PolicyKind, run_exploration

logger = logging.getLogger("qexplore")

ORACLES = ("mock", "remote", "replay", "record", "record-mock")


def _csv(kind):
    def parse(text: str):
        try:
            return [kind(v) for v in text.split(",") if v.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return parse


def _add_oracle(p: argparse.ArgumentParser) -> None:
    p.add_argument("--oracle", choices=ORACLES, default="mock",
                   help="model backend; remote reads ORACLE_URL/ORACLE_KEY/ORACLE_MODEL/ORACLE_RPS (default: mock)")
    p.add_argument("--cassette", type=Path, help="cassette file for replay/record backends")
    p.add_argument("--oracle-retries", type=int, default=PolicyConfig.oracle_retries,
                   help="retries after an unparseable reply (default: %(default)s)")


def _add_match(p: argparse.ArgumentParser) -> None:
    d = MatchConfig()
    p.add_argument("--identity-threshold", type=float, default=d.identity_threshold)
    p.add_argument("--min-overlap", type=float, default=d.min_overlap)
    p.add_argument("--gaussian-sigma", type=float, default=d.gaussian_sigma)
    p.add_argument("--gaussian-kernel", type=int, default=d.gaussian_kernel)
    p.add_argument("--shift-step", type=int, default=d.shift_step)
    p.add_argument("--dynamic-frames", type=int, default=d.dynamic_frames)
    p.add_argument("--aggregate", choices=("mean", "max"), default=d.aggregate)
    p.add_argument("--d3c-depth", type=int, default=D3CConfig.depth)


def _add_policy(p: argparse.ArgumentParser) -> None:
    p.add_argument("--steps", type=int, default=PolicyConfig.T, help="step budget T (default: %(default)s)")
    p.add_argument("--candidates", type=int, default=PolicyConfig.H,
                   help="candidates scored per step H (default: %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qexplore", description="Autonomous GUI exploration and grounding data.")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explore", help="explore an environment and write a graph archive")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest", help="bundled manifest name (icons, shop, forum) or a manifest path")
    src.add_argument("--adapter", help="host:port of a remote environment adapter")
    p.add_argument("--policy", choices=[k.value for k in PolicyKind], default=PolicyKind.QICRL.value)
    p.add_argument("--seed", type=int, default=0)
    _add_policy(p)
    _add_match(p)
    _add_oracle(p)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("annotate", help="turn a graph archive into a grounding dataset")
    p.add_argument("--archive", type=Path, required=True)
    p.add_argument("--variant", choices=[v.value for v in Variant], default=Variant.VISION_ONLY.value)
    p.add_argument("--jitter", action="store_true", help="sample target points inside the box instead of the centre")
    _add_oracle(p)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("eval", help="score point predictions against a dataset")
    p.add_argument("--predictions", type=Path, required=True,
                   help="JSONL with one [x, y] or {\"x\": .., \"y\": ..} per dataset record")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--out", type=Path, help="optional JSON report path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="run policies x seeds on manifests and aggregate D3C")
    p.add_argument("--manifests", type=_csv(str), default=["icons", "shop", "forum"])
    p.add_argument("--policies", type=_csv(str), default=[k.value for k in PolicyKind])
    p.add_argument("--seeds", type=_csv(int), default=[0, 1, 2])
    _add_policy(p)
    _add_match(p)
    _add_oracle(p)
    p.add_argument("--workers", type=int, default=1, help="worker processes (default: in-process)")
    p.add_argument("--no-rank", action="store_true", help="skip pairwise coverage ranking")
    p.add_argument("--keep-archives", action="store_true", help="also save every run's graph archive")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="render figures and a table from compare output")
    p.add_argument("--input", type=Path, required=True, help="directory written by compare")
    p.add_argument("--out", type=Path, help="figure directory (default: the input directory)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="serve a manifest over the remote-adapter protocol")
    p.add_argument("--manifest", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0, help="0 picks a free port")
    p.set_defaults(func=cmd_serve)
    return parser


def _config(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k == "func":
            continue
        out[k] = str(v) if isinstance(v, Path) else v
    return out


def _match_cfg(args) -> MatchConfig:
    try:
        return MatchConfig(args.identity_threshold, args.min_overlap, args.gaussian_sigma, args.gaussian_kernel,
                           args.shift_step, args.dynamic_frames, args.aggregate)
    except ValueError as exc:
        raise QExploreError(f"invalid matcher settings: {exc}") from exc


def _oracle(args):
    from .oracle import make_oracle

    if args.oracle in ("replay", "record", "record-mock") and args.cassette is None:
        raise QExploreError(f"--oracle {args.oracle} needs --cassette")
    return make_oracle(args.oracle, cassette=args.cassette, retries=args.oracle_retries)


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def cmd_explore(args) -> int:
    from .environment import RemoteEnvironment, Simulator, load_manifest

    if args.steps < 0 or args.candidates < 1:
        raise QExploreError("--steps must be >= 0 and --candidates >= 1")
    cfg = PolicyConfig(H=args.candidates, T=args.steps, policy_kind=args.policy,
                       oracle_retries=args.oracle_retries)
    matcher = Matcher(_match_cfg(args))
    manifest = None
    if args.manifest:
        manifest = load_manifest(args.manifest)
        env = Simulator(manifest)
    else:
        env = RemoteEnvironment.from_address(args.adapter)
    oracle = _oracle(args) if args.policy != PolicyKind.RANDOM.value else None
    config = _config(args)
    # The output location stays out of the archive so reruns elsewhere stay byte-identical.
    portable = {k: v for k, v in config.items() if k != "out"}
    graph = run_exploration(env, args.policy, cfg, oracle, matcher, seed=args.seed,
                            metadata={"run_config": portable, "d3c_depth": args.d3c_depth})
    archive.save(graph, args.out / "graph")
    summary = {"steps": len(graph.trace), "steps_run": graph.metadata["steps_run"], "nodes": len(graph.nodes),
               "edges": len(graph.edges), "d3c": d3c(graph, D3CConfig(args.d3c_depth)),
               "aborted": graph.metadata.get("aborted")}
    if manifest is not None:
        summary["coverage"] = coverage_ratio(graph, manifest)
    _write_json(args.out / "summary.json", {"summary": summary, "config": config})
    _emit(summary)
    return 1 if summary["aborted"] else 0


def cmd_annotate(args) -> int:
    if not args.archive.is_dir():
        raise QExploreError(f"archive not found: {args.archive}")
    graph = archive.load(args.archive)
    run = annotate(graph, _oracle(args), jitter=args.jitter)
    if not run.records:
        raise DatasetError("annotation produced no records")
    config = _config(args)
    export_dataset(run.records, args.variant, args.out, {nid: s.screenshot for nid, s in graph.nodes.items()},
                   provenance={"config": config, "graph": graph.metadata.get("run_config", {}),
                               "environment": graph.metadata.get("environment")})
    summary = {"records": len(run.records), "system2_ratio": run.system2_ratio,
               "annotated_edges": run.annotated_edges, "skipped_edges": len(run.skipped_edges),
               "scroll_edges": run.scroll_edges, "variant": args.variant}
    _write_json(args.out / "summary.json", {"summary": summary, "config": config})
    _emit(summary)
    return 0


def _read_predictions(path: Path) -> list[tuple[float, float]]:
    if not path.is_file():
        raise QExploreError(f"predictions not found: {path}")
    preds = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            if isinstance(obj, dict):
                obj = [obj["x"], obj["y"]]
            x, y = (float(v) for v in obj)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"{path}:{lineno}: expected [x, y] or {{x, y}} ({exc})") from exc
        preds.append((x, y))
    return preds


def cmd_eval(args) -> int:
    records, _ = load_dataset(args.dataset)
    preds = _read_predictions(args.predictions)
    if len(preds) != len(records):
        raise DatasetError(f"{len(preds)} predictions for {len(records)} records")
    result = {"overall": grounding_accuracy(preds, records), "n": len(records)}
    for kind in QueryKind:
        idx = [i for i, r in enumerate(records) if r.query_kind is kind]
        result[kind.value] = grounding_accuracy([preds[i] for i in idx], [records[i] for i in idx]) if idx else None
        result[f"n_{kind.value}"] = len(idx)
    if args.out:
        _write_json(args.out, {"result": result, "config": _config(args)})
    _emit(result)
    return 0


def cmd_compare(args) -> int:
    from .compare import compare_policies, report_table, write_plot_data

    if args.steps < 1 or args.candidates < 1 or not args.seeds or not args.policies or not args.manifests:
        raise QExploreError("compare needs steps >= 1, candidates >= 1 and non-empty manifests, policies, seeds")
    unknown = [p for p in args.policies if p not in {k.value for k in PolicyKind}]
    if unknown:
        raise QExploreError(f"unknown policies: {', '.join(unknown)}")
    if args.oracle in ("replay", "record", "record-mock") and args.cassette is None:
        raise QExploreError(f"--oracle {args.oracle} needs --cassette")
    args.out.mkdir(parents=True, exist_ok=True)
    report = compare_policies(
        args.manifests, args.policies, args.seeds, args.steps,
        policy_cfg=PolicyConfig(H=args.candidates, T=args.steps, oracle_retries=args.oracle_retries),
        match_cfg=_match_cfg(args), d3c_cfg=D3CConfig(args.d3c_depth), oracle_kind=args.oracle,
        cassette=str(args.cassette) if args.cassette else None, workers=args.workers, rank=not args.no_rank,
        archive_dir=str(args.out / "archives") if args.keep_archives else None)
    report["config"]["run_config"] = _config(args)
    _write_json(args.out / "report.json", report)
    write_plot_data(report, args.out / "plot_data.csv")
    table = report_table(report)
    (args.out / "table.tsv").write_text(table + "\n", encoding="utf-8")
    print(table)
    for v in report["verdicts"]:
        if v["scope"] == "all":
            print(f"# t={v['t']}: {v['a']} {v['mean_a']:.2f} vs {v['b']} {v['mean_b']:.2f} -> {v['winner']}")
    for pair, wins in report["ranking"].items():
        print(f"# coverage ranking {pair}: {wins}")
    for note in report["excluded"]:
        print(f"# excluded: {note}")
    return 0


def cmd_report(args) -> int:
    from .compare import read_plot_data, report_table
    from .plotting import plot_coverage, plot_curves

    src = args.input
    if not (src / "report.json").is_file() or not (src / "plot_data.csv").is_file():
        raise QExploreError(f"{src} does not contain compare output (report.json, plot_data.csv)")
    report = json.loads((src / "report.json").read_text(encoding="utf-8"))
    out = args.out or src
    figures = plot_curves(read_plot_data(src / "plot_data.csv"), out) + [plot_coverage(report, out)]
    print(report_table(report))
    for f in figures:
        print(f"# figure: {f}")
    return 0


def cmd_serve(args) -> int:
    from .environment import AdapterServer, Simulator, load_manifest

    manifest = load_manifest(args.manifest)
    server = AdapterServer(lambda: Simulator(manifest), args.host, args.port)
    host, port = server.address
    print(f"# serving {manifest.name} on {host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except QExploreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
