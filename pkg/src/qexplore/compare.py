"""Policy comparison: repeated explorations, D3C checkpoints and pairwise verdicts."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import archive
from .environment import Simulator, load_manifest
from .fuzzy_match import MatchConfig, Matcher
from .graph import TransitionDescription, to_state_descriptions
from .metrics import D3CConfig, coverage_ratio, curve_at, d3c_curve
from .oracle import make_oracle
from .policy import PolicyConfig, PolicyKind, run_exploration

logger = logging.getLogger(__name__)

CHECKPOINTS = (50, 100, 200, 400)


@dataclass
class CellResult:
    environment: str
    label: str
    policy: str
    seed: int
    curve: list[tuple[int, int]]
    coverage: float
    nodes: int
    edges: int
    aborted: Optional[str]
    descriptions: list[TransitionDescription] = field(default_factory=list)


def _label_policies(policies: Sequence[str]) -> list[tuple[str, str]]:
    """(label, kind) pairs; repeated kinds get ``#2``, ``#3`` suffixes."""
    seen: dict[str, int] = {}
    out = []
    for p in policies:
        kind = PolicyKind(p).value
        seen[kind] = seen.get(kind, 0) + 1
        out.append((kind if seen[kind] == 1 else f"{kind}#{seen[kind]}", kind))
    return out


def run_cell(manifest: str, label: str, kind: str, seed: int, policy_cfg: dict, match_cfg: dict,
             d3c_depth: int = 3, oracle_kind: str = "mock", cassette: Optional[str] = None,
             archive_dir: Optional[str] = None, matcher: Optional[Matcher] = None) -> CellResult:
    m = load_manifest(manifest)
    cfg = PolicyConfig(**{**policy_cfg, "policy_kind": kind})
    matcher = matcher or Matcher(MatchConfig(**match_cfg))
    oracle = make_oracle(oracle_kind, cassette=Path(cassette) if cassette else None,
                         retries=cfg.oracle_retries)
    graph = run_exploration(Simulator(m), kind, cfg, oracle, matcher, seed=seed,
                            metadata={"d3c_depth": d3c_depth})
    if archive_dir:
        archive.save(graph, Path(archive_dir) / f"{m.name}-{label}-{seed}".replace("#", "_"))
    return CellResult(
        environment=m.name, label=label, policy=kind, seed=seed,
        curve=d3c_curve(graph, D3CConfig(d3c_depth), until=cfg.T),
        coverage=coverage_ratio(graph, m), nodes=len(graph.nodes), edges=len(graph.edges),
        aborted=graph.metadata.get("aborted"),
        descriptions=to_state_descriptions(graph, oracle),
    )


def _stats(values) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return {"mean": float(arr.mean()), "std": std, "n": int(len(arr))}


def compare_policies(manifests: Sequence[str], policies: Sequence[str], seeds: Sequence[int], T: int,
                     policy_cfg: Optional[PolicyConfig] = None, match_cfg: MatchConfig = MatchConfig(),
                     d3c_cfg: D3CConfig = D3CConfig(), oracle_kind: str = "mock",
                     cassette: Optional[str] = None, workers: int = 1, rank: bool = True,
                     archive_dir: Optional[str] = None, oracle=None) -> dict:
    """Run every (manifest, policy, seed) cell and aggregate D3C at the checkpoints.

    Aggregates come per manifest and averaged over manifests (mean of each
    seed's cross-manifest average, then mean and sample std over seeds).
    Aborted cells are left out of every aggregate and listed in ``excluded``.
    """
    base = (policy_cfg or PolicyConfig()).to_dict()
    base["T"] = T
    base.pop("policy_kind")
    labels = _label_policies(policies)
    jobs = [(mf, label, kind, seed) for mf in manifests for label, kind in labels for seed in seeds]
    common = dict(policy_cfg=base, match_cfg=match_cfg.to_dict(), d3c_depth=d3c_cfg.depth,
                  oracle_kind=oracle_kind, cassette=cassette, archive_dir=archive_dir)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_cell, *job, **common) for job in jobs]
            cells = [f.result() for f in futures]
    else:
        matchers: dict[str, Matcher] = {}  # one memo per manifest, shared across its cells
        cells = [run_cell(*job, **common, matcher=matchers.setdefault(job[0], Matcher(match_cfg)))
                 for job in jobs]
    return aggregate(cells, [lbl for lbl, _ in labels], T, rank=rank, oracle=oracle,
                     config={"policy_config": base, "match_config": match_cfg.to_dict(),
                             "d3c_depth": d3c_cfg.depth, "oracle": oracle_kind, "seeds": list(seeds),
                             "policies": list(policies), "manifests": list(manifests), "T": T})


def aggregate(cells: Sequence[CellResult], labels: Sequence[str], T: int, rank: bool = True,
              oracle=None, config: Optional[dict] = None) -> dict:
    checkpoints = [t for t in CHECKPOINTS if t <= T] or [T]
    excluded = [f"{c.environment}/{c.label}/seed {c.seed}: {c.aborted}" for c in cells if c.aborted]
    for note in excluded:
        logger.warning("excluded aborted run %s", note)
    ok = [c for c in cells if not c.aborted]
    envs = list(dict.fromkeys(c.environment for c in cells))

    per_env: dict = {}
    for env in envs:
        per_env[env] = {}
        for label in labels:
            runs = [c for c in ok if c.environment == env and c.label == label]
            if not runs:
                continue
            per_env[env][label] = {
                "runs": len(runs),
                "d3c": {str(t): _stats([curve_at(c.curve, t) for c in runs]) for t in checkpoints},
                "coverage": _stats([c.coverage for c in runs]),
                "curve": _curve_stats([c.curve for c in runs], T),
            }

    averaged: dict = {}
    for label in labels:
        seeds = sorted({c.seed for c in ok if c.label == label})
        by_seed = []
        for seed in seeds:
            runs = [c for c in ok if c.label == label and c.seed == seed]
            if len(runs) == len(envs):  # only seeds complete on every manifest
                by_seed.append([np.mean([curve_at(c.curve, t) for c in runs]) for t in range(T + 1)])
        if by_seed:
            arr = np.asarray(by_seed)
            averaged[label] = {
                "runs": len(by_seed),
                "d3c": {str(t): _stats(arr[:, t]) for t in checkpoints},
                "curve": [(t, float(arr[:, t].mean()), float(arr[:, t].std(ddof=1)) if len(arr) > 1 else 0.0)
                          for t in range(T + 1)],
            }

    verdicts = []
    if len(labels) > 1:
        scopes = [(env, per_env[env]) for env in envs] + [("all", averaged)]
        for scope, table in scopes:
            for i, a in enumerate(labels):
                for b in labels[i + 1:]:
                    if a not in table or b not in table:
                        continue
                    for t in checkpoints:
                        ma, mb = table[a]["d3c"][str(t)]["mean"], table[b]["d3c"][str(t)]["mean"]
                        verdicts.append({"scope": scope, "t": t, "a": a, "b": b, "mean_a": ma, "mean_b": mb,
                                         "relative": (ma - mb) / mb if mb else float("inf"),
                                         "winner": a if ma > mb else b if mb > ma else "tie"})

    ranking = {}
    if rank and len(labels) > 1:
        judge = oracle or make_oracle("mock")
        for i, a in enumerate(labels):
            for b in labels[i + 1:]:
                wins = {a: 0, b: 0}
                for ca in ok:
                    if ca.label != a:
                        continue
                    for cb in ok:
                        if cb.label == b and cb.environment == ca.environment and cb.seed == ca.seed:
                            verdict = judge.rank_coverage(ca.descriptions, cb.descriptions)
                            wins[a if verdict == "A" else b] += 1
                ranking[f"{a} vs {b}"] = wins

    return {"config": config or {}, "checkpoints": checkpoints, "environments": per_env,
            "averaged": averaged, "verdicts": verdicts, "ranking": ranking, "excluded": excluded,
            "cells": [{"environment": c.environment, "policy": c.label, "seed": c.seed,
                       "nodes": c.nodes, "edges": c.edges, "coverage": c.coverage,
                       "d3c_final": c.curve[-1][1] if c.curve else 0, "aborted": c.aborted}
                      for c in cells]}


def _curve_stats(curves, T: int) -> list[tuple[int, float, float]]:
    arr = np.asarray([[curve_at(c, t) for t in range(T + 1)] for c in curves], dtype=np.float64)
    std = arr.std(axis=0, ddof=1) if len(arr) > 1 else np.zeros(T + 1)
    return [(t, float(arr[:, t].mean()), float(std[t])) for t in range(T + 1)]


def write_plot_data(report: dict, path) -> Path:
    """CSV with columns scope, t, policy, mean, std (one row per step and curve)."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scope", "t", "policy", "mean", "std"])
        for env, table in report["environments"].items():
            for label, entry in table.items():
                for t, mean, std in entry["curve"]:
                    w.writerow([env, t, label, f"{mean:.6g}", f"{std:.6g}"])
        for label, entry in report["averaged"].items():
            for t, mean, std in entry["curve"]:
                w.writerow(["all", t, label, f"{mean:.6g}", f"{std:.6g}"])
    return path


def read_plot_data(path) -> dict:
    """{scope: {policy: [(t, mean, std), ...]}} from a plot-data CSV."""
    out: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["scope"], {}).setdefault(row["policy"], []).append(
                (int(row["t"]), float(row["mean"]), float(row["std"])))
    return out


def report_table(report: dict, sep: str = "\t") -> str:
    """Delimited table: scope, policy, runs, then mean and std at each checkpoint."""
    cps = report["checkpoints"]
    head = ["scope", "policy", "runs"] + [f"d3c@{t}{suffix}" for t in cps for suffix in ("_mean", "_std")]
    rows = [sep.join(head)]
    scopes = list(report["environments"].items()) + [("all", report["averaged"])]
    for scope, table in scopes:
        for label, entry in table.items():
            cells = [scope, label, str(entry["runs"])]
            for t in cps:
                s = entry["d3c"][str(t)]
                cells += [f"{s['mean']:.2f}", f"{s['std']:.2f}"]
            rows.append(sep.join(cells))
    return "\n".join(rows)
