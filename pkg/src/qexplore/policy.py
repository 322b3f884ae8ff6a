"""Action selection and the exploration loop.

Three policies share one loop: the Q-guided in-context policy, an in-context
baseline without Q-values and a uniform random baseline.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import EnvironmentProtocolError, OracleError, QExploreError
from .fuzzy_match import Matcher, dynamic_region_mask
from .graph import ExplorationGraph, add_transition, find_matching_node, to_state_descriptions
from .q_store import DEFAULT_Q, Outcome, QTable, get_q, q_next_mean, update_q, weighted_sample
from .screen import Action, Screen, action_patch

logger = logging.getLogger(__name__)


class PolicyKind(str, Enum):
    QICRL = "qicrl"
    ICRL = "icrl"
    RANDOM = "random"


@dataclass(frozen=True)
class PolicyConfig:
    H: int = 3
    T: int = 400
    policy_kind: PolicyKind = PolicyKind.QICRL
    score_clamp: tuple[float, float] = (0.0, 100.0)
    oracle_retries: int = 2

    def __post_init__(self):
        object.__setattr__(self, "policy_kind", PolicyKind(self.policy_kind))
        object.__setattr__(self, "score_clamp", tuple(float(v) for v in self.score_clamp))
        if self.H < 1:
            raise ValueError("H must be >= 1")
        if self.T < 0:
            raise ValueError("T must be >= 0")
        lo, hi = self.score_clamp
        if not lo < hi:
            raise ValueError("score_clamp must be an increasing pair")
        if self.oracle_retries < 0:
            raise ValueError("oracle_retries must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["policy_kind"] = self.policy_kind.value
        d["score_clamp"] = list(self.score_clamp)
        return d


def identify_examples(candidate: Action, all_candidates: Sequence[Action], table: QTable,
                      matcher: Matcher, screen: Screen) -> list[tuple[Action, float]]:
    """Up to two already-valued candidates whose elements look most like ``candidate``'s."""
    pool = [a for a in all_candidates
            if a.action_key != candidate.action_key and get_q(table, a.action_key) != table.default_q]
    if not pool:
        return []
    by_key = {a.action_key: a for a in pool}
    ranked = matcher.most_similar(action_patch(screen, candidate),
                                  [(a.action_key, action_patch(screen, a)) for a in pool])
    return [(by_key[k], get_q(table, k)) for k, _, _ in ranked[:2]]


def _argmax_first(scores: Sequence[float]) -> int:
    best = 0
    for i, s in enumerate(scores):
        if s > scores[best]:
            best = i
    return best


def select_action_qicrl(screen: Screen, candidates: Sequence[Action], table: QTable, oracle,
                        graph: ExplorationGraph, cfg: PolicyConfig, rng: np.random.Generator,
                        matcher: Optional[Matcher] = None) -> Action:
    if not candidates:
        raise QExploreError("no candidates to choose from")
    matcher = matcher or Matcher()
    by_key = {a.action_key: a for a in candidates}
    sampled = [by_key[k] for k in weighted_sample([a.action_key for a in candidates], table, cfg.H, rng)]
    history = to_state_descriptions(graph, oracle)
    scores = []
    for cand in sampled:
        examples = identify_examples(cand, candidates, table, matcher, screen)
        try:
            score = oracle.predict_qhat(screen, cand, history, examples=examples,
                                        q=get_q(table, cand.action_key))
        except OracleError as exc:
            logger.warning("scoring fell back to the table for %s: %s", cand.action_key, exc)
            score = get_q(table, cand.action_key)
        lo, hi = cfg.score_clamp
        scores.append(min(hi, max(lo, score)))
    return sampled[_argmax_first(scores)]


def select_action_icrl(screen: Screen, candidates: Sequence[Action], oracle, graph: ExplorationGraph,
                       cfg: PolicyConfig, rng: np.random.Generator) -> Action:
    if not candidates:
        raise QExploreError("no candidates to choose from")
    cands = list(candidates)
    if len(cands) > cfg.H:
        idx = rng.choice(len(cands), size=cfg.H, replace=False)
        sampled = [cands[int(i)] for i in idx]
    else:
        sampled = cands
    history = to_state_descriptions(graph, oracle)
    notes = []
    if graph.trace:
        entry = graph.trace[int(rng.integers(len(graph.trace)))]
        desc = graph.descriptions.get(entry.action_key)
        what = desc.render().lstrip("- ") if desc is not None else f"action {entry.action_key}"
        notes.append(f"{what} (outcome: {entry.outcome.value})")
    scores = []
    for cand in sampled:
        try:
            scores.append(oracle.predict_qhat(screen, cand, history, notes=notes))
        except OracleError as exc:
            logger.warning("scoring failed for %s: %s", cand.action_key, exc)
            scores.append(cfg.score_clamp[0])
    return sampled[_argmax_first(scores)]


def select_action_random(candidates: Sequence[Action], rng: np.random.Generator) -> Action:
    if not candidates:
        raise QExploreError("no candidates to choose from")
    return candidates[int(rng.integers(len(candidates)))]


def _capture_mask(env, first: Screen, matcher: Matcher):
    """Dynamic-region mask from the observed frame plus fresh captures."""
    n = matcher.cfg.dynamic_frames
    if n < 2:
        return None
    frames = [first.screenshot] + [env.observe().screenshot for _ in range(n - 1)]
    mask = dynamic_region_mask(frames, matcher.cfg)
    return mask if mask.any() else None


def _keyed(env, screen: Screen, node_id: str) -> list[Action]:
    return [a.rekey(node_id) for a in env.get_candidate_actions(screen)]


def run_exploration(env, policy_kind, cfg: PolicyConfig, oracle, matcher: Optional[Matcher] = None,
                    rng: Optional[np.random.Generator] = None, seed: Optional[int] = None,
                    metadata: Optional[dict] = None) -> ExplorationGraph:
    """Explore ``env`` for up to ``cfg.T`` steps and return the graph.

    Every policy keeps the Q-table up to date, so the archive records the
    same bookkeeping for baselines; only the Q-guided policy reads it.
    """
    kind = PolicyKind(policy_kind)
    matcher = matcher or Matcher()
    if rng is None:
        rng = np.random.default_rng(seed)
    meta = {"environment": getattr(env, "name", "unknown"), "policy": kind.value, "seed": seed,
            "policy_config": {**cfg.to_dict(), "policy_kind": kind.value},
            "match_config": matcher.cfg.to_dict()}
    meta.update(metadata or {})

    screen = env.reset()
    screen.dynamic_mask = _capture_mask(env, screen, matcher)
    graph = ExplorationGraph.from_initial(screen, meta)
    table = graph.qtable
    current = graph.initial_id
    observed = screen
    aborted = None
    steps_run = 0

    for t in range(1, cfg.T + 1):
        steps_run = t
        try:
            candidates = _keyed(env, observed, current)
            if not candidates:
                # Dead end: spend the step returning to the start.
                logger.info("step %d: no candidates on %s, resetting", t, current)
                observed = env.reset()
                current = find_matching_node(graph, observed, matcher) or graph.initial_id
                continue
            if kind is PolicyKind.QICRL:
                chosen = select_action_qicrl(observed, candidates, table, oracle, graph, cfg, rng, matcher)
            elif kind is PolicyKind.ICRL:
                chosen = select_action_icrl(observed, candidates, oracle, graph, cfg, rng)
            else:
                chosen = select_action_random(candidates, rng)
            arrived = env.execute(chosen)
        except EnvironmentProtocolError as exc:
            aborted = f"step {t}: {exc}"
            logger.error("exploration aborted at %s", aborted)
            break

        to_id, outcome = add_transition(graph, current, chosen, arrived, matcher, step=t)
        if outcome is Outcome.NEW_SCREEN:
            mask = _capture_mask(env, arrived, matcher)
            if mask is not None:
                graph.set_mask(to_id, mask)
        if outcome is Outcome.SAME_SCREEN:
            update_q(table, chosen.action_key, outcome, DEFAULT_Q)
        else:
            nxt = [a.action_key for a in _keyed(env, arrived, to_id)]
            update_q(table, chosen.action_key, outcome, q_next_mean(table, nxt))
        current, observed = to_id, arrived

    graph.metadata["steps_run"] = steps_run
    graph.metadata["aborted"] = aborted
    return graph
