import numpy as np
import pytest

from qexplore.environment import ElementSpec, EnvironmentManifest, ScreenSpec, Simulator
from qexplore.errors import EnvironmentProtocolError, QExploreError
from qexplore.graph import ExplorationGraph
from qexplore.oracle import MockBackend, Oracle, make_oracle
from qexplore.policy import (PolicyConfig, PolicyKind, identify_examples, run_exploration,
                             select_action_icrl, select_action_qicrl, select_action_random)
from qexplore.q_store import DEFAULT_Q, Outcome, QTable, q_next_mean, update_q, weighted_sample


def replay_q(graph, env):
    """Rebuild the Q-table from the trace alone, asking the simulator for each arrival's candidates."""
    table = QTable()
    for t in graph.trace:
        if t.outcome is Outcome.SAME_SCREEN:
            update_q(table, t.action_key, t.outcome, DEFAULT_Q)
        else:
            node = graph.nodes[t.to_id]
            keys = [a.rekey(t.to_id).action_key for a in env.get_candidate_actions(node)]
            update_q(table, t.action_key, t.outcome, q_next_mean(table, keys))
    return table


def scored_by_key(scores, default="0"):
    return lambda req: scores.get(req.context["candidate_key"], default)


@pytest.fixture
def shop_start(bundled):
    env = Simulator(bundled["shop"])
    screen = env.reset()
    return env, screen, env.get_candidate_actions(screen)


@pytest.mark.parametrize("kwargs", [dict(H=0), dict(T=-1), dict(score_clamp=(5, 5)), dict(oracle_retries=-1),
                                    dict(policy_kind="greedy")])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        PolicyConfig(**kwargs)


def test_config_to_dict():
    d = PolicyConfig(policy_kind="icrl").to_dict()
    assert d == {"H": 3, "T": 400, "policy_kind": "icrl", "score_clamp": [0.0, 100.0], "oracle_retries": 2}


def test_qicrl_picks_best_of_sample(shop_start):
    env, screen, cands = shop_start
    table = QTable()
    g = ExplorationGraph.from_initial(screen)
    sample_keys = weighted_sample([a.action_key for a in cands], table, 3, np.random.default_rng(5))
    scores = {sample_keys[0]: "10", sample_keys[1]: "90", sample_keys[2]: "40"}
    oracle = Oracle(MockBackend({"ScoreQhat": scored_by_key(scores)}))
    chosen = select_action_qicrl(screen, cands, table, oracle, g, PolicyConfig(), np.random.default_rng(5))
    assert chosen.action_key == sample_keys[1]
    assert oracle.calls["ScoreQhat"] == 3  # one score per sampled candidate


def test_qicrl_ties_go_to_first_sampled(shop_start):
    env, screen, cands = shop_start
    g = ExplorationGraph.from_initial(screen)
    oracle = Oracle(MockBackend({"ScoreQhat": "50"}))
    first = weighted_sample([a.action_key for a in cands], QTable(), 3, np.random.default_rng(2))[0]
    chosen = select_action_qicrl(screen, cands, QTable(), oracle, g, PolicyConfig(), np.random.default_rng(2))
    assert chosen.action_key == first


def test_qicrl_falls_back_to_table(shop_start):
    env, screen, cands = shop_start
    table = QTable(values={a.action_key: float(i + 1) for i, a in enumerate(cands)})
    g = ExplorationGraph.from_initial(screen)
    oracle = Oracle(MockBackend({"ScoreQhat": "no number"}), retries=0)
    rng = np.random.default_rng(9)
    sample = weighted_sample([a.action_key for a in cands], table, 3, np.random.default_rng(9))
    chosen = select_action_qicrl(screen, cands, table, oracle, g, PolicyConfig(), rng)
    assert chosen.action_key == max(sample, key=table.get)


def test_identify_examples(shop_start, matcher):
    env, screen, cands = shop_start
    table = QTable()
    assert identify_examples(cands[0], cands, table, matcher, screen) == []
    table.values.update({cands[1].action_key: 20.0, cands[2].action_key: 30.0, cands[3].action_key: 40.0})
    ex = identify_examples(cands[0], cands, table, matcher, screen)
    assert len(ex) == 2 and all(a.action_key != cands[0].action_key for a, _ in ex)
    assert all(q == table.get(a.action_key) for a, q in ex)
    table.values[cands[0].action_key] = 5.0
    assert cands[0].action_key not in [a.action_key for a, _ in identify_examples(cands[0], cands, table,
                                                                                  matcher, screen)]


def test_icrl_never_sees_q(shop_start):
    env, screen, cands = shop_start
    seen = []

    def reply(req):
        seen.append(req.context["q"])
        return "1"

    g = ExplorationGraph.from_initial(screen)
    select_action_icrl(screen, cands, Oracle(MockBackend({"ScoreQhat": reply})), g, PolicyConfig(),
                       np.random.default_rng(0))
    assert seen == [None, None, None]


def test_random_policy_is_uniform(shop_start):
    _, _, cands = shop_start
    rng = np.random.default_rng(0)
    counts = np.zeros(len(cands))
    for _ in range(6000):
        counts[cands.index(select_action_random(cands, rng))] += 1
    expected = 6000 / len(cands)
    assert np.all(np.abs(counts - expected) < 5 * np.sqrt(expected))
    with pytest.raises(QExploreError):
        select_action_random([], rng)


@pytest.mark.parametrize("kind", list(PolicyKind))
def test_run_keeps_budget_and_q_coupling(noisy, matcher, kind):
    g = run_exploration(Simulator(noisy), kind, PolicyConfig(T=40), make_oracle("mock"), matcher, seed=1)
    assert len(g.trace) <= 40 and g.metadata["steps_run"] == 40 and g.metadata["aborted"] is None
    assert [t.step for t in g.trace] == sorted({t.step for t in g.trace})
    assert replay_q(g, Simulator(noisy)).snapshot() == g.qtable.snapshot()
    assert g.metadata["policy"] == kind.value and g.metadata["environment"] == "noisy"


def test_run_is_deterministic(noisy, matcher):
    runs = [run_exploration(Simulator(noisy), "qicrl", PolicyConfig(T=30), make_oracle("mock"), matcher, seed=8)
            for _ in range(2)]
    assert runs[0] == runs[1]


def dead_end_manifest():
    a = ScreenSpec("a", "landing", [ElementSpec("go", "a", ("link",), (10, 50, 60, 70), text="go")])
    sink = ScreenSpec("sink", "info", [ElementSpec("t", "p", ("p",), (10, 50, 60, 70), text="end",
                                                   interactive=False, executable=False)])
    return EnvironmentManifest("trap", [a, sink], {"a/go": "sink"}, "a")


def test_dead_end_spends_a_step(matcher):
    g = run_exploration(Simulator(dead_end_manifest()), "random", PolicyConfig(T=6), make_oracle("mock"),
                        matcher, seed=0)
    # go (step 1), reset (2), go (3), reset (4), go (5), reset (6)
    assert [t.step for t in g.trace] == [1, 3, 5]
    assert [t.outcome for t in g.trace] == [Outcome.NEW_SCREEN, Outcome.SEEN_SCREEN, Outcome.SEEN_SCREEN]
    assert g.metadata["steps_run"] == 6


def test_protocol_error_aborts(noisy, matcher):
    class Flaky(Simulator):
        def __init__(self, m):
            super().__init__(m)
            self.n = 0

        def execute(self, action):
            self.n += 1
            if self.n > 3:
                raise EnvironmentProtocolError("adapter went away")
            return super().execute(action)

    g = run_exploration(Flaky(noisy), "qicrl", PolicyConfig(T=20), make_oracle("mock"), matcher, seed=0)
    assert "adapter went away" in g.metadata["aborted"]
    assert len(g.trace) == 3 and g.metadata["steps_run"] == 4


def test_zero_budget(noisy, matcher):
    g = run_exploration(Simulator(noisy), "qicrl", PolicyConfig(T=0), make_oracle("mock"), matcher, seed=0)
    assert list(g.nodes) == ["home"] and g.trace == [] and g.metadata["steps_run"] == 0
