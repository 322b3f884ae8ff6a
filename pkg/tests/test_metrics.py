import json

import pytest
from hypothesis import given, strategies as st

from qexplore.annotate import GroundingRecord
from qexplore.environment import Simulator
from qexplore.errors import QExploreError
from qexplore.graph import ExplorationGraph
from qexplore.metrics import (D3CConfig, coverage_ratio, curve_at, d3c, d3c_curve, dom_signature,
                              grounding_accuracy, point_in_box)
from qexplore.screen import Element

from conftest import every_screen


def sig_by_json(el, depth):
    """Independent signature: nested JSON of sorted classes, cut at depth."""
    def walk(node, level):
        kids = [walk(c, level + 1) for c in node.children] if level < depth else []
        return [sorted(node.classes), kids]
    return json.dumps(walk(el, 1))


def el(classes, *children, tag="div", text=""):
    return Element(tag, tuple(classes), (0, 0, 1, 1), text=text, children=list(children))


def test_signature_ignores_tags_text_and_class_order():
    a = el(["x", "y"], el(["c"], tag="a", text="one"))
    b = el(["y", "x"], el(["c"], tag="span", text="two"))
    assert dom_signature(a) == dom_signature(b)
    assert dom_signature(None) == ""


def test_signature_truncates_at_depth():
    a = el(["r"], el(["m"], el(["leaf1"])))
    b = el(["r"], el(["m"], el(["leaf2"])))
    assert dom_signature(a, 2) == dom_signature(b, 2)
    assert dom_signature(a, 3) != dom_signature(b, 3)
    with pytest.raises(ValueError):
        D3CConfig(0)


def test_sibling_order_matters():
    assert dom_signature(el(["r"], el(["a"]), el(["b"]))) != dom_signature(el(["r"], el(["b"]), el(["a"])))


def trees(depth=3):
    cls = st.lists(st.sampled_from(["a", "b", "c"]), max_size=2, unique=True)
    return st.recursive(cls.map(lambda c: el(c)),
                        lambda kids: st.tuples(cls, st.lists(kids, max_size=3)).map(lambda t: el(t[0], *t[1])),
                        max_leaves=8)


@given(trees(), trees(), st.integers(1, 4))
def test_signature_agrees_with_json_oracle(a, b, depth):
    same = dom_signature(a, depth) == dom_signature(b, depth)
    assert same == (sig_by_json(a, depth) == sig_by_json(b, depth))


@pytest.mark.parametrize("name", ["icons", "shop", "forum"])
def test_bundled_d3c_equals_brute_force(bundled, name):
    screens = every_screen(bundled[name])
    g = ExplorationGraph(nodes={s.id: s for s in screens})
    assert d3c(g) == len({sig_by_json(s.dom, 3) for s in screens})
    assert d3c(g) == len(bundled[name].reachable_screens())  # view class keeps every screen apart
    assert coverage_ratio(g, bundled[name]) == 1.0


def test_curve_and_coverage(noisy):
    screens = every_screen(noisy)
    g = ExplorationGraph(nodes={s.id: s for s in screens[:2]}, added_step={"home": 0, "list": 4},
                         metadata={"environment": "noisy", "steps_run": 6})
    curve = d3c_curve(g)
    assert curve == [(0, 1), (1, 1), (2, 1), (3, 1), (4, 2), (5, 2), (6, 2)]
    assert curve_at(curve, 3) == 1 and curve_at(curve, 99) == 2
    assert curve_at([], 5) == 0
    assert coverage_ratio(g, noisy) == 0.5
    g.metadata["environment"] = "other"
    with pytest.raises(QExploreError):
        coverage_ratio(g, noisy)


def test_curve_is_monotone(bundled):
    sim = Simulator(bundled["icons"])
    screens = every_screen(bundled["icons"])
    g = ExplorationGraph(nodes={s.id: s for s in screens},
                         added_step={s.id: 3 * i for i, s in enumerate(screens)})
    values = [v for _, v in d3c_curve(g, until=300)]
    assert all(b >= a for a, b in zip(values, values[1:]))
    assert sim.name == "icons"


def test_point_in_box_half_open():
    box = (10, 20, 30, 40)
    assert point_in_box(10, 20, box)
    assert point_in_box(29.999, 39.999, box)
    assert not point_in_box(30, 25, box)
    assert not point_in_box(15, 40, box)
    assert not point_in_box(9.999, 25, box)


def record(box):
    x0, y0, x1, y1 = box
    return GroundingRecord("q", "s", box, ((x0 + x1) / 2, (y0 + y1) / 2), "System1", "a|k|b")


def test_grounding_accuracy_k_over_n():
    gold = [record((0, 0, 10, 10)), record((10, 0, 20, 10)), record((0, 10, 10, 20)), record((5, 5, 6, 6))]
    preds = [(0, 0), (20, 5), (9.5, 19.5), (6, 5.5)]
    assert grounding_accuracy(preds, gold) == 2 / 4
    assert grounding_accuracy([], []) == 0.0
    with pytest.raises(QExploreError):
        grounding_accuracy(preds[:2], gold)


@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50), st.integers(1, 20), st.integers(1, 20),
                          st.booleans()), min_size=1, max_size=20))
def test_accuracy_counts_hits(spec):
    gold, preds, hits = [], [], 0
    for x, y, w, h, hit in spec:
        gold.append(record((x, y, x + w, y + h)))
        preds.append((x, y) if hit else (x + w, y))
        hits += hit
    assert grounding_accuracy(preds, gold) == hits / len(spec)
