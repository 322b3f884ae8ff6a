import numpy as np
import pytest
from hypothesis import given, strategies as st

from qexplore.screen import (FULL_PAGE, Action, ActionType, Element, Screen, Target, action_patch,
                             click_action, flatten_a11y, make_action_key, scroll_action)

from conftest import make_screen


def tree():
    return Element("body", ("root",), (0, 0, 100, 80), eid="body", children=[
        Element("nav", ("nav",), (0, 0, 100, 20), eid="nav", children=[
            Element("a", ("link",), (0, 0, 30, 20), eid="home", text="Home", interactive=True)]),
        Element("main", ("main",), (0, 20, 100, 80), eid="main", children=[
            Element("button", ("btn", "primary"), (10, 30, 50, 50), eid="buy", text="Buy", interactive=True)]),
    ])


def test_walk_is_document_order():
    assert [el.eid for _, el in tree().walk()] == ["body", "nav", "home", "main", "buy"]


def test_dom_path():
    root = tree()
    assert root.dom_path((1, 0)) == "body/main:1/button:0"
    assert root.dom_path(()) == "body"


def test_element_round_trip():
    root = tree()
    assert Element.from_dict(root.to_dict()) == root
    assert root.find("buy").text == "Buy"
    assert root.find("nope") is None


def test_a11y_listing():
    text = flatten_a11y(tree())
    assert '[buy] button "Buy" focusable' in text
    assert text.splitlines()[0] == "[body] generic"


def test_screen_validation():
    img = np.zeros((80, 100, 3), np.uint8)
    with pytest.raises(ValueError):
        Screen("s", np.zeros((80, 100)), tree())
    with pytest.raises(ValueError):
        Screen("s", np.zeros((40, 100, 3), np.uint8), tree())  # boxes overflow
    with pytest.raises(ValueError):
        Screen("s", img, tree(), dynamic_mask=np.zeros((10, 10), bool))
    s = Screen("s", img, tree())
    assert s.resolution == (100, 80)
    assert s.a11y == flatten_a11y(s.dom)


def test_screen_equality_includes_mask():
    img = np.zeros((80, 100, 3), np.uint8)
    a = Screen("s", img, tree())
    b = Screen("s", img.copy(), tree())
    assert a == b
    b.dynamic_mask = np.zeros((80, 100), bool)
    assert a != b
    assert a.with_id("t").id == "t" and a.id == "s"
    assert a.digest() == Screen("other", img.copy(), tree()).digest()


def test_action_keys():
    s = Screen("s", np.zeros((80, 100, 3), np.uint8), tree())
    click = click_action(s, (1, 0), s.dom.find("buy"))
    assert click.target.dom_path == "body/main:1/button:0"
    assert click.env_key == click.action_key
    other = click.rekey("node-2")
    assert other.action_key != click.action_key and other.env_key == click.env_key
    assert click.rekey("s").action_key == click.action_key
    down, up = scroll_action(s, "down"), scroll_action(s, "up")
    assert down.action_key != up.action_key
    assert down.target.element_id == FULL_PAGE
    assert Action.from_dict(other.to_dict()) == other


def test_action_key_ignores_box_and_text():
    # the same control on a re-rendered screen keeps its key
    t1 = Target("buy", (10, 30, 50, 50), "body/main:1/button:0", ("btn",), "button")
    t2 = Target("buy2", (12, 31, 52, 51), "body/main:1/button:0", ("btn",), "button")
    assert make_action_key("n", t1, ActionType.CLICK) == make_action_key("n", t2, ActionType.CLICK)


def test_action_type_checks():
    with pytest.raises(ValueError):
        Action(ActionType.SCROLL, Target("x", (0, 0, 1, 1)), "s")
    with pytest.raises(ValueError):
        Action(ActionType.CLICK, Target(), "s")


def test_action_patch():
    img = np.arange(20 * 30 * 3, dtype=np.uint8).reshape(20, 30, 3)
    s = make_screen(img, boxes=[(2, 3, 12, 9)])
    click = click_action(s, (0,), s.dom.children[0])
    assert action_patch(s, click).shape == (6, 10, 3)
    assert action_patch(s, scroll_action(s, "down")) is s.screenshot


ids = st.text(st.characters(min_codepoint=33, max_codepoint=126), min_size=1, max_size=12)


@given(ids, ids)
def test_key_depends_on_node(a, b):
    t = Target("e", (0, 0, 1, 1), "body/a:0", ("x",), "a")
    same = make_action_key(a, t, ActionType.CLICK) == make_action_key(b, t, ActionType.CLICK)
    assert same == (a == b)
