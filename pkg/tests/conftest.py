import numpy as np
import pytest

from qexplore.environment import ElementSpec, EnvironmentManifest, ScreenSpec, Simulator, load_manifest
from qexplore.fuzzy_match import Matcher
from qexplore.screen import Element, Screen


def two_screen_manifest():
    """start --go--> end --back--> start; one candidate per screen."""
    start = ScreenSpec("start", "landing", [
        ElementSpec("go", "a", ("link",), (20, 60, 120, 90), text="go"),
        ElementSpec("note", "p", ("note",), (20, 120, 300, 160), text="welcome", interactive=False,
                    executable=False),
    ])
    end = ScreenSpec("end", "detail", [
        ElementSpec("back", "a", ("link", "back"), (20, 60, 120, 90), text="back"),
    ])
    return EnvironmentManifest("pair", [start, end], {"start/go": "end", "end/back": "start"}, "start",
                               render_seed=5)


def noisy_manifest():
    """Three screens, an invalid element, a two-page list and an animated banner."""
    home = ScreenSpec("home", "landing", [
        ElementSpec("banner", "div", ("banner",), (16, 40, 384, 80), shape="banner", interactive=False,
                    executable=False),
        ElementSpec("list", "a", ("link",), (16, 100, 116, 124), text="list"),
        ElementSpec("dud", "span", ("icon", "dud"), (140, 100, 164, 124), text="dud", shape="icon",
                    executable=False),
        ElementSpec("about", "a", ("link",), (200, 100, 300, 124), text="about"),
    ])
    lst = ScreenSpec("list", "listing", [
        ElementSpec("home", "a", ("link", "home"), (16, 40, 116, 60), region="header", text="home"),
        ElementSpec("title-0", "h1", ("title",), (16, 70, 216, 90), text="page one", interactive=False,
                    executable=False),
        ElementSpec("item-0", "a", ("card",), (16, 100, 116, 160), text="item 0", shape="image"),
        ElementSpec("title-1", "h1", ("title",), (16, 70, 216, 90), text="page two", page=1,
                    interactive=False, executable=False),
        ElementSpec("item-1", "a", ("card",), (16, 100, 116, 160), text="item 1", shape="image", page=1),
    ], pages=2)
    about = ScreenSpec("about", "info", [
        ElementSpec("home", "a", ("link", "home"), (16, 40, 116, 60), text="home"),
    ])
    return EnvironmentManifest("noisy", [home, lst, about],
                               {"home/list": "list", "home/about": "about", "list/home": "home",
                                "list/item-0": "about", "list/item-1": "about", "about/home": "home"},
                               "home", render_seed=9)


@pytest.fixture
def pair_manifest():
    return two_screen_manifest()


@pytest.fixture
def noisy():
    return noisy_manifest()


@pytest.fixture(scope="session")
def bundled():
    return {name: load_manifest(name) for name in ("icons", "shop", "forum")}


@pytest.fixture
def matcher():
    return Matcher()


def make_screen(img, sid="s", boxes=((0, 0, 10, 10),), mask=None):
    h, w = img.shape[:2]
    dom = Element("body", ("root",), (0, 0, w, h), eid="body",
                  children=[Element("div", ("box", f"b{i}"), tuple(b), eid=f"e{i}", interactive=True)
                            for i, b in enumerate(boxes)])
    return Screen(sid, img, dom, dynamic_mask=mask)


def every_screen(manifest):
    sim = Simulator(manifest)
    out = []
    for sid in manifest.reachable_screens():
        s, _, p = sid.partition("#p")
        sim.state = (s, int(p) if p else 0)
        out.append(sim.observe())
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
