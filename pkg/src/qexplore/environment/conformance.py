"""Behavioural checks any environment implementation should pass.

``check_environment(env)`` drives a short scripted session and returns a
list of human-readable failures (empty when the environment conforms). The
checks only use the public contract, so they run unchanged against the
simulator and against a remote adapter.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..errors import EnvironmentProtocolError
from ..fuzzy_match import Matcher
from ..screen import ActionType, Screen


def _screen_problems(screen, where: str) -> list[str]:
    if not isinstance(screen, Screen):
        return [f"{where}: returned {type(screen).__name__}, not a Screen"]
    out = []
    h, w = screen.screenshot.shape[:2]
    for _, el in screen.elements():
        x0, y0, x1, y1 = el.box
        if not (0 <= x0 <= x1 <= w and 0 <= y0 <= y1 <= h):
            out.append(f"{where}: element {el.eid!r} box {el.box} outside the screenshot")
    return out


def check_environment(env, steps: int = 8, seed: int = 0, matcher: Optional[Matcher] = None) -> list[str]:
    matcher = matcher or Matcher()
    rng = np.random.default_rng(seed)
    failures: list[str] = []

    first = env.reset()
    failures += _screen_problems(first, "reset")
    if failures:
        return failures
    again = env.reset()
    if not matcher.same_screen(first, again):
        failures.append("reset: two resets gave different screens")

    screen = again
    for step in range(steps):
        cands = env.get_candidate_actions(screen)
        if [a.to_dict() for a in cands] != [a.to_dict() for a in env.get_candidate_actions(screen)]:
            failures.append(f"step {step}: candidate list not deterministic")
        kinds = [a.action_type for a in cands]
        if ActionType.SCROLL in kinds and kinds[kinds.index(ActionType.SCROLL):].count(ActionType.CLICK):
            failures.append(f"step {step}: scroll candidates must follow all clicks")
        for a in cands:
            if a.source_screen_id != screen.id:
                failures.append(f"step {step}: candidate issued for {a.source_screen_id!r}, not {screen.id!r}")
                break
            if a.action_type is ActionType.CLICK and screen.dom.find(a.target.element_id) is None:
                failures.append(f"step {step}: click target {a.target.element_id!r} not in the DOM")
        if not cands:
            screen = env.reset()
            continue
        action = cands[int(rng.integers(len(cands)))]
        screen = env.execute(action)
        failures += _screen_problems(screen, f"step {step} execute")
        if failures:
            return failures
        # The action just used was issued for the previous screen.
        if action.source_screen_id != screen.id:
            try:
                env.execute(action)
                failures.append(f"step {step}: stale action was accepted")
            except EnvironmentProtocolError:
                pass
    observed = env.observe()
    failures += _screen_problems(observed, "observe")
    if isinstance(observed, Screen) and observed.id != screen.id:
        failures.append("observe: changed the screen id without an action")
    return failures
