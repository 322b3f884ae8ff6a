"""Deterministic manifest-driven GUI simulator."""

from __future__ import annotations

from ..errors import EnvironmentProtocolError
from ..screen import Action, ActionType, Screen, click_action, scroll_action
from .manifest import EnvironmentManifest
from .render import draw_animated, has_animation, render_static


class Simulator:
    """Plays back a manifest as a GUI.

    Clicking an invalid element leaves the screen untouched; scrolling moves
    between the discrete pages of one document. Every capture advances an
    animation clock, so screens with a banner differ between captures.
    """

    def __init__(self, manifest: EnvironmentManifest):
        self.manifest = manifest
        self.name = manifest.name
        self._static: dict = {}
        self._dom: dict = {}
        self.state = (manifest.initial, 0)
        self.tick = 0

    def _render(self) -> Screen:
        sid, page = self.state
        key = (sid, page)
        if key not in self._static:
            self._static[key] = render_static(self.manifest, sid, page)
            self._dom[key] = self.manifest.build_dom(sid, page)
        img = self._static[key]
        if has_animation(self.manifest, sid, page):
            img = draw_animated(img.copy(), self.manifest, sid, page, self.tick)
        else:
            img = img.copy()
        self.tick += 1
        return Screen(self.manifest.screen(sid).screen_id(page), img, self._dom[key])

    @property
    def current_id(self) -> str:
        sid, page = self.state
        return self.manifest.screen(sid).screen_id(page)

    def reset(self) -> Screen:
        self.state = (self.manifest.initial, 0)
        self.tick = 0
        return self._render()

    def observe(self) -> Screen:
        return self._render()

    def get_candidate_actions(self, screen: Screen) -> list[Action]:
        actions = [click_action(screen, path, el) for path, el in screen.elements() if el.interactive]
        sid, page = self._parse(screen.id)
        spec = self.manifest.screen(sid)
        if spec.pages > 1:
            actions.append(scroll_action(screen, "down"))
            if page > 0:
                actions.append(scroll_action(screen, "up"))
        return actions

    def _parse(self, screen_id: str) -> tuple[str, int]:
        sid, _, page = screen_id.partition("#p")
        return sid, int(page) if page else 0

    def execute(self, action: Action) -> Screen:
        if action.source_screen_id != self.current_id:
            raise EnvironmentProtocolError(
                f"stale action from {action.source_screen_id!r}; current screen is {self.current_id!r}")
        sid, page = self.state
        if action.action_type is ActionType.SCROLL:
            self.state = self.manifest.step(sid, page, scroll=action.target.direction or "down")
        else:
            visible = {e.id for e in self.manifest.screen(sid).visible(page)}
            if action.target.element_id not in visible:
                raise EnvironmentProtocolError(f"element {action.target.element_id!r} not on screen")
            self.state = self.manifest.step(sid, page, element_id=action.target.element_id)
        return self._render()
