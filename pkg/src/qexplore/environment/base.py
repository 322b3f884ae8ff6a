"""The contract every GUI environment satisfies."""

from __future__ import annotations

from typing import Protocol, runtime_checkable

from ..screen import Action, Screen


@runtime_checkable
class GUIEnvironment(Protocol):
    name: str

    def reset(self) -> Screen:
        """Return to the initial screen."""

    def get_candidate_actions(self, screen: Screen) -> list[Action]:
        """Click actions for candidate elements in document order, then scrolls."""

    def execute(self, action: Action) -> Screen:
        """Run an action issued for the current screen and observe the result."""

    def observe(self) -> Screen:
        """Capture the current screen again without acting."""
