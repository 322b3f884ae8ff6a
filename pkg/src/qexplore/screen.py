"""Core GUI state types: DOM elements, screens and actions."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator, Optional

import numpy as np

Box = tuple[int, int, int, int]  # x0, y0, x1, y1; half-open pixel bounds


@dataclass
class Element:
    """One node of a screen's element tree.

    ``interactive`` marks the element as an action candidate. It says nothing
    about whether clicking it actually does anything.
    """

    tag: str
    classes: tuple[str, ...]
    box: Box
    eid: str = ""
    text: str = ""
    interactive: bool = False
    children: list[Element] = field(default_factory=list)

    def walk(self) -> Iterator[tuple[tuple[int, ...], Element]]:
        """Depth-first traversal in document order, yielding (path, element)."""
        stack: list[tuple[tuple[int, ...], Element]] = [((), self)]
        while stack:
            path, node = stack.pop()
            yield path, node
            for i in range(len(node.children) - 1, -1, -1):
                stack.append((path + (i,), node.children[i]))

    def dom_path(self, path: tuple[int, ...]) -> str:
        """Tag path from the root to ``path``, e.g. ``body/main:1/a:0``."""
        parts = [self.tag]
        node = self
        for i in path:
            node = node.children[i]
            parts.append(f"{node.tag}:{i}")
        return "/".join(parts)

    def find(self, eid: str) -> Optional[Element]:
        for _, node in self.walk():
            if node.eid == eid:
                return node
        return None

    def to_dict(self) -> dict:
        d = {
            "tag": self.tag,
            "classes": list(self.classes),
            "box": list(self.box),
            "eid": self.eid,
            "text": self.text,
            "interactive": self.interactive,
        }
        if self.children:
            d["children"] = [c.to_dict() for c in self.children]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> Element:
        return cls(
            tag=d["tag"],
            classes=tuple(d.get("classes", ())),
            box=tuple(int(v) for v in d["box"]),
            eid=d.get("eid", ""),
            text=d.get("text", ""),
            interactive=bool(d.get("interactive", False)),
            children=[cls.from_dict(c) for c in d.get("children", ())],
        )


def _roles() -> dict[str, str]:
    return {"a": "link", "button": "button", "img": "image", "input": "textbox",
            "h1": "heading", "h2": "heading", "nav": "navigation", "main": "main",
            "header": "banner", "footer": "contentinfo", "li": "listitem"}


def flatten_a11y(root: Element) -> str:
    """Render the element tree as an indented accessibility listing."""
    roles = _roles()
    lines = []
    for path, el in root.walk():
        role = roles.get(el.tag, "generic")
        name = f' "{el.text}"' if el.text else ""
        focus = " focusable" if el.interactive else ""
        lines.append(f"{'  ' * len(path)}[{el.eid or '-'}] {role}{name}{focus}")
    return "\n".join(lines)


@dataclass(eq=False)
class Screen:
    """One observed GUI state."""

    id: str
    screenshot: np.ndarray  # (H, W, 3) uint8
    dom: Element
    a11y: str = ""
    dynamic_mask: Optional[np.ndarray] = None  # (H, W) bool, True = ignored

    def __post_init__(self):
        img = np.asarray(self.screenshot)
        if img.ndim != 3 or img.shape[2] != 3:
            raise ValueError(f"screenshot must be HxWx3, got {img.shape}")
        self.screenshot = img.astype(np.uint8, copy=False)
        h, w = img.shape[:2]
        for _, el in self.dom.walk():
            x0, y0, x1, y1 = el.box
            if not (0 <= x0 <= x1 <= w and 0 <= y0 <= y1 <= h):
                raise ValueError(f"element {el.eid!r} box {el.box} outside {w}x{h} screen")
        if self.dynamic_mask is not None:
            mask = np.asarray(self.dynamic_mask, dtype=bool)
            if mask.shape != (h, w):
                raise ValueError("dynamic_mask must match screenshot size")
            self.dynamic_mask = mask
        if not self.a11y:
            self.a11y = flatten_a11y(self.dom)

    @property
    def resolution(self) -> tuple[int, int]:
        h, w = self.screenshot.shape[:2]
        return w, h

    def crop(self, box: Box) -> np.ndarray:
        x0, y0, x1, y1 = box
        return self.screenshot[y0:y1, x0:x1]

    def elements(self) -> Iterator[tuple[tuple[int, ...], Element]]:
        return self.dom.walk()

    def with_id(self, new_id: str) -> Screen:
        return replace(self, id=new_id)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(repr(self.screenshot.shape).encode())
        h.update(self.screenshot.tobytes())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, Screen):
            return NotImplemented
        if (self.dynamic_mask is None) != (other.dynamic_mask is None):
            return False
        return (
            self.id == other.id
            and np.array_equal(self.screenshot, other.screenshot)
            and self.dom == other.dom
            and self.a11y == other.a11y
            and (self.dynamic_mask is None or np.array_equal(self.dynamic_mask, other.dynamic_mask))
        )


class ActionType(str, Enum):
    CLICK = "click"
    SCROLL = "scroll"


FULL_PAGE = "full page"


@dataclass(frozen=True)
class Target:
    """What an action acts on: one element, or the full page for scrolls."""

    element_id: str = FULL_PAGE
    box: Optional[Box] = None
    dom_path: str = ""
    classes: tuple[str, ...] = ()
    tag: str = ""
    direction: str = ""  # scroll only: "down" / "up"

    @property
    def is_full_page(self) -> bool:
        return self.element_id == FULL_PAGE

    def to_dict(self) -> dict:
        return {
            "element_id": self.element_id,
            "box": list(self.box) if self.box is not None else None,
            "dom_path": self.dom_path,
            "classes": list(self.classes),
            "tag": self.tag,
            "direction": self.direction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Target:
        box = d.get("box")
        return cls(
            element_id=d["element_id"],
            box=tuple(int(v) for v in box) if box is not None else None,
            dom_path=d.get("dom_path", ""),
            classes=tuple(d.get("classes", ())),
            tag=d.get("tag", ""),
            direction=d.get("direction", ""),
        )


def make_action_key(node_id: str, target: Target, action_type: ActionType) -> str:
    """Stable identity of "this control on this screen"."""
    ident = target.dom_path + "|" + ".".join(target.classes) if not target.is_full_page else (
        FULL_PAGE + "|" + target.direction)
    raw = f"{node_id}\x1f{ident}\x1f{ActionType(action_type).value}"
    return hashlib.sha1(raw.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Action:
    action_type: ActionType
    target: Target
    source_screen_id: str
    action_key: str = ""
    env_key: str = ""  # key the issuing environment knows the action by

    def __post_init__(self):
        object.__setattr__(self, "action_type", ActionType(self.action_type))
        if self.action_type is ActionType.SCROLL and not self.target.is_full_page:
            raise ValueError("scroll actions must target the full page")
        if self.action_type is ActionType.CLICK and self.target.is_full_page:
            raise ValueError("click actions must target an element")
        if not self.action_key:
            key = make_action_key(self.source_screen_id, self.target, self.action_type)
            object.__setattr__(self, "action_key", key)
        if not self.env_key:
            object.__setattr__(self, "env_key", self.action_key)

    def rekey(self, node_id: str) -> Action:
        """Re-derive the action key against a matched graph node id."""
        return replace(self, action_key=make_action_key(node_id, self.target, self.action_type))

    def describe_target(self) -> str:
        if self.target.is_full_page:
            return f"scroll {self.target.direction or 'down'} (full page)"
        cls = ".".join(self.target.classes)
        return f"{self.target.tag}.{cls} at {list(self.target.box)}"

    def to_dict(self) -> dict:
        return {
            "action_type": self.action_type.value,
            "target": self.target.to_dict(),
            "source_screen_id": self.source_screen_id,
            "action_key": self.action_key,
            "env_key": self.env_key,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Action:
        return cls(
            action_type=ActionType(d["action_type"]),
            target=Target.from_dict(d["target"]),
            source_screen_id=d["source_screen_id"],
            action_key=d["action_key"],
            env_key=d.get("env_key", ""),
        )


def click_action(screen: Screen, path: tuple[int, ...], el: Element) -> Action:
    target = Target(
        element_id=el.eid,
        box=el.box,
        dom_path=screen.dom.dom_path(path),
        classes=tuple(el.classes),
        tag=el.tag,
    )
    return Action(ActionType.CLICK, target, screen.id)


def scroll_action(screen: Screen, direction: str) -> Action:
    return Action(ActionType.SCROLL, Target(direction=direction), screen.id)


def action_patch(screen: Screen, action: Action) -> np.ndarray:
    """Pixels the action targets; the whole screenshot for scrolls."""
    if action.target.is_full_page or action.target.box is None:
        return screen.screenshot
    return screen.crop(action.target.box)
