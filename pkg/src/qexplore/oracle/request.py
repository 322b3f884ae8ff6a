"""Oracle requests: task tags, template rendering and stable hashing."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from string import Template

import numpy as np

TEMPLATE_VERSION = 1


class Task(str, Enum):
    SCORE_QHAT = "ScoreQhat"
    DESCRIBE_TRANSITION = "DescribeTransition"
    GENERATE_QUERIES = "GenerateQueries"
    RANK_COVERAGE = "RankCoverage"


_TEMPLATE_FILES = {
    Task.SCORE_QHAT: "score_qhat",
    Task.DESCRIBE_TRANSITION: "describe_transition",
    Task.GENERATE_QUERIES: "generate_queries",
    Task.RANK_COVERAGE: "rank_coverage",
}

_cache: dict = {}


def template_text(task: Task, version: int = TEMPLATE_VERSION) -> str:
    key = (Task(task), version)
    if key not in _cache:
        name = f"{_TEMPLATE_FILES[key[0]]}.v{version}.txt"
        _cache[key] = resources.files(__package__).joinpath("templates", name).read_text(encoding="utf-8")
    return _cache[key]


def render(task: Task, **slots) -> str:
    # substitute (not safe_substitute) so a missing slot fails loudly
    return Template(template_text(task)).substitute({k: str(v) for k, v in slots.items()})


def image_digest(img: np.ndarray) -> str:
    arr = np.ascontiguousarray(img, dtype=np.uint8)
    h = hashlib.sha256()
    h.update(repr(arr.shape).encode())
    h.update(arr.tobytes())
    return h.hexdigest()


@dataclass
class OracleRequest:
    """One call to the model.

    ``context`` carries structured hints for the offline mock; it is not part
    of the hash, so the hash depends only on what a real model would see.
    """

    task: Task
    prompt: str
    images: list = field(default_factory=list)
    context: dict = field(default_factory=dict)
    request_hash: str = ""

    def __post_init__(self):
        self.task = Task(self.task)
        if not self.request_hash:
            h = hashlib.sha256()
            h.update(f"{self.task.value}\x1fv{TEMPLATE_VERSION}\x1f".encode())
            h.update(self.prompt.encode("utf-8"))
            for img in self.images:
                h.update(b"\x1f" + image_digest(img).encode())
            self.request_hash = h.hexdigest()


@dataclass(frozen=True)
class QueryBundle:
    analysis: str
    system1: tuple[str, ...]
    system2: tuple[str, ...]
    warnings: tuple[str, ...] = ()
