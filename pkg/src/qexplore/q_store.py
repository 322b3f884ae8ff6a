"""Memory-based Q-values for exploration actions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import NumericDomainError

DEFAULT_Q = 100.0
MIN_Q = 1e-9


class Outcome(str, Enum):
    NEW_SCREEN = "NewScreen"
    SEEN_SCREEN = "SeenScreen"
    SAME_SCREEN = "SameScreen"


@dataclass
class QTable:
    values: dict[str, float] = field(default_factory=dict)
    default_q: float = DEFAULT_Q
    gamma_max: float = 0.85
    gamma_med: float = 0.75
    gamma_low: float = 0.4

    def __post_init__(self):
        if not self.gamma_max > self.gamma_med > self.gamma_low > 0:
            raise ValueError("need gamma_max > gamma_med > gamma_low > 0")
        if self.gamma_max > 1:
            raise ValueError("gamma_max must not exceed 1")

    def __contains__(self, key: str) -> bool:
        return key in self.values

    def __len__(self) -> int:
        return len(self.values)

    def get(self, key: str) -> float:
        return self.values.get(key, self.default_q)

    def snapshot(self) -> dict[str, float]:
        return dict(sorted(self.values.items()))

    def params(self) -> dict:
        return {"default_q": self.default_q, "gamma_max": self.gamma_max,
                "gamma_med": self.gamma_med, "gamma_low": self.gamma_low}


def get_q(table: QTable, key: str) -> float:
    return table.get(key)


def q_next_mean(table: QTable, next_candidates: Sequence[str]) -> float:
    """Mean Q over the arrived screen's candidates; a dead end counts as unexplored."""
    if not next_candidates:
        return table.default_q
    return math.fsum(table.get(k) for k in next_candidates) / len(next_candidates)


def update_q(table: QTable, key: str, outcome: Outcome, q_next: float) -> float:
    outcome = Outcome(outcome)
    if outcome is Outcome.SAME_SCREEN:
        value = table.gamma_low * table.get(key)
    else:
        if q_next is None or not math.isfinite(q_next):
            raise NumericDomainError(f"q_next must be finite, got {q_next!r}")
        gamma = table.gamma_max if outcome is Outcome.NEW_SCREEN else table.gamma_med
        value = gamma * q_next
    value = min(table.default_q, max(MIN_Q, value))
    table.values[key] = value
    return value


def weighted_sample(candidates: Sequence[str], table: QTable, H: int,
                    rng: np.random.Generator) -> list[str]:
    """Draw up to ``H`` distinct keys, each draw proportional to current Q.

    Keys come back in draw order. With ``len(candidates) <= H`` every key is
    returned in input order and ``rng`` is not consumed.
    """
    if H < 1:
        raise ValueError("H must be at least 1")
    pool = list(candidates)
    if len(pool) <= H:
        return pool
    weights = np.array([table.get(k) for k in pool], dtype=np.float64)
    chosen = []
    for _ in range(H):
        cdf = np.cumsum(weights)
        u = rng.random() * cdf[-1]
        idx = int(np.searchsorted(cdf, u, side="right"))
        idx = min(idx, len(pool) - 1)
        while weights[idx] == 0:  # u landed exactly on a boundary
            idx -= 1
        chosen.append(pool[idx])
        weights[idx] = 0.0
    return chosen
