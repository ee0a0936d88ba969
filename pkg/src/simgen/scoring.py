"""Structured critique scores, deltas, and the deterministic planner policy."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence

from .errors import EmptyHistory, KindMismatch


class ComponentKind(str, Enum):
    STATE_CHANGE = "state_change"
    DECOMPOSE = "decompose"
    INPUT_LOGIC = "input_logic"
    STATE_TRANSITION = "state_transition"
    UI_RENDERING = "ui_rendering"


#: Fixed, ordered scoring categories per component kind.
RUBRICS: dict[ComponentKind, tuple[str, ...]] = {
    ComponentKind.STATE_CHANGE: ("correctness", "completeness", "relevance"),
    ComponentKind.DECOMPOSE: ("decomposition_quality", "completeness", "clarity"),
    ComponentKind.INPUT_LOGIC: ("correctness", "state_usage", "code_quality"),
    ComponentKind.STATE_TRANSITION: ("correctness", "state_usage", "code_quality"),
    ComponentKind.UI_RENDERING: ("correctness", "visual_quality", "state_usage",
                                 "code_quality"),
}

SCORE_MIN = 0
SCORE_MAX = 10


class PlannerDecision(Enum):
    ACCEPT = "accept"
    ROLLBACK = "rollback"
    REFINE = "refine"


@dataclass(frozen=True)
class Critique:
    """One critic evaluation: integer category scores plus textual feedback."""

    kind: ComponentKind
    scores: tuple[int, ...]
    feedback: str = ""
    suggestions: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "scores", tuple(self.scores))
        object.__setattr__(self, "suggestions", tuple(self.suggestions))
        rubric = RUBRICS[ComponentKind(self.kind)]
        if len(self.scores) != len(rubric):
            raise ValueError(
                f"{self.kind.value} critique needs {len(rubric)} scores, "
                f"got {len(self.scores)}")
        for s in self.scores:
            if not isinstance(s, int) or not SCORE_MIN <= s <= SCORE_MAX:
                raise ValueError(f"score out of range: {s!r}")

    @property
    def categories(self) -> tuple[str, ...]:
        return RUBRICS[self.kind]


def total(critique: Critique) -> int:
    """Sum of category scores."""
    return sum(critique.scores)


class ScoreDelta(NamedTuple):
    category: str
    prev: int
    curr: int
    delta: int


def deltas(prev: Critique, curr: Critique) -> list[ScoreDelta]:
    """Per-category signed score changes, in rubric order."""
    if prev.kind != curr.kind:
        raise KindMismatch(f"{prev.kind.value} vs {curr.kind.value}")
    return [ScoreDelta(cat, p, c, c - p)
            for cat, p, c in zip(prev.categories, prev.scores, curr.scores)]


def _title_case(category: str) -> str:
    return " ".join(word.capitalize() for word in category.split("_"))


def format_deltas(score_deltas: Sequence[ScoreDelta]) -> str:
    """One line per category, e.g. ``Correctness: 6 → 8 (+2)``."""
    return "\n".join(
        f"{_title_case(d.category)}: {d.prev} → {d.curr} ({d.delta:+d})"
        for d in score_deltas)


def planner_policy(history: Sequence[Critique], tau: int) -> PlannerDecision:
    """Decide accept / rollback / refine from the critique history.

    Accept when every latest category score clears tau; otherwise rollback
    when the latest total strictly regressed from the previous round; refine
    otherwise. Accept is checked first, so a round that both clears tau and
    regresses in total is still accepted.
    """
    if not history:
        raise EmptyHistory("planner policy needs at least one critique")
    latest = history[-1]
    if min(latest.scores) >= tau:
        return PlannerDecision.ACCEPT
    if len(history) >= 2 and total(latest) < total(history[-2]):
        return PlannerDecision.ROLLBACK
    return PlannerDecision.REFINE
