"""Microtask and annotator-response types shared by pipeline, service and simulator."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .geometry import BBox


class MicrotaskKind(Enum):
    DIRECT_BOX = "direct_box"
    KEYPOINT = "keypoint"
    KEYPOINT_BOX = "keypoint_box"
    IS_PEDESTRIAN = "is_pedestrian"
    IS_HUMAN = "is_human"
    ACTIVITY = "activity"


CANT_SOLVE = "Can't See/Can't Solve"

# Fixed answer-option sets for the semantic question kinds.
OPTION_SETS: dict[MicrotaskKind, tuple[str, ...]] = {
    MicrotaskKind.IS_PEDESTRIAN: ("Yes", "No", CANT_SOLVE),
    MicrotaskKind.IS_HUMAN: ("Yes", "No", CANT_SOLVE),
    MicrotaskKind.ACTIVITY: (
        "Walking/Running/Standing",
        "Riding/Driving a vehicle",
        "Sitting/Lying down",
        "Other activity",
        CANT_SOLVE,
    ),
}

SEMANTIC_KINDS = frozenset(OPTION_SETS)
LOCALIZATION_KINDS = frozenset(MicrotaskKind) - SEMANTIC_KINDS

# Answer options treated as "walking pedestrian" positives for the activity task.
ACTIVITY_POSITIVE = ("Walking/Running/Standing",)


@dataclass
class Microtask:
    task_id: str
    kind: MicrotaskKind
    image_id: str
    n_annotators: int
    bbox: BBox | None = None  # target box for semantic / highlight tasks
    payload: dict[str, Any] = field(default_factory=dict)

    @property
    def options(self) -> tuple[str, ...]:
        return OPTION_SETS.get(self.kind, ())

    @property
    def is_semantic(self) -> bool:
        return self.kind in SEMANTIC_KINDS


@dataclass
class AnnotatorResponse:
    task_id: str
    annotator_id: str
    answer: Any  # option token for semantic tasks, geometry payload otherwise
    duration: float  # seconds
    timestamp: float = 0.0

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be positive")


def validate_answer(kind: MicrotaskKind, answer: Any) -> bool:
    if kind in SEMANTIC_KINDS:
        return answer in OPTION_SETS[kind]
    if kind in (MicrotaskKind.DIRECT_BOX, MicrotaskKind.KEYPOINT_BOX):
        return _valid_boxes(answer)
    if kind == MicrotaskKind.KEYPOINT:
        return _valid_points(answer)
    return False


def _valid_boxes(answer: Any) -> bool:
    if not isinstance(answer, (list, tuple)):
        return False
    for b in answer:
        if not (isinstance(b, (list, tuple)) and len(b) == 4):
            return False
        l, t, r, bo = b
        if not (l < r and t < bo):
            return False
    return True


def _valid_points(answer: Any) -> bool:
    if not isinstance(answer, (list, tuple)):
        return False
    return all(isinstance(p, (list, tuple)) and len(p) == 2 for p in answer)
