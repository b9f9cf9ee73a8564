"""Axis-aligned box arithmetic: IoU, NMS, greedy matching, error taxonomy."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence


class InvalidBox(ValueError):
    """Raised for degenerate or non-finite box coordinates."""


@dataclass(frozen=True)
class BBox:
    left: float
    top: float
    right: float
    bottom: float

    def __post_init__(self):
        for v in (self.left, self.top, self.right, self.bottom):
            if not math.isfinite(v):
                raise InvalidBox(f"non-finite coordinate in {self!r}")
        if not (self.left < self.right and self.top < self.bottom):
            raise InvalidBox(
                f"degenerate box: need left < right and top < bottom, got "
                f"({self.left}, {self.top}, {self.right}, {self.bottom})"
            )

    @property
    def width(self) -> float:
        return self.right - self.left

    @property
    def height(self) -> float:
        return self.bottom - self.top

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.left + self.right) / 2.0, (self.top + self.bottom) / 2.0)

    def as_list(self) -> list[float]:
        return [self.left, self.top, self.right, self.bottom]


class ErrorKind(Enum):
    MATCHED = "matched"
    MISFITTING = "misfitting"
    OVERLOOKED = "overlooked"


@dataclass
class MatchResult:
    pairs: list[tuple[int, int, float]] = field(default_factory=list)
    unmatched_a: list[int] = field(default_factory=list)
    unmatched_b: list[int] = field(default_factory=list)

    @property
    def matched_a(self) -> set[int]:
        return {i for i, _, _ in self.pairs}

    @property
    def matched_b(self) -> set[int]:
        return {j for _, j, _ in self.pairs}


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union in continuous coordinates."""
    iw = min(a.right, b.right) - max(a.left, b.left)
    ih = min(a.bottom, b.bottom) - max(a.top, b.top)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def max_iou(box: BBox, others: Iterable[BBox]) -> float:
    return max((iou(box, o) for o in others), default=0.0)


def nms(boxes: Sequence[tuple[BBox, float]], iou_threshold: float = 0.5) -> list[int]:
    """Greedy non-maximum suppression.

    Repeatedly keeps the highest-scoring remaining box and suppresses every
    remaining box with IoU strictly above ``iou_threshold`` against it.
    Returns surviving indices in descending score order; equal scores break
    by lower input index.
    """
    for _, s in boxes:
        if not math.isfinite(s):
            raise ValueError("non-finite score")
    order = sorted(range(len(boxes)), key=lambda i: (-boxes[i][1], i))
    keep: list[int] = []
    suppressed = [False] * len(boxes)
    for pos, i in enumerate(order):
        if suppressed[i]:
            continue
        keep.append(i)
        for j in order[pos + 1 :]:
            if not suppressed[j] and iou(boxes[i][0], boxes[j][0]) > iou_threshold:
                suppressed[j] = True
    return keep


def greedy_match(a: Sequence[BBox], b: Sequence[BBox], iou_threshold: float) -> MatchResult:
    """One-to-one matching by descending IoU.

    All cross pairs with IoU >= threshold are sorted by descending IoU
    (ties: lower a-index, then lower b-index) and accepted whenever both
    endpoints are still free.
    """
    if not (0.0 < iou_threshold <= 1.0):
        raise ValueError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    candidates: list[tuple[float, int, int]] = []
    for i, box_a in enumerate(a):
        for j, box_b in enumerate(b):
            v = iou(box_a, box_b)
            if v >= iou_threshold:
                candidates.append((v, i, j))
    candidates.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_a: set[int] = set()
    used_b: set[int] = set()
    result = MatchResult()
    for v, i, j in candidates:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        result.pairs.append((i, j, v))
    result.unmatched_a = [i for i in range(len(a)) if i not in used_a]
    result.unmatched_b = [j for j in range(len(b)) if j not in used_b]
    return result


def classify_errors(
    vgt: Sequence[BBox], gt: Sequence[BBox], iou_threshold: float = 0.5
) -> list[ErrorKind]:
    """Per-VGT-box error taxonomy against a reference set.

    Greedy matching at the threshold decides MATCHED; unmatched boxes are
    MISFITTING when their best reference IoU lies in (0, threshold) and
    OVERLOOKED when it is zero. Unmatched boxes whose best IoU still reaches
    the threshold (the reference box was consumed by another pair) also count
    as MATCHED: they describe an already-annotated object.
    """
    match = greedy_match(vgt, gt, iou_threshold)
    matched = match.matched_a
    kinds: list[ErrorKind] = []
    for i, box in enumerate(vgt):
        if i in matched:
            kinds.append(ErrorKind.MATCHED)
            continue
        best = max_iou(box, gt)
        if best >= iou_threshold:
            kinds.append(ErrorKind.MATCHED)
        elif best > 0.0:
            kinds.append(ErrorKind.MISFITTING)
        else:
            kinds.append(ErrorKind.OVERLOOKED)
    return kinds


def filter_boxes(
    boxes: Sequence[BBox],
    min_height: float = 0.0,
    dontcare: Sequence[BBox] = (),
    dontcare_iou: float = 0.5,
) -> list[int]:
    """Indices of boxes tall enough and clear of every don't-care region.

    A box is dropped when its IoU with any don't-care region reaches
    ``dontcare_iou``. Plain IoU is used by default; pass a different
    threshold (or pre-transform regions) for devkit-style overlap rules.
    """
    if min_height < 0:
        raise ValueError("min_height must be >= 0")
    kept = []
    for i, box in enumerate(boxes):
        if box.height < min_height:
            continue
        if any(iou(box, dc) >= dontcare_iou for dc in dontcare):
            continue
        kept.append(i)
    return kept
