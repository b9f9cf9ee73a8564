"""End-to-end correction loop: proposals -> microtasks -> responses -> soft labels
-> accept/reject -> corrected dataset plus a cost ledger."""
from __future__ import annotations

import statistics
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Iterable, Protocol, Sequence

from .dataset_io import LabeledObject, SoftLabeledObject
from .geometry import BBox, iou
from .softlabel import (
    SoftLabel,
    aggregate_binary,
    merge_refinement,
    needs_refinement,
    product_soft_label,
)
from .tasks import ACTIVITY_POSITIVE, AnnotatorResponse, Microtask, MicrotaskKind


class BoxSource(Enum):
    DIRECT_BOX = "direct_box"
    KEYPOINT_TO_BOX = "keypoint_to_box"
    COMBINED = "combined"
    DETECTOR_PROPOSALS = "detector_proposals"


class ValidationStrategy(Enum):
    IS_PEDESTRIAN_11 = "is_pedestrian_11"
    HUMAN_ACTIVITY_22 = "human_activity_22"
    HUMAN_ACTIVITY_AR = "human_activity_ar"
    VGT_FULL = "vgt_full"


# per-box creation cost in seconds for the human box strategies
STAGE1_BOX_COST = {
    BoxSource.DIRECT_BOX: 44.11,
    BoxSource.KEYPOINT_TO_BOX: 92.671,
    BoxSource.COMBINED: 103.79,
    BoxSource.DETECTOR_PROPOSALS: 0.0,
}

# per-box semantic validation cost in seconds
VALIDATION_BOX_COST = {
    ValidationStrategy.IS_PEDESTRIAN_11: 37.87,
    ValidationStrategy.HUMAN_ACTIVITY_22: 57.03,
    ValidationStrategy.HUMAN_ACTIVITY_AR: 77.85,
    ValidationStrategy.VGT_FULL: 124.75,
}


@dataclass
class Strategy:
    box_source: BoxSource = BoxSource.DETECTOR_PROPOSALS
    validation: ValidationStrategy = ValidationStrategy.VGT_FULL
    acceptance_threshold: float = 0.5
    stage1_annotators: int = 3
    semantic_annotators: int = 11
    refinement_annotators: int = 11
    ambiguity_band: tuple[float, float] = (0.2, 0.8)
    charge_stage1_costs: bool = True

    @property
    def uses_refinement(self) -> bool:
        return self.validation in (
            ValidationStrategy.HUMAN_ACTIVITY_AR,
            ValidationStrategy.VGT_FULL,
        )


@dataclass
class CostLedger:
    entries: list[tuple[str, str, float]] = field(default_factory=list)

    def add(self, task_id: str, kind: str, seconds: float) -> None:
        self.entries.append((task_id, kind, seconds))

    @property
    def total(self) -> float:
        return sum(s for _, _, s in self.entries)

    def total_by_kind(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for _, kind, s in self.entries:
            out[kind] = out.get(kind, 0.0) + s
        return out


@dataclass
class ReviewedBox:
    image_id: str
    bbox: BBox
    group_id: str
    soft_label: SoftLabel
    tasks: list[str] = field(default_factory=list)

    def as_softlabeled(self) -> SoftLabeledObject:
        return SoftLabeledObject(
            image_id=self.image_id,
            bbox=self.bbox,
            soft_label=self.soft_label,
            group_id=self.group_id,
            tasks=self.tasks,
        )


@dataclass
class CorrectionOutcome:
    accepted: list[ReviewedBox] = field(default_factory=list)
    rejected: list[ReviewedBox] = field(default_factory=list)
    unresolved: list[ReviewedBox] = field(default_factory=list)
    ledger: CostLedger = field(default_factory=CostLedger)
    partial: bool = False


class SourceExhausted(RuntimeError):
    pass


class ResponseSource(Protocol):
    def collect(self, task: Microtask) -> list[AnnotatorResponse]:
        """One response per assignment slot of the task."""


class SimulatedResponseSource:
    """Adapter over an annotator model plus a latent-truth lookup."""

    def __init__(self, model, truth_for: Callable[[Microtask], Any]):
        self.model = model
        self.truth_for = truth_for

    def collect(self, task: Microtask) -> list[AnnotatorResponse]:
        truth = self.truth_for(task)
        return [
            self.model.answer(task, truth, f"sim-{i}")
            for i in range(task.n_annotators)
        ]


class PrecollectedResponseSource:
    """Responses exported from the live service, grouped by task id."""

    def __init__(self, responses: Iterable[AnnotatorResponse]):
        self.by_task: dict[str, list[AnnotatorResponse]] = {}
        for r in responses:
            self.by_task.setdefault(r.task_id, []).append(r)

    def collect(self, task: Microtask) -> list[AnnotatorResponse]:
        got = self.by_task.get(task.task_id, [])
        if len(got) < task.n_annotators:
            raise SourceExhausted(
                f"task {task.task_id}: {len(got)}/{task.n_annotators} responses"
            )
        return got[: task.n_annotators]


def box_key(image_id: str, bbox: BBox) -> str:
    return f"{image_id}:{bbox.left:.2f},{bbox.top:.2f},{bbox.right:.2f},{bbox.bottom:.2f}"


def generate_microtasks(
    strategy: Strategy,
    boxes: Sequence[tuple[str, BBox]] = (),
    images: Sequence[str] = (),
) -> list[Microtask]:
    """Stage-1 tasks per image and stage-2 semantic tasks per box."""
    tasks: list[Microtask] = []
    for image_id in images:
        if strategy.box_source in (BoxSource.DIRECT_BOX, BoxSource.COMBINED):
            tasks.append(
                Microtask(
                    task_id=f"s1-direct-{image_id}",
                    kind=MicrotaskKind.DIRECT_BOX,
                    image_id=image_id,
                    n_annotators=strategy.stage1_annotators,
                )
            )
        if strategy.box_source in (BoxSource.KEYPOINT_TO_BOX, BoxSource.COMBINED):
            tasks.append(
                Microtask(
                    task_id=f"s1-keypoint-{image_id}",
                    kind=MicrotaskKind.KEYPOINT,
                    image_id=image_id,
                    n_annotators=strategy.stage1_annotators,
                )
            )
    for image_id, bbox in boxes:
        tasks.extend(semantic_tasks_for_box(strategy, image_id, bbox))
    return tasks


def semantic_tasks_for_box(strategy: Strategy, image_id: str, bbox: BBox) -> list[Microtask]:
    key = box_key(image_id, bbox)
    if strategy.validation == ValidationStrategy.IS_PEDESTRIAN_11:
        kinds = [MicrotaskKind.IS_PEDESTRIAN]
    else:
        kinds = [MicrotaskKind.IS_HUMAN, MicrotaskKind.ACTIVITY]
    return [
        Microtask(
            task_id=f"{kind.value}-{key}",
            kind=kind,
            image_id=image_id,
            n_annotators=strategy.semantic_annotators,
            bbox=bbox,
            payload={"box_key": key},
        )
        for kind in kinds
    ]


def _refinement_task(task: Microtask, n: int) -> Microtask:
    return replace(task, task_id=task.task_id + "-ar", n_annotators=n)


def validate_box(
    strategy: Strategy,
    image_id: str,
    bbox: BBox,
    source: ResponseSource,
    ledger: CostLedger,
) -> tuple[SoftLabel, list[str]]:
    """Run the semantic microtasks for one box and aggregate to a soft label."""
    tasks = semantic_tasks_for_box(strategy, image_id, bbox)
    task_ids = []
    labels: dict[MicrotaskKind, SoftLabel] = {}
    responses: dict[MicrotaskKind, Microtask] = {}
    for task in tasks:
        got = source.collect(task)
        for r in got:
            ledger.add(task.task_id, task.kind.value, r.duration)
        positives = ACTIVITY_POSITIVE if task.kind == MicrotaskKind.ACTIVITY else ("Yes",)
        labels[task.kind] = aggregate_binary(got, positive_options=positives)
        responses[task.kind] = task
        task_ids.append(task.task_id)

    label = _combine(strategy, labels)
    if (
        strategy.uses_refinement
        and label.resolvable
        and needs_refinement(label, strategy.ambiguity_band)
    ):
        for kind, task in responses.items():
            ar_task = _refinement_task(task, strategy.refinement_annotators)
            got = source.collect(ar_task)
            for r in got:
                ledger.add(ar_task.task_id, ar_task.kind.value, r.duration)
            labels[kind] = merge_refinement(labels[kind], got)
            task_ids.append(ar_task.task_id)
        label = _combine(strategy, labels)
        label.refined = True
    return label, task_ids


def _combine(strategy: Strategy, labels: dict[MicrotaskKind, SoftLabel]) -> SoftLabel:
    if strategy.validation == ValidationStrategy.IS_PEDESTRIAN_11:
        return labels[MicrotaskKind.IS_PEDESTRIAN]
    human = labels[MicrotaskKind.IS_HUMAN]
    activity = labels[MicrotaskKind.ACTIVITY]
    if not (human.resolvable and activity.resolvable):
        return SoftLabel(p_hat=float("nan"), counts={}, n_valid=0)
    return product_soft_label(human, activity)


def run_correction(
    strategy: Strategy,
    proposals: Sequence[tuple[str, BBox]],
    source: ResponseSource,
) -> CorrectionOutcome:
    """Review every proposed box and partition into accepted/rejected/unresolved."""
    outcome = CorrectionOutcome()
    for i, (image_id, bbox) in enumerate(proposals):
        if strategy.charge_stage1_costs:
            cost = STAGE1_BOX_COST[strategy.box_source]
            if cost:
                outcome.ledger.add(f"stage1-{i}", f"stage1_{strategy.box_source.value}", cost)
        try:
            label, task_ids = validate_box(strategy, image_id, bbox, source, outcome.ledger)
        except SourceExhausted:
            outcome.partial = True
            continue
        box = ReviewedBox(
            image_id=image_id,
            bbox=bbox,
            group_id=f"g{i}",
            soft_label=label,
            tasks=task_ids,
        )
        if not label.resolvable:
            outcome.unresolved.append(box)
        elif label.p_hat >= strategy.acceptance_threshold:
            outcome.accepted.append(box)
        else:
            outcome.rejected.append(box)
    return outcome


def iou_duplicate_resolver(threshold: float = 0.5) -> Callable[[BBox, BBox, float], bool]:
    """Rule-based stand-in for the manual duplicate review used in simulation."""

    def resolve(a: BBox, b: BBox, pair_iou: float) -> bool:
        return pair_iou >= threshold

    return resolve


def dedupe_merge(
    boxes_a: Sequence[SoftLabeledObject],
    boxes_b: Sequence[SoftLabeledObject],
    resolver: Callable[[BBox, BBox, float], bool],
    candidate_iou: float = 0.25,
) -> list[SoftLabeledObject]:
    """Merge two box sets, resolving cross-set duplicate candidates.

    Starts from ``boxes_a`` (the more precise base set) and adds boxes from
    ``boxes_b`` that no resolver call marks as a duplicate of a base box.
    Duplicates adopt the group id of their base box so soft-label aggregation
    can pool them later.
    """
    merged = list(boxes_a)
    for b in boxes_b:
        duplicate_of = None
        for a in boxes_a:
            if a.image_id != b.image_id:
                continue
            v = iou(a.bbox, b.bbox)
            if v > candidate_iou and resolver(a.bbox, b.bbox, v):
                duplicate_of = a
                break
        if duplicate_of is not None:
            merged.append(replace(b, group_id=duplicate_of.group_id))
        else:
            merged.append(b)
    return merged


def cluster_keypoints(
    points: Sequence[tuple[float, float]], radius: float
) -> list[list[int]]:
    """Greedy single-linkage clustering of keypoints within a pixel radius."""
    clusters: list[list[int]] = []
    centers: list[tuple[float, float]] = []
    for i, (x, y) in enumerate(points):
        placed = False
        for c, (cx, cy) in enumerate(centers):
            if (x - cx) ** 2 + (y - cy) ** 2 <= radius**2:
                clusters[c].append(i)
                n = len(clusters[c])
                centers[c] = (cx + (x - cx) / n, cy + (y - cy) / n)
                placed = True
                break
        if not placed:
            clusters.append([i])
            centers.append((x, y))
    return clusters


def aggregate_drawn_boxes(boxes: Sequence[BBox]) -> BBox:
    """Coordinate-wise median of several drawn boxes for the same object."""
    return BBox(
        statistics.median(b.left for b in boxes),
        statistics.median(b.top for b in boxes),
        statistics.median(b.right for b in boxes),
        statistics.median(b.bottom for b in boxes),
    )


def collect_boxes_stage1(
    strategy: Strategy,
    image_truths: dict[str, list[BBox]],
    source: ResponseSource,
    ledger: CostLedger | None = None,
) -> list[SoftLabeledObject]:
    """Run the box-collection stage over images and return candidate boxes.

    Direct drawing yields the drawn boxes as-is; the keypoint workflow
    clusters keypoints (radius = half the median drawn-box height per image)
    and aggregates the per-cluster drawn boxes by coordinate-wise median.
    Combined mode merges both sets, keypoint-to-box first.
    """
    ledger = ledger if ledger is not None else CostLedger()
    direct: list[SoftLabeledObject] = []
    keypoint: list[SoftLabeledObject] = []
    counter = 0

    def _placeholder(image_id: str, bbox: BBox, support: int) -> SoftLabeledObject:
        nonlocal counter
        counter += 1
        return SoftLabeledObject(
            image_id=image_id,
            bbox=bbox,
            soft_label=SoftLabel(p_hat=float("nan"), counts={}, n_valid=0),
            group_id=f"s1-{counter}",
            box_support=support,
        )

    for image_id in sorted(image_truths):
        if strategy.box_source in (BoxSource.DIRECT_BOX, BoxSource.COMBINED):
            task = Microtask(
                task_id=f"s1-direct-{image_id}",
                kind=MicrotaskKind.DIRECT_BOX,
                image_id=image_id,
                n_annotators=strategy.stage1_annotators,
            )
            seen: list[BBox] = []
            for r in source.collect(task):
                ledger.add(task.task_id, task.kind.value, r.duration)
                for coords in r.answer:
                    box = BBox(*coords)
                    # annotators only mark objects not yet boxed
                    if all(iou(box, s) < 0.5 for s in seen):
                        seen.append(box)
                        direct.append(_placeholder(image_id, box, 1))
        if strategy.box_source in (BoxSource.KEYPOINT_TO_BOX, BoxSource.COMBINED):
            kp_task = Microtask(
                task_id=f"s1-keypoint-{image_id}",
                kind=MicrotaskKind.KEYPOINT,
                image_id=image_id,
                n_annotators=strategy.stage1_annotators,
            )
            points: list[tuple[float, float]] = []
            for r in source.collect(kp_task):
                ledger.add(kp_task.task_id, kp_task.kind.value, r.duration)
                points.extend((float(x), float(y)) for x, y in r.answer)
            if not points:
                continue
            heights = [b.height for b in image_truths[image_id]] or [50.0]
            radius = 0.5 * statistics.median(heights)
            for c, cluster in enumerate(cluster_keypoints(points, radius)):
                box_task = Microtask(
                    task_id=f"s1-kpbox-{image_id}-{c}",
                    kind=MicrotaskKind.KEYPOINT_BOX,
                    image_id=image_id,
                    n_annotators=strategy.stage1_annotators,
                    payload={"cluster_center": _cluster_center(points, cluster)},
                )
                drawn: list[BBox] = []
                for r in source.collect(box_task):
                    ledger.add(box_task.task_id, box_task.kind.value, r.duration)
                    if r.answer:
                        drawn.append(BBox(*r.answer[0]))
                if drawn:
                    keypoint.append(
                        _placeholder(image_id, aggregate_drawn_boxes(drawn), len(drawn))
                    )

    if strategy.box_source == BoxSource.DIRECT_BOX:
        return direct
    if strategy.box_source == BoxSource.KEYPOINT_TO_BOX:
        return keypoint
    return dedupe_merge(keypoint, direct, iou_duplicate_resolver())


def _cluster_center(points, cluster) -> tuple[float, float]:
    xs = [points[i][0] for i in cluster]
    ys = [points[i][1] for i in cluster]
    return (sum(xs) / len(xs), sum(ys) / len(ys))


def emit_corrected_dataset(
    outcome: CorrectionOutcome,
    original_gt: dict[str, list[LabeledObject]],
    pedestrian_class: str = "Pedestrian",
) -> tuple[dict[str, list[LabeledObject]], list[SoftLabeledObject]]:
    """Corrected KITTI labels plus the soft-label sidecar records.

    Accepted boxes become new pedestrian records; original records of every
    class pass through untouched (false positives are reported by evaluation,
    never deleted here).
    """
    corrected = {img: list(objs) for img, objs in original_gt.items()}
    sidecar: list[SoftLabeledObject] = []
    for box in outcome.accepted:
        corrected.setdefault(box.image_id, []).append(
            LabeledObject(
                class_name=pedestrian_class,
                truncated=0.0,
                occluded=0,
                alpha=0.0,
                bbox=box.bbox,
            )
        )
        sidecar.append(box.as_softlabeled())
    return corrected, sidecar
