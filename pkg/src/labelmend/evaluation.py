"""Error counting, FN-rate arithmetic, cost-error curves, and audit sampling."""
from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass, field
from typing import IO, Sequence

from .dataset_io import SoftLabeledObject
from .geometry import BBox, ErrorKind, classify_errors, filter_boxes, greedy_match
from .pipeline import VALIDATION_BOX_COST, STAGE1_BOX_COST, Strategy


@dataclass(frozen=True)
class EvalConfig:
    p_threshold: float = 0.5
    min_height: float = 25.0
    dontcare_excluded: bool = True
    gt_iou: float = 0.5  # agreement threshold against original annotations
    vgt_iou: float = 0.1  # approximate-match threshold against validated boxes
    dontcare_iou: float = 0.5


@dataclass
class ErrorCountReport:
    config: EvalConfig
    overlooked: int
    misfitting: int
    original_gt_count: int

    @property
    def fn_total(self) -> int:
        return self.overlooked + self.misfitting

    @property
    def fnr(self) -> float:
        return fnr(self.fn_total, self.original_gt_count)


@dataclass
class CurvePoint:
    threshold: float
    cost_seconds: float
    found_fn: int
    introduced_errors: int | None = None


def fnr(fn_total: int, original_count: int) -> float:
    """False negative rate: FNs / (FNs + original annotations)."""
    if original_count <= 0:
        raise ValueError("original_count must be positive")
    return fn_total / (fn_total + original_count)


def _filter_vgt(
    vgt: Sequence[SoftLabeledObject],
    config: EvalConfig,
    dontcare: dict[str, list[BBox]],
) -> list[SoftLabeledObject]:
    selected = [
        v for v in vgt
        if v.soft_label.resolvable and v.soft_label.p_hat >= config.p_threshold
    ]
    out = []
    by_image: dict[str, list[SoftLabeledObject]] = {}
    for v in selected:
        by_image.setdefault(v.image_id, []).append(v)
    for image_id, members in by_image.items():
        dc = dontcare.get(image_id, []) if config.dontcare_excluded else []
        kept = filter_boxes(
            [m.bbox for m in members],
            min_height=config.min_height,
            dontcare=dc,
            dontcare_iou=config.dontcare_iou,
        )
        out.extend(members[i] for i in kept)
    return out


def count_errors(
    vgt: Sequence[SoftLabeledObject],
    gt: dict[str, list[BBox]],
    config: EvalConfig,
    dontcare: dict[str, list[BBox]] | None = None,
) -> ErrorCountReport:
    """Overlooked / misfitting counts of validated boxes against the original GT."""
    dontcare = dontcare or {}
    selected = _filter_vgt(vgt, config, dontcare)
    overlooked = misfitting = 0
    by_image: dict[str, list[SoftLabeledObject]] = {}
    for v in selected:
        by_image.setdefault(v.image_id, []).append(v)
    for image_id, members in by_image.items():
        kinds = classify_errors(
            [m.bbox for m in members], gt.get(image_id, []), config.gt_iou
        )
        overlooked += sum(k is ErrorKind.OVERLOOKED for k in kinds)
        misfitting += sum(k is ErrorKind.MISFITTING for k in kinds)
    original = sum(len(b) for b in gt.values())
    return ErrorCountReport(
        config=config,
        overlooked=overlooked,
        misfitting=misfitting,
        original_gt_count=original,
    )


def found_label_errors(
    boxes: Sequence[tuple[str, BBox]],
    gt: dict[str, list[BBox]],
    vgt: dict[str, list[BBox]],
    config: EvalConfig = EvalConfig(),
) -> int:
    """Boxes with no original-GT match but an (approximate) validated match.

    Matching is greedy one-to-one: strict IoU against the original GT,
    loose IoU against the validated set.
    """
    by_image: dict[str, list[BBox]] = {}
    for image_id, box in boxes:
        by_image.setdefault(image_id, []).append(box)
    found = 0
    for image_id, members in by_image.items():
        gt_match = greedy_match(members, gt.get(image_id, []), config.gt_iou)
        unmatched = set(gt_match.unmatched_a)
        if not unmatched:
            continue
        candidates = sorted(unmatched)
        vgt_match = greedy_match(
            [members[i] for i in candidates], vgt.get(image_id, []), config.vgt_iou
        )
        found += len(vgt_match.pairs)
    return found


def introduced_errors(
    decisions: dict[str, bool],
    vgt_decisions: dict[str, bool],
) -> int:
    """Boxes whose accept/reject decision disagrees with the validated decision.

    Both sides are keyed by a shared box identifier and thresholded upstream.
    """
    return sum(
        1
        for key, accepted in decisions.items()
        if key in vgt_decisions and accepted != vgt_decisions[key]
    )


def decisions_at_threshold(
    labeled: Sequence[SoftLabeledObject], threshold: float
) -> dict[str, bool]:
    return {
        obj.group_id: obj.soft_label.resolvable and obj.soft_label.p_hat >= threshold
        for obj in labeled
    }


def cost_error_curve(
    scored_boxes: Sequence[tuple[str, BBox, float]],
    gt: dict[str, list[BBox]],
    vgt: dict[str, list[BBox]],
    thresholds: Sequence[float],
    strategy: Strategy = Strategy(),
    config: EvalConfig = EvalConfig(),
    introduced: dict[float, int] | None = None,
) -> list[CurvePoint]:
    """Sweep a score threshold and report (cost, found errors) per point.

    Cost per reviewed box is the per-box validation rate of the strategy plus
    its stage-1 box cost for human box sources.
    """
    per_box = VALIDATION_BOX_COST[strategy.validation]
    if strategy.charge_stage1_costs:
        per_box += STAGE1_BOX_COST[strategy.box_source]
    points = []
    for t in thresholds:
        above = [(img, box) for img, box, score in scored_boxes if score >= t]
        found = found_label_errors(above, gt, vgt, config) if above else 0
        points.append(
            CurvePoint(
                threshold=t,
                cost_seconds=per_box * len(above),
                found_fn=found,
                introduced_errors=introduced.get(t) if introduced else None,
            )
        )
    return points


def write_curve_csv(points: Sequence[CurvePoint], stream: IO[str]) -> None:
    writer = csv.writer(stream)
    writer.writerow(["threshold", "cost_seconds", "found_fn", "introduced_errors"])
    for p in points:
        writer.writerow(
            [p.threshold, p.cost_seconds, p.found_fn,
             "" if p.introduced_errors is None else p.introduced_errors]
        )


def write_error_counts_csv(reports: Sequence[ErrorCountReport], stream: IO[str]) -> None:
    writer = csv.writer(stream)
    writer.writerow(
        ["p_threshold", "min_height", "dontcare_excluded",
         "overlooked", "misfitting", "fn_total", "fnr"]
    )
    for r in reports:
        writer.writerow(
            [r.config.p_threshold, r.config.min_height, r.config.dontcare_excluded,
             r.overlooked, r.misfitting, r.fn_total, f"{r.fnr:.6f}"]
        )


@dataclass
class AuditSample:
    seed: int
    image_ids: list[str]
    crops: list[dict] = field(default_factory=list)

    def to_manifest(self, stream: IO[str]) -> None:
        json.dump(
            {"seed": self.seed, "images": self.image_ids, "crops": self.crops},
            stream,
            indent=2,
        )
        stream.write("\n")


def audit_sample(
    image_ids: Sequence[str],
    boxes: dict[str, list[BBox]],
    n_images: int,
    seed: int = 0,
    context_margin: float = 0.5,
) -> AuditSample:
    """Seeded uniform sample of images with per-box crop regions for review."""
    if n_images > len(image_ids):
        raise ValueError("sample larger than image count")
    rng = random.Random(seed)
    sample = sorted(rng.sample(list(image_ids), n_images))
    crops = []
    for image_id in sample:
        for box in boxes.get(image_id, []):
            mx = context_margin * box.width
            my = context_margin * box.height
            crops.append(
                {
                    "image_id": image_id,
                    "bbox": box.as_list(),
                    "crop": [box.left - mx, box.top - my, box.right + mx, box.bottom + my],
                }
            )
    return AuditSample(seed=seed, image_ids=sample, crops=crops)


def audit_rate(k: int, n: int) -> float:
    """Reviewer-verdict ratio, e.g. missed pedestrians over reviewed boxes."""
    if n <= 0:
        raise ValueError("n must be positive")
    if not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n")
    return k / n
