"""Ranking candidate boxes by probability of indicating a label error."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Sequence

import numpy as np
from sklearn.ensemble import GradientBoostingClassifier
from sklearn.linear_model import LogisticRegression
from sklearn.model_selection import StratifiedKFold

from .geometry import BBox, greedy_match, iou


class ScoringMethod(Enum):
    OBJECTNESS = "objectness"
    OBJECTLAB_OVERLOOKED = "objectlab_overlooked"
    OBJECTLAB_BADLOC = "objectlab_badloc"
    METADETECT = "metadetect"


class ProposalTarget(Enum):
    PREDICTION_BOX = "prediction"
    ORIGINAL_GT_BOX = "original_gt"


class UnknownMethod(ValueError):
    pass


class DegenerateFold(RuntimeError):
    pass


@dataclass
class Proposal:
    image_id: str
    bbox: BBox
    detector_score: float
    error_probability: float
    method: ScoringMethod
    target: ProposalTarget = ProposalTarget.PREDICTION_BOX

    def __post_init__(self):
        if not (0.0 <= self.error_probability <= 1.0):
            raise ValueError(f"error_probability out of range: {self.error_probability}")


@dataclass
class Prediction:
    image_id: str
    bbox: BBox
    score: float


META_FEATURE_NAMES = (
    "detector_score",
    "width",
    "height",
    "area",
    "aspect_ratio",
    "n_overlapping",
    "max_neighbor_iou",
    "mean_neighbor_iou",
    "min_neighbor_iou",
    "center_x_rel",
    "center_y_rel",
)


@dataclass
class MetaModel:
    learner: str  # "gbdt" or "logreg"
    models: list = field(default_factory=list)
    fold_assignment: np.ndarray | None = None
    feature_mean: np.ndarray | None = None
    feature_std: np.ndarray | None = None
    iou_threshold: float = 0.5


def rank_by_objectness(predictions: Sequence[Prediction]) -> list[Proposal]:
    """Baseline: the detector score itself is the error probability."""
    order = sorted(range(len(predictions)), key=lambda i: (-predictions[i].score, i))
    return [
        Proposal(
            image_id=predictions[i].image_id,
            bbox=predictions[i].bbox,
            detector_score=predictions[i].score,
            error_probability=predictions[i].score,
            method=ScoringMethod.OBJECTNESS,
        )
        for i in order
    ]


def objectlab_scores(
    predictions: Sequence[Prediction],
    gt_boxes: dict[str, list[BBox]],
) -> list[Proposal]:
    """Overlooked scores on predictions and poor-location scores on GT boxes.

    overlooked(pred) = confidence * (1 - max IoU against GT in its image);
    badloc(gt) = 1 - max over predictions of IoU * confidence. Both are error
    probabilities directly (higher = more likely a label error).
    """
    proposals: list[Proposal] = []
    preds_by_image: dict[str, list[Prediction]] = {}
    for p in predictions:
        preds_by_image.setdefault(p.image_id, []).append(p)

    for p in predictions:
        boxes = gt_boxes.get(p.image_id, [])
        best = max((iou(p.bbox, g) for g in boxes), default=0.0)
        proposals.append(
            Proposal(
                image_id=p.image_id,
                bbox=p.bbox,
                detector_score=p.score,
                error_probability=p.score * (1.0 - best),
                method=ScoringMethod.OBJECTLAB_OVERLOOKED,
            )
        )
    for image_id, boxes in gt_boxes.items():
        preds = preds_by_image.get(image_id, [])
        for g in boxes:
            best = max((iou(p.bbox, g) * p.score for p in preds), default=0.0)
            proposals.append(
                Proposal(
                    image_id=image_id,
                    bbox=g,
                    detector_score=0.0,
                    error_probability=1.0 - best,
                    method=ScoringMethod.OBJECTLAB_BADLOC,
                    target=ProposalTarget.ORIGINAL_GT_BOX,
                )
            )
    return proposals


def extract_meta_features(
    predictions: Sequence[Prediction],
    pre_nms: Sequence[Prediction],
    image_dims: dict[str, tuple[float, float]],
) -> np.ndarray:
    """Per-prediction feature vectors built from the pre-NMS neighborhood."""
    rows = []
    pre_by_image: dict[str, list[Prediction]] = {}
    for p in pre_nms:
        pre_by_image.setdefault(p.image_id, []).append(p)
    for p in predictions:
        w, h = image_dims[p.image_id]
        if w <= 0 or h <= 0:
            raise ValueError("image dims must be positive")
        neighbors = [
            q for q in pre_by_image.get(p.image_id, [])
            if q is not p and iou(p.bbox, q.bbox) > 0.0
        ]
        ious = [iou(p.bbox, q.bbox) for q in neighbors]
        cx, cy = p.bbox.center
        rows.append(
            [
                p.score,
                p.bbox.width,
                p.bbox.height,
                p.bbox.area,
                p.bbox.width / p.bbox.height,
                float(len(neighbors)),
                max(ious, default=0.0),
                float(np.mean(ious)) if ious else 0.0,
                min(ious, default=0.0),
                cx / w,
                cy / h,
            ]
        )
    out = np.asarray(rows, dtype=float).reshape(len(predictions), len(META_FEATURE_NAMES))
    if not np.all(np.isfinite(out)):
        raise ValueError("non-finite meta feature")
    return out


def binarize_tp_fp(
    predictions: Sequence[Prediction],
    gt_boxes: dict[str, list[BBox]],
    iou_threshold: float = 0.5,
) -> np.ndarray:
    """1 where the prediction greedily matches a GT box in its image, else 0."""
    labels = np.zeros(len(predictions), dtype=int)
    by_image: dict[str, list[int]] = {}
    for i, p in enumerate(predictions):
        by_image.setdefault(p.image_id, []).append(i)
    for image_id, idxs in by_image.items():
        boxes = gt_boxes.get(image_id, [])
        match = greedy_match([predictions[i].bbox for i in idxs], boxes, iou_threshold)
        for local, _, _ in match.pairs:
            labels[idxs[local]] = 1
    return labels


def _make_learner(kind: str, seed: int):
    if kind == "gbdt":
        return GradientBoostingClassifier(
            max_depth=3, n_estimators=200, learning_rate=0.1, random_state=seed
        )
    if kind == "logreg":
        return LogisticRegression(max_iter=1000, random_state=seed)
    raise ValueError(f"unknown learner {kind!r}")


def train_meta_cv(
    features: np.ndarray,
    labels: np.ndarray,
    folds: int = 5,
    learner: str = "gbdt",
    iou_threshold: float = 0.5,
    seed: int = 0,
) -> tuple[MetaModel, np.ndarray]:
    """Cross-validated meta classification of predictions into TP/FP.

    Returns the trained per-fold models and the out-of-fold probability of
    each prediction indicating a label error (1 - P(correct)).
    """
    labels = np.asarray(labels, dtype=int)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos < folds or n_neg < folds:
        raise DegenerateFold(
            f"need at least {folds} examples of each class, got {n_pos} TP / {n_neg} FP"
        )
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std[std == 0.0] = 1.0
    scaled = (features - mean) / std

    # stratified folds avoid single-class training sets on imbalanced data
    skf = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    oof = np.zeros(len(labels), dtype=float)
    assignment = np.zeros(len(labels), dtype=int)
    models = []
    for fold, (train_idx, test_idx) in enumerate(skf.split(scaled, labels)):
        clf = _make_learner(learner, seed)
        clf.fit(scaled[train_idx], labels[train_idx])
        oof[test_idx] = clf.predict_proba(scaled[test_idx])[:, 1]
        assignment[test_idx] = fold
        models.append(clf)
    model = MetaModel(
        learner=learner,
        models=models,
        fold_assignment=assignment,
        feature_mean=mean,
        feature_std=std,
        iou_threshold=iou_threshold,
    )
    return model, 1.0 - oof


def propose(
    method: ScoringMethod,
    predictions: Sequence[Prediction],
    gt_boxes: dict[str, list[BBox]] | None = None,
    pre_nms: Sequence[Prediction] | None = None,
    image_dims: dict[str, tuple[float, float]] | None = None,
    min_score: float = 0.01,
    seed: int = 0,
) -> list[Proposal]:
    """Unified entry point: ordered proposals for the correction pipeline.

    Detector predictions below ``min_score`` are dropped before scoring.
    """
    predictions = [p for p in predictions if p.score >= min_score]
    if method == ScoringMethod.OBJECTNESS:
        proposals = rank_by_objectness(predictions)
    elif method in (ScoringMethod.OBJECTLAB_OVERLOOKED, ScoringMethod.OBJECTLAB_BADLOC):
        if gt_boxes is None:
            raise ValueError("objectlab scoring needs GT boxes")
        proposals = objectlab_scores(predictions, gt_boxes)
    elif method == ScoringMethod.METADETECT:
        if gt_boxes is None or image_dims is None:
            raise ValueError("metadetect scoring needs GT boxes and image dims")
        feats = extract_meta_features(predictions, pre_nms or predictions, image_dims)
        labels = binarize_tp_fp(predictions, gt_boxes)
        _, error_probs = train_meta_cv(feats, labels, seed=seed)
        proposals = [
            Proposal(
                image_id=p.image_id,
                bbox=p.bbox,
                detector_score=p.score,
                error_probability=float(q),
                method=ScoringMethod.METADETECT,
            )
            for p, q in zip(predictions, error_probs)
        ]
    else:
        raise UnknownMethod(str(method))
    proposals.sort(key=lambda pr: -pr.error_probability)
    return proposals


def write_proposals(proposals: Sequence[Proposal], stream: IO[str]) -> None:
    for p in proposals:
        stream.write(
            json.dumps(
                {
                    "image_id": p.image_id,
                    "bbox": p.bbox.as_list(),
                    "method": p.method.value,
                    "target": p.target.value,
                    "detector_score": p.detector_score,
                    "error_probability": p.error_probability,
                }
            )
            + "\n"
        )


def read_proposals(stream: IO[str]) -> list[Proposal]:
    out = []
    for line in stream:
        if not line.strip():
            continue
        rec = json.loads(line)
        out.append(
            Proposal(
                image_id=rec["image_id"],
                bbox=BBox(*rec["bbox"]),
                detector_score=rec["detector_score"],
                error_probability=rec["error_probability"],
                method=ScoringMethod(rec["method"]),
                target=ProposalTarget(rec["target"]),
            )
        )
    return out
