"""Toolkit for detecting and correcting label errors in object-detection datasets."""

from .geometry import BBox, ErrorKind, MatchResult, classify_errors, filter_boxes, greedy_match, iou, nms
from .softlabel import SoftLabel, aggregate_binary, product_soft_label, wilson_interval

__all__ = [
    "BBox",
    "ErrorKind",
    "MatchResult",
    "SoftLabel",
    "aggregate_binary",
    "classify_errors",
    "filter_boxes",
    "greedy_match",
    "iou",
    "nms",
    "product_soft_label",
    "wilson_interval",
]
