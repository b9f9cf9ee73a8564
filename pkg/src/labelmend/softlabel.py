"""Soft-label aggregation: Wilson intervals, product labels, refinement, grouping."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TYPE_CHECKING

from .tasks import CANT_SOLVE, AnnotatorResponse

if TYPE_CHECKING:
    from .dataset_io import SoftLabeledObject

Z_95 = 1.959963984540054  # 97.5% standard-normal quantile

DEFAULT_INVALID = (CANT_SOLVE,)


class AllInvalid(ValueError):
    """Every response was a can't-see/can't-solve answer."""


@dataclass
class SoftLabel:
    p_hat: float
    counts: dict[str, int] = field(default_factory=dict)
    n_valid: int = 0
    ci_low: float = 0.0
    ci_high: float = 1.0
    z: float = Z_95
    refined: bool = False
    positive_options: tuple[str, ...] = ("Yes",)
    invalid_options: tuple[str, ...] = DEFAULT_INVALID

    @property
    def resolvable(self) -> bool:
        return self.n_valid > 0

    @property
    def width(self) -> float:
        return self.ci_high - self.ci_low

    @property
    def positives(self) -> int:
        return sum(self.counts.get(o, 0) for o in self.positive_options)


def wilson_interval(k: int, n: int, z: float = Z_95) -> tuple[float, float]:
    """Wilson score interval for k successes in n trials, clipped to [0, 1]."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n")
    p = k / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = p + z2 / (2 * n)
    margin = z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n))
    low = 0.0 if k == 0 else (center - margin) / denom
    high = 1.0 if k == n else (center + margin) / denom
    return max(0.0, low), min(1.0, high)


def aggregate_binary(
    responses: Iterable[AnnotatorResponse],
    positive_options: Sequence[str] = ("Yes",),
    invalid_options: Sequence[str] = DEFAULT_INVALID,
    z: float = Z_95,
) -> SoftLabel:
    """Fold semantic answers into a soft label with a Wilson interval.

    Invalid options are excluded from the valid-response count; with no valid
    responses left the label is returned unresolvable (p_hat is NaN).
    """
    counts: dict[str, int] = {}
    for r in responses:
        counts[r.answer] = counts.get(r.answer, 0) + 1
    if not counts:
        raise ValueError("need at least one response")
    n_valid = sum(c for o, c in counts.items() if o not in invalid_options)
    if n_valid == 0:
        return SoftLabel(
            p_hat=float("nan"), counts=counts, n_valid=0, ci_low=0.0, ci_high=1.0,
            z=z, positive_options=tuple(positive_options),
            invalid_options=tuple(invalid_options),
        )
    k = sum(counts.get(o, 0) for o in positive_options)
    low, high = wilson_interval(k, n_valid, z)
    return SoftLabel(
        p_hat=k / n_valid, counts=counts, n_valid=n_valid, ci_low=low, ci_high=high,
        z=z, positive_options=tuple(positive_options),
        invalid_options=tuple(invalid_options),
    )


def product_soft_label(human: SoftLabel, activity: SoftLabel, z: float = Z_95) -> SoftLabel:
    """Product of two independent soft labels with a delta-method interval.

    p = p1 * p2; se^2 = p2^2 se1^2 + p1^2 se2^2 with binomial standard errors
    at the observed proportions.
    """
    if not (human.resolvable and activity.resolvable):
        raise AllInvalid("both factors must be resolvable")
    p1, p2 = human.p_hat, activity.p_hat
    se1_sq = p1 * (1 - p1) / human.n_valid
    se2_sq = p2 * (1 - p2) / activity.n_valid
    p = p1 * p2
    se = math.sqrt(p2 * p2 * se1_sq + p1 * p1 * se2_sq)
    # canonical per-factor buckets so duplicate groups can pool factor-wise
    counts = {f"human:{o}": c for o, c in _bucket(human).items()}
    counts.update({f"activity:{o}": c for o, c in _bucket(activity).items()})
    return SoftLabel(
        p_hat=p,
        counts=counts,
        n_valid=human.n_valid + activity.n_valid,
        ci_low=max(0.0, p - z * se),
        ci_high=min(1.0, p + z * se),
        z=z,
        refined=human.refined or activity.refined,
    )


def needs_refinement(label: SoftLabel, band: tuple[float, float] = (0.2, 0.8)) -> bool:
    """True when the label sits in the disagreement band and was not refined yet."""
    if not label.resolvable:
        raise AllInvalid("label is unresolvable")
    if label.refined:
        return False
    return band[0] <= label.p_hat <= band[1]


def merge_refinement(base: SoftLabel, extra: Iterable[AnnotatorResponse]) -> SoftLabel:
    """Pool a second batch of responses into an existing label and mark it refined."""
    pooled = dict(base.counts)
    for r in extra:
        pooled[r.answer] = pooled.get(r.answer, 0) + 1
    n_valid = sum(c for o, c in pooled.items() if o not in base.invalid_options)
    if n_valid == 0:
        return SoftLabel(
            p_hat=float("nan"), counts=pooled, n_valid=0, ci_low=0.0, ci_high=1.0,
            z=base.z, refined=True, positive_options=base.positive_options,
            invalid_options=base.invalid_options,
        )
    k = sum(pooled.get(o, 0) for o in base.positive_options)
    low, high = wilson_interval(k, n_valid, base.z)
    return SoftLabel(
        p_hat=k / n_valid, counts=pooled, n_valid=n_valid, ci_low=low, ci_high=high,
        z=base.z, refined=True, positive_options=base.positive_options,
        invalid_options=base.invalid_options,
    )


def _label_from_counts(
    counts: dict[str, int],
    positive_options: tuple[str, ...],
    invalid_options: tuple[str, ...],
    z: float,
    refined: bool,
) -> SoftLabel:
    n_valid = sum(c for o, c in counts.items() if o not in invalid_options)
    if n_valid == 0:
        return SoftLabel(
            p_hat=float("nan"), counts=counts, n_valid=0, ci_low=0.0, ci_high=1.0,
            z=z, refined=refined, positive_options=positive_options,
            invalid_options=invalid_options,
        )
    k = sum(counts.get(o, 0) for o in positive_options)
    low, high = wilson_interval(k, n_valid, z)
    return SoftLabel(
        p_hat=k / n_valid, counts=counts, n_valid=n_valid, ci_low=low, ci_high=high,
        z=z, refined=refined, positive_options=positive_options,
        invalid_options=invalid_options,
    )


def _bucket(label: SoftLabel) -> dict[str, int]:
    out = {"positive": 0, "negative": 0, "invalid": 0}
    for option, count in label.counts.items():
        if option in label.invalid_options:
            out["invalid"] += count
        elif option in label.positive_options:
            out["positive"] += count
        else:
            out["negative"] += count
    return {k: v for k, v in out.items() if v}


def _product_from_pooled(
    pooled: dict[str, int], z: float, refined: bool, invalid: tuple[str, ...]
) -> SoftLabel:
    human = {o[len("human:"):]: c for o, c in pooled.items() if o.startswith("human:")}
    activity = {o[len("activity:"):]: c for o, c in pooled.items() if o.startswith("activity:")}
    h = _label_from_counts(human, ("positive",), ("invalid",), z, refined)
    a = _label_from_counts(activity, ("positive",), ("invalid",), z, refined)
    if not (h.resolvable and a.resolvable):
        return SoftLabel(
            p_hat=float("nan"), counts=pooled, n_valid=0, ci_low=0.0, ci_high=1.0,
            z=z, refined=refined,
        )
    label = product_soft_label(h, a, z)
    label.refined = refined
    return label


def aggregate_duplicate_group(members: Sequence["SoftLabeledObject"]) -> "SoftLabeledObject":
    """Pool responses across duplicate boxes describing the same object.

    The representative box is the member aggregated from the most annotator
    boxes; ties break by larger area. Counts and task provenance are pooled.
    """
    if not members:
        raise ValueError("empty duplicate group")
    if len({m.group_id for m in members}) != 1:
        raise ValueError("members must share a group_id")
    if len(members) == 1:
        return members[0]
    rep = max(members, key=lambda m: (m.box_support, m.bbox.area))
    pooled: dict[str, int] = {}
    tasks: list[str] = []
    refined = False
    z = members[0].soft_label.z
    pos = members[0].soft_label.positive_options
    inv = members[0].soft_label.invalid_options
    for m in members:
        for o, c in m.soft_label.counts.items():
            pooled[o] = pooled.get(o, 0) + c
        tasks.extend(m.tasks)
        refined = refined or m.soft_label.refined
    if any(o.startswith(("human:", "activity:")) for o in pooled):
        # product labels: pool each factor's counts, then re-multiply
        label = _product_from_pooled(pooled, z, refined, inv)
    else:
        label = _label_from_counts(pooled, pos, inv, z, refined)
    merged = type(rep)(
        image_id=rep.image_id,
        bbox=rep.bbox,
        soft_label=label,
        group_id=rep.group_id,
        tasks=tasks,
        box_support=sum(m.box_support for m in members),
    )
    return merged
