#!/usr/bin/env python3
"""Compare validation strategies on a simulated box population.

For each strategy, reports the mean soft-label confidence-interval width and
the per-box annotation cost, reproducing the quality/cost trade-off between a
single question, two questions, ambiguity refinement, and duplicate pooling.

Usage: python3 scripts/compare_validation_strategies.py [--boxes 200] [--seed 0]
"""
from __future__ import annotations

import argparse

import numpy as np

from labelmend.dataset_io import SoftLabeledObject
from labelmend.geometry import BBox
from labelmend.pipeline import VALIDATION_BOX_COST, ValidationStrategy
from labelmend.softlabel import (
    aggregate_binary,
    aggregate_duplicate_group,
    merge_refinement,
    needs_refinement,
    product_soft_label,
)
from labelmend.tasks import AnnotatorResponse


def binary(rng, q, n, task="t"):
    k = int(rng.binomial(n, q))
    rs = [AnnotatorResponse(task, f"y{i}", "Yes", 1.0) for i in range(k)]
    rs += [AnnotatorResponse(task, f"n{i}", "No", 1.0) for i in range(n - k)]
    return aggregate_binary(rs)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--boxes", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    widths = {s: [] for s in ValidationStrategy}
    refined_share = 0
    for _ in range(args.boxes):
        q = float(rng.uniform(0.05, 0.95))
        widths[ValidationStrategy.IS_PEDESTRIAN_11].append(binary(rng, q, 11).width)

        human = binary(rng, q, 11, "h")
        activity = binary(rng, q, 11, "a")
        prod = product_soft_label(human, activity)
        widths[ValidationStrategy.HUMAN_ACTIVITY_22].append(prod.width)

        if needs_refinement(prod):
            refined_share += 1
            k = int(rng.binomial(11, q))
            human = merge_refinement(
                human, [AnnotatorResponse("h", f"r{i}", "Yes" if i < k else "No", 1.0)
                        for i in range(11)]
            )
            k = int(rng.binomial(11, q))
            activity = merge_refinement(
                activity, [AnnotatorResponse("a", f"r{i}", "Yes" if i < k else "No", 1.0)
                           for i in range(11)]
            )
            prod = product_soft_label(human, activity)
        widths[ValidationStrategy.HUMAN_ACTIVITY_AR].append(prod.width)

        dup = product_soft_label(binary(rng, q, 11, "h"), binary(rng, q, 11, "a"))
        group = [
            SoftLabeledObject("img", BBox(0, 0, 10, 30), prod, "g"),
            SoftLabeledObject("img", BBox(0, 0, 10, 30), dup, "g"),
        ]
        widths[ValidationStrategy.VGT_FULL].append(
            aggregate_duplicate_group(group).soft_label.width
        )

    print(f"{args.boxes} boxes, {refined_share} refined "
          f"({100 * refined_share / args.boxes:.0f}%)\n")
    print(f"{'strategy':<22}{'mean CI width':>14}{'cost/box (s)':>14}")
    for s in ValidationStrategy:
        print(f"{s.value:<22}{np.mean(widths[s]):>14.3f}{VALIDATION_BOX_COST[s]:>14.2f}")


if __name__ == "__main__":
    main()
