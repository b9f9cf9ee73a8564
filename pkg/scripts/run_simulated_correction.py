#!/usr/bin/env python3
"""End-to-end demo: plant label errors in a synthetic dataset, detect them via
proposal scoring, review them with simulated annotators, and evaluate.

Writes all artifacts (labels, proposals, sidecar, corrected labels, CSVs)
under an output directory.

Usage: python3 scripts/run_simulated_correction.py [--out-dir out] [--seed 0]
"""
from __future__ import annotations

import argparse
import json
import random
from pathlib import Path

from labelmend.dataset_io import parse_kitti_labels, write_softlabel_sidecar
from labelmend.evaluation import (
    EvalConfig,
    cost_error_curve,
    count_errors,
    write_curve_csv,
    write_error_counts_csv,
)
from labelmend.geometry import BBox
from labelmend.pipeline import (
    SimulatedResponseSource,
    Strategy,
    ValidationStrategy,
    box_key,
    emit_corrected_dataset,
    run_correction,
)
from labelmend.proposals import Prediction, ScoringMethod, propose, write_proposals
from labelmend.simulator import AnnotatorModel
from labelmend.tasks import MicrotaskKind


def build_dataset(out: Path, seed: int, n_images: int = 40):
    """Synthetic scene set: labeled pedestrians, planted overlooked pedestrians,
    and detector predictions covering both plus some false alarms."""
    rng = random.Random(seed)
    labels_dir = out / "labels"
    labels_dir.mkdir(parents=True, exist_ok=True)
    truth = {}          # box key -> is the proposal a real pedestrian
    predictions = []
    n_planted = 0
    for i in range(n_images):
        image = f"{i:06d}"
        lines = []
        for _ in range(rng.randint(1, 3)):
            l = rng.uniform(0, 1100)
            t = rng.uniform(40, 150)
            h = rng.uniform(40, 120)
            box = BBox(l, t, l + 0.4 * h, t + h)
            lines.append(_kitti("Pedestrian", box))
            # the detector also finds labeled pedestrians (slightly shifted)
            shifted = BBox(box.left + 1, box.top, box.right + 1, box.bottom)
            predictions.append(Prediction(image, shifted, rng.uniform(0.6, 1.0)))
        if rng.random() < 0.5:  # planted overlooked pedestrian: not in the labels
            l = rng.uniform(0, 1100)
            t = rng.uniform(40, 150)
            h = rng.uniform(40, 120)
            box = BBox(l, t, l + 0.4 * h, t + h)
            predictions.append(Prediction(image, box, rng.uniform(0.6, 1.0)))
            truth[box_key(image, box)] = True
            n_planted += 1
        if rng.random() < 0.3:  # detector false alarm
            l = rng.uniform(0, 1100)
            box = BBox(l, 60, l + 30, 140)
            predictions.append(Prediction(image, box, rng.uniform(0.3, 0.7)))
        (labels_dir / f"{image}.txt").write_text("\n".join(lines) + "\n")
    return labels_dir, predictions, truth, n_planted


def _kitti(cls: str, box: BBox) -> str:
    return (f"{cls} 0.0 0 0.0 {box.left:.2f} {box.top:.2f} {box.right:.2f} "
            f"{box.bottom:.2f} 1.8 0.5 1.0 1.0 1.5 8.0 0.0")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="out/simulated_correction")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--accuracy", type=float, default=0.95)
    args = ap.parse_args()

    out = Path(args.out_dir)
    labels_dir, predictions, truth, n_planted = build_dataset(out, args.seed)
    labels = {
        p.stem: parse_kitti_labels(p.open()) for p in sorted(labels_dir.glob("*.txt"))
    }
    gt = {img: [o.bbox for o in objs if o.class_name == "Pedestrian"]
          for img, objs in labels.items()}

    proposals = propose(ScoringMethod.OBJECTLAB_OVERLOOKED, predictions, gt_boxes=gt)
    proposals = [p for p in proposals if p.error_probability > 0.3]
    with open(out / "proposals.jsonl", "w") as fh:
        write_proposals(proposals, fh)
    print(f"{len(proposals)} proposals ({n_planted} planted errors)")

    def truth_for(task):
        is_ped = truth.get(task.payload.get("box_key"), False)
        if task.kind == MicrotaskKind.ACTIVITY:
            return "Walking/Running/Standing" if is_ped else "Sitting/Lying down"
        return "Yes" if is_ped else "No"

    strategy = Strategy(validation=ValidationStrategy.HUMAN_ACTIVITY_AR)
    source = SimulatedResponseSource(
        AnnotatorModel(accuracy=args.accuracy, seed=args.seed), truth_for
    )
    outcome = run_correction(
        strategy, [(p.image_id, p.bbox) for p in proposals], source
    )
    print(f"accepted {len(outcome.accepted)}, rejected {len(outcome.rejected)}, "
          f"unresolved {len(outcome.unresolved)}")
    print(f"annotation cost: {outcome.ledger.total:.0f} s "
          f"({outcome.ledger.total / 3600:.2f} h)")

    corrected, sidecar = emit_corrected_dataset(outcome, labels)
    corrected_dir = out / "corrected"
    corrected_dir.mkdir(exist_ok=True)
    from labelmend.dataset_io import write_kitti_labels

    for img, objs in corrected.items():
        with open(corrected_dir / f"{img}.txt", "w") as fh:
            write_kitti_labels(objs, fh)
    with open(out / "softlabels.jsonl", "w") as fh:
        write_softlabel_sidecar(sidecar, fh)

    report = count_errors(
        sidecar, gt, EvalConfig(min_height=0.0, dontcare_excluded=False)
    )
    print(f"new FNs found: {report.fn_total} "
          f"(overlooked {report.overlooked}, misfitting {report.misfitting}); "
          f"FNR {report.fnr * 100:.1f}%")

    vgt = {}
    for s in sidecar:
        vgt.setdefault(s.image_id, []).append(s.bbox)
    scored = [(p.image_id, p.bbox, p.error_probability) for p in proposals]
    points = cost_error_curve(
        scored, gt, vgt, [i / 10 for i in range(11)], strategy
    )
    with open(out / "cost_error_curve.csv", "w", newline="") as fh:
        write_curve_csv(points, fh)
    with open(out / "error_counts.csv", "w", newline="") as fh:
        write_error_counts_csv([report], fh)
    print(f"artifacts in {out}/")


if __name__ == "__main__":
    main()
