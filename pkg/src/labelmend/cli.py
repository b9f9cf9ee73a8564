"""Command-line entry points for the correction toolkit."""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import ToolkitConfig
from .dataset_io import (
    parse_kitti_labels,
    parse_softlabel_sidecar,
    stratified_split,
    write_kitti_labels,
    write_softlabel_sidecar,
    write_split_manifest,
)
from .evaluation import (
    EvalConfig,
    audit_sample,
    cost_error_curve,
    count_errors,
    write_curve_csv,
    write_error_counts_csv,
)
from .geometry import BBox
from .pipeline import (
    BoxSource,
    PrecollectedResponseSource,
    SimulatedResponseSource,
    Strategy,
    ValidationStrategy,
    emit_corrected_dataset,
    run_correction,
    semantic_tasks_for_box,
)
from .proposals import Prediction, ScoringMethod, propose, read_proposals, write_proposals
from .simulator import AnnotatorModel
from .tasks import AnnotatorResponse


def _load_config(path: str | None) -> ToolkitConfig:
    return ToolkitConfig.load(path) if path else ToolkitConfig()


def _read_labels_dir(labels_dir: str) -> dict:
    labels = {}
    for path in sorted(Path(labels_dir).glob("*.txt")):
        with open(path) as fh:
            labels[path.stem] = parse_kitti_labels(fh)
    return labels


@click.group()
def main():
    """Detect, review and correct label errors in object-detection datasets."""


@main.command()
@click.option("--labels-dir", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--target-class", default="Pedestrian", show_default=True)
def split(labels_dir, out, config_path, target_class):
    """Stratified train/validation split balancing the target class."""
    cfg = _load_config(config_path)
    labels = _read_labels_dir(labels_dir)
    counts = {
        image: sum(o.class_name == target_class for o in objs)
        for image, objs in labels.items()
    }
    result = stratified_split(
        counts,
        target_fraction=cfg.split.target_fraction,
        tolerance=cfg.split.tolerance,
        seed=cfg.seed,
        max_attempts=cfg.split.max_attempts,
    )
    with open(out, "w") as fh:
        write_split_manifest(result, fh)
    click.echo(
        f"train {len(result.train_images)} / val {len(result.val_images)} images, "
        f"train fraction of {target_class}: {result.pedestrian_fraction_train:.3f}"
    )


@main.command(
    epilog="The instance-wise detector-loss method is not supported: it needs "
    "two-stage detector internals that are not available from prediction files."
)
@click.option("--predictions-dir", required=True, type=click.Path(exists=True),
              help="KITTI-format prediction files (16 fields incl. score)")
@click.option("--labels-dir", required=True, type=click.Path(exists=True))
@click.option("--method", type=click.Choice([m.value for m in ScoringMethod]),
              default=ScoringMethod.OBJECTNESS.value, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--image-width", default=1242.0, show_default=True)
@click.option("--image-height", default=375.0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--target-class", default="Pedestrian", show_default=True)
def propose_cmd(predictions_dir, labels_dir, method, out, image_width, image_height,
                config_path, target_class):
    """Score candidate boxes by probability of indicating a label error."""
    cfg = _load_config(config_path)
    predictions = []
    for image, objs in _read_labels_dir(predictions_dir).items():
        for o in objs:
            if o.class_name == target_class and o.score is not None:
                predictions.append(Prediction(image_id=image, bbox=o.bbox, score=o.score))
    gt_boxes = {
        image: [o.bbox for o in objs if o.class_name == target_class]
        for image, objs in _read_labels_dir(labels_dir).items()
    }
    dims = {p.image_id: (image_width, image_height) for p in predictions}
    proposals = propose(
        ScoringMethod(method),
        predictions,
        gt_boxes=gt_boxes,
        image_dims=dims,
        min_score=cfg.proposal_min_score,
        seed=cfg.seed,
    )
    with open(out, "w") as fh:
        write_proposals(proposals, fh)
    click.echo(f"{len(proposals)} proposals -> {out}")


main.add_command(propose_cmd, name="propose")


def _strategy(cfg: ToolkitConfig, box_source: str, validation: str) -> Strategy:
    return Strategy(
        box_source=BoxSource(box_source),
        validation=ValidationStrategy(validation),
        acceptance_threshold=cfg.acceptance_threshold,
        ambiguity_band=cfg.ambiguity_band,
    )


@main.command()
@click.option("--proposals", "proposals_path", required=True, type=click.Path(exists=True))
@click.option("--log", "log_path", required=True, type=click.Path())
@click.option("--images-dir", type=click.Path(exists=True))
@click.option("--webui-dir", type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--validation", default=ValidationStrategy.VGT_FULL.value, show_default=True,
              type=click.Choice([v.value for v in ValidationStrategy]))
@click.option("--config", "config_path", type=click.Path(exists=True))
def serve(proposals_path, log_path, images_dir, webui_dir, host, port, validation, config_path):
    """Serve review microtasks to annotators over HTTP."""
    import uvicorn

    from .service import EventLog, TaskQueue, create_app

    cfg = _load_config(config_path)
    strategy = _strategy(cfg, BoxSource.DETECTOR_PROPOSALS.value, validation)
    queue = TaskQueue(EventLog(log_path), lease_seconds=cfg.lease_seconds)
    with open(proposals_path) as fh:
        proposals = read_proposals(fh)
    # review order: most likely errors first
    for proposal in sorted(proposals, key=lambda p: -p.error_probability):
        for task in semantic_tasks_for_box(strategy, proposal.image_id, proposal.bbox):
            if task.task_id not in queue.tasks:
                queue.create_task(task, priority=proposal.error_probability)
    app = create_app(queue, image_dir=images_dir, webui_dir=webui_dir)
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.option("--proposals", "proposals_path", required=True, type=click.Path(exists=True))
@click.option("--truth", "truth_path", required=True, type=click.Path(exists=True),
              help="JSON map of box key -> latent pedestrian probability")
@click.option("--out-sidecar", required=True, type=click.Path())
@click.option("--validation", default=ValidationStrategy.VGT_FULL.value, show_default=True,
              type=click.Choice([v.value for v in ValidationStrategy]))
@click.option("--accuracy", default=1.0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True))
def simulate(proposals_path, truth_path, out_sidecar, validation, accuracy, config_path):
    """Run the whole correction loop with simulated annotators."""
    cfg = _load_config(config_path)
    strategy = _strategy(cfg, BoxSource.DETECTOR_PROPOSALS.value, validation)
    with open(proposals_path) as fh:
        proposals = read_proposals(fh)
    truth = json.loads(Path(truth_path).read_text())
    model = AnnotatorModel(
        accuracy=accuracy,
        cant_solve_rate=cfg.simulator.cant_solve_rate,
        box_jitter=cfg.simulator.box_jitter,
        duration_sigma=cfg.simulator.duration_sigma,
        seed=cfg.seed,
    )
    source = SimulatedResponseSource(
        model, lambda task: truth.get(task.payload.get("box_key"), 0.0)
    )
    outcome = run_correction(
        strategy, [(p.image_id, p.bbox) for p in proposals], source
    )
    with open(out_sidecar, "w") as fh:
        write_softlabel_sidecar(
            [b.as_softlabeled() for b in outcome.accepted + outcome.rejected], fh
        )
    click.echo(
        f"accepted {len(outcome.accepted)}, rejected {len(outcome.rejected)}, "
        f"unresolved {len(outcome.unresolved)}, cost {outcome.ledger.total:.1f} s"
    )


@main.command()
@click.option("--export", "export_path", required=True, type=click.Path(exists=True),
              help="response export from the service (/api/export JSON)")
@click.option("--proposals", "proposals_path", required=True, type=click.Path(exists=True))
@click.option("--out-sidecar", required=True, type=click.Path())
@click.option("--validation", default=ValidationStrategy.VGT_FULL.value, show_default=True,
              type=click.Choice([v.value for v in ValidationStrategy]))
@click.option("--config", "config_path", type=click.Path(exists=True))
def aggregate(export_path, proposals_path, out_sidecar, validation, config_path):
    """Aggregate recorded annotator responses into soft labels."""
    cfg = _load_config(config_path)
    strategy = _strategy(cfg, BoxSource.DETECTOR_PROPOSALS.value, validation)
    data = json.loads(Path(export_path).read_text())
    responses = [
        AnnotatorResponse(
            task_id=r["task_id"],
            annotator_id=r["annotator_id"],
            answer=r["answer"],
            duration=r["duration"],
            timestamp=r.get("timestamp", 0.0),
        )
        for r in data["responses"]
    ]
    with open(proposals_path) as fh:
        proposals = read_proposals(fh)
    source = PrecollectedResponseSource(responses)
    outcome = run_correction(
        strategy, [(p.image_id, p.bbox) for p in proposals], source
    )
    with open(out_sidecar, "w") as fh:
        write_softlabel_sidecar(
            [b.as_softlabeled() for b in outcome.accepted + outcome.rejected], fh
        )
    status = "partial" if outcome.partial else "complete"
    click.echo(f"{status}: accepted {len(outcome.accepted)}, rejected {len(outcome.rejected)}")


@main.command()
@click.option("--sidecar", "sidecar_path", required=True, type=click.Path(exists=True))
@click.option("--labels-dir", required=True, type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--threshold", default=0.5, show_default=True)
def correct(sidecar_path, labels_dir, out_dir, threshold):
    """Write corrected KITTI labels: accepted soft-labeled boxes become records."""
    from .dataset_io import LabeledObject

    with open(sidecar_path) as fh:
        labeled = parse_softlabel_sidecar(fh)
    labels = _read_labels_dir(labels_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    added = 0
    for image, objs in labels.items():
        extra = [
            LabeledObject(
                class_name="Pedestrian", truncated=0.0, occluded=0, alpha=0.0, bbox=o.bbox
            )
            for o in labeled
            if o.image_id == image
            and o.soft_label.resolvable
            and o.soft_label.p_hat >= threshold
        ]
        added += len(extra)
        with open(out / f"{image}.txt", "w") as fh:
            write_kitti_labels(objs + extra, fh)
    with open(out / "softlabels.jsonl", "w") as fh:
        write_softlabel_sidecar(labeled, fh)
    click.echo(f"added {added} pedestrian records across {len(labels)} files")


@main.command()
@click.option("--sidecar", "sidecar_path", required=True, type=click.Path(exists=True))
@click.option("--labels-dir", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--target-class", default="Pedestrian", show_default=True)
def evaluate(sidecar_path, labels_dir, out, target_class):
    """Count overlooked/misfitting errors over the full threshold-height grid."""
    with open(sidecar_path) as fh:
        vgt = parse_softlabel_sidecar(fh)
    labels = _read_labels_dir(labels_dir)
    gt = {
        image: [o.bbox for o in objs if o.class_name == target_class]
        for image, objs in labels.items()
    }
    dontcare = {
        image: [o.bbox for o in objs if o.is_dontcare]
        for image, objs in labels.items()
    }
    reports = []
    for p in (0.5, 0.8):
        for h in (0.0, 25.0, 40.0):
            for dc in (False, True):
                reports.append(
                    count_errors(
                        vgt, gt,
                        EvalConfig(p_threshold=p, min_height=h, dontcare_excluded=dc),
                        dontcare,
                    )
                )
    with open(out, "w", newline="") as fh:
        write_error_counts_csv(reports, fh)
    click.echo(f"{len(reports)} grid cells -> {out}")


@main.command()
@click.option("--proposals", "proposals_path", required=True, type=click.Path(exists=True))
@click.option("--labels-dir", required=True, type=click.Path(exists=True))
@click.option("--sidecar", "sidecar_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--validation", default=ValidationStrategy.VGT_FULL.value, show_default=True,
              type=click.Choice([v.value for v in ValidationStrategy]))
@click.option("--thresholds", default="0.0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0",
              show_default=True)
@click.option("--min-height", default=25.0, show_default=True)
@click.option("--vgt-threshold", default=0.8, show_default=True)
@click.option("--target-class", default="Pedestrian", show_default=True)
def curves(proposals_path, labels_dir, sidecar_path, out, validation, thresholds,
           min_height, vgt_threshold, target_class):
    """Cost vs found-error curve for a proposal file over a threshold sweep."""
    with open(proposals_path) as fh:
        proposals = read_proposals(fh)
    with open(sidecar_path) as fh:
        validated = parse_softlabel_sidecar(fh)
    labels = _read_labels_dir(labels_dir)
    gt = {
        image: [o.bbox for o in objs if o.class_name == target_class]
        for image, objs in labels.items()
    }
    vgt = {}
    for o in validated:
        if o.soft_label.resolvable and o.soft_label.p_hat >= vgt_threshold:
            vgt.setdefault(o.image_id, []).append(o.bbox)
    scored = [
        (p.image_id, p.bbox, p.error_probability)
        for p in proposals
        if p.bbox.height >= min_height
    ]
    grid = sorted(float(t) for t in thresholds.split(","))
    strategy = Strategy(validation=ValidationStrategy(validation))
    points = cost_error_curve(scored, gt, vgt, grid, strategy=strategy)
    with open(out, "w", newline="") as fh:
        write_curve_csv(points, fh)
    click.echo(f"{len(points)} curve points -> {out}")


@main.command()
@click.option("--sidecar", "sidecar_path", required=True, type=click.Path(exists=True))
@click.option("--n-images", default=200, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--out", required=True, type=click.Path())
def audit(sidecar_path, n_images, seed, threshold, out):
    """Export a seeded random image sample with crop regions for expert review."""
    with open(sidecar_path) as fh:
        labeled = parse_softlabel_sidecar(fh)
    boxes: dict[str, list[BBox]] = {}
    for o in labeled:
        if o.soft_label.resolvable and o.soft_label.p_hat >= threshold:
            boxes.setdefault(o.image_id, []).append(o.bbox)
    images = sorted({o.image_id for o in labeled})
    n = min(n_images, len(images))
    sample = audit_sample(images, boxes, n, seed=seed)
    with open(out, "w") as fh:
        sample.to_manifest(fh)
    click.echo(f"{n} images, {len(sample.crops)} crops -> {out}")


if __name__ == "__main__":
    sys.exit(main())
