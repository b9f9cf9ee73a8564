import math

import pytest

from labelmend.geometry import BBox, iou
from labelmend.pipeline import (
    BoxSource,
    CostLedger,
    PrecollectedResponseSource,
    SimulatedResponseSource,
    SourceExhausted,
    STAGE1_BOX_COST,
    Strategy,
    VALIDATION_BOX_COST,
    ValidationStrategy,
    aggregate_drawn_boxes,
    box_key,
    cluster_keypoints,
    collect_boxes_stage1,
    dedupe_merge,
    emit_corrected_dataset,
    generate_microtasks,
    iou_duplicate_resolver,
    run_correction,
    semantic_tasks_for_box,
    validate_box,
)
from labelmend.dataset_io import LabeledObject, SoftLabeledObject
from labelmend.simulator import AnnotatorModel, stage1_truth_lookup
from labelmend.softlabel import SoftLabel
from labelmend.tasks import AnnotatorResponse, MicrotaskKind


def perfect_source(truths):
    """Simulated annotators that always answer the latent truth."""
    return SimulatedResponseSource(AnnotatorModel(accuracy=1.0, seed=0), truths)


def semantic_truths(positive_keys):
    """Latent truth by box key: positives are walking pedestrians."""

    def truth_for(task):
        key = task.payload.get("box_key")
        if task.kind == MicrotaskKind.ACTIVITY:
            return "Walking/Running/Standing" if key in positive_keys else "Sitting/Lying down"
        return "Yes" if key in positive_keys else "No"

    return truth_for


class TestCostTables:
    def test_stage1_costs(self):
        assert STAGE1_BOX_COST[BoxSource.DIRECT_BOX] == 44.11
        assert STAGE1_BOX_COST[BoxSource.KEYPOINT_TO_BOX] == 92.671
        assert STAGE1_BOX_COST[BoxSource.COMBINED] == 103.79
        assert STAGE1_BOX_COST[BoxSource.DETECTOR_PROPOSALS] == 0.0

    def test_validation_costs(self):
        assert VALIDATION_BOX_COST[ValidationStrategy.IS_PEDESTRIAN_11] == 37.87
        assert VALIDATION_BOX_COST[ValidationStrategy.HUMAN_ACTIVITY_22] == 57.03
        assert VALIDATION_BOX_COST[ValidationStrategy.HUMAN_ACTIVITY_AR] == 77.85
        assert VALIDATION_BOX_COST[ValidationStrategy.VGT_FULL] == 124.75

    def test_ledger_totals(self):
        ledger = CostLedger()
        ledger.add("a", "is_human", 2.0)
        ledger.add("b", "is_human", 3.0)
        ledger.add("c", "activity", 4.0)
        assert ledger.total == pytest.approx(9.0)
        assert ledger.total_by_kind() == {"is_human": 5.0, "activity": 4.0}


class TestTaskGeneration:
    def test_single_question_strategy(self):
        strategy = Strategy(validation=ValidationStrategy.IS_PEDESTRIAN_11)
        tasks = semantic_tasks_for_box(strategy, "img", BBox(0, 0, 10, 30))
        assert [t.kind for t in tasks] == [MicrotaskKind.IS_PEDESTRIAN]
        assert tasks[0].n_annotators == 11
        assert tasks[0].payload["box_key"] == box_key("img", BBox(0, 0, 10, 30))

    def test_two_question_strategy(self):
        strategy = Strategy(validation=ValidationStrategy.HUMAN_ACTIVITY_22)
        tasks = semantic_tasks_for_box(strategy, "img", BBox(0, 0, 10, 30))
        assert [t.kind for t in tasks] == [MicrotaskKind.IS_HUMAN, MicrotaskKind.ACTIVITY]

    def test_task_ids_unique_per_box(self):
        strategy = Strategy()
        tasks = generate_microtasks(
            strategy,
            boxes=[("img", BBox(0, 0, 10, 30)), ("img", BBox(20, 0, 30, 30))],
        )
        ids = [t.task_id for t in tasks]
        assert len(ids) == len(set(ids)) == 4

    def test_stage1_tasks_per_image(self):
        strategy = Strategy(box_source=BoxSource.COMBINED)
        tasks = generate_microtasks(strategy, images=["a", "b"])
        kinds = sorted(t.kind.value for t in tasks)
        assert kinds == ["direct_box", "direct_box", "keypoint", "keypoint"]

    def test_detector_proposals_have_no_stage1_tasks(self):
        tasks = generate_microtasks(Strategy(), images=["a"])
        assert tasks == []


class TestValidateBox:
    def test_true_pedestrian_accepted_probability_one(self):
        box = BBox(0, 0, 10, 30)
        key = box_key("img", box)
        strategy = Strategy(validation=ValidationStrategy.HUMAN_ACTIVITY_22)
        ledger = CostLedger()
        label, tasks = validate_box(strategy, "img", box, perfect_source(semantic_truths({key})), ledger)
        assert label.p_hat == 1.0
        assert len(tasks) == 2
        assert len(ledger.entries) == 22

    def test_non_pedestrian_probability_zero(self):
        box = BBox(0, 0, 10, 30)
        strategy = Strategy(validation=ValidationStrategy.HUMAN_ACTIVITY_22)
        label, _ = validate_box(strategy, "img", box, perfect_source(semantic_truths(set())), CostLedger())
        assert label.p_hat == 0.0

    def test_refinement_triggered_in_band(self):
        # latent probability 0.7 per question puts the product mid-band; AR
        # adds 11 more responses per question for refinement-enabled strategies
        box = BBox(0, 0, 10, 30)
        strategy = Strategy(validation=ValidationStrategy.HUMAN_ACTIVITY_AR)
        source = SimulatedResponseSource(AnnotatorModel(accuracy=1.0, seed=3), lambda task: 0.7)
        ledger = CostLedger()
        label, tasks = validate_box(strategy, "img", box, source, ledger)
        assert label.refined
        assert any(t.endswith("-ar") for t in tasks)
        assert len(ledger.entries) == 44

    def test_no_refinement_for_22_strategy(self):
        box = BBox(0, 0, 10, 30)
        strategy = Strategy(validation=ValidationStrategy.HUMAN_ACTIVITY_22)
        source = SimulatedResponseSource(AnnotatorModel(accuracy=1.0, seed=3), lambda task: 0.5)
        ledger = CostLedger()
        label, _ = validate_box(strategy, "img", box, source, ledger)
        assert not label.refined
        assert len(ledger.entries) == 22

    def test_single_question_strategy_counts(self):
        box = BBox(0, 0, 10, 30)
        strategy = Strategy(validation=ValidationStrategy.IS_PEDESTRIAN_11)
        ledger = CostLedger()
        label, tasks = validate_box(
            strategy, "img", box, perfect_source(semantic_truths({box_key("img", box)})), ledger
        )
        assert label.p_hat == 1.0
        assert len(tasks) == 1
        assert len(ledger.entries) == 11


class TestRunCorrection:
    def test_partitions_accept_reject(self):
        good = BBox(0, 0, 10, 30)
        bad = BBox(20, 0, 30, 30)
        key = box_key("img", good)
        strategy = Strategy(validation=ValidationStrategy.HUMAN_ACTIVITY_22)
        outcome = run_correction(
            strategy, [("img", good), ("img", bad)], perfect_source(semantic_truths({key}))
        )
        assert [b.bbox for b in outcome.accepted] == [good]
        assert [b.bbox for b in outcome.rejected] == [bad]
        assert not outcome.partial

    def test_ledger_is_sum_of_durations(self):
        strategy = Strategy(validation=ValidationStrategy.IS_PEDESTRIAN_11)
        model = AnnotatorModel(accuracy=1.0, seed=1)
        source = SimulatedResponseSource(model, semantic_truths(set()))
        boxes = [("img", BBox(i * 20, 0, i * 20 + 10, 30)) for i in range(5)]
        outcome = run_correction(strategy, boxes, source)
        expected = sum(
            model.answer(task, "No", f"sim-{i}").duration
            for image_id, bbox in boxes
            for task in semantic_tasks_for_box(strategy, image_id, bbox)
            for i in range(task.n_annotators)
        )
        assert outcome.ledger.total == pytest.approx(expected, abs=1e-9)

    def test_stage1_cost_charged_per_proposal(self):
        strategy = Strategy(
            box_source=BoxSource.DIRECT_BOX,
            validation=ValidationStrategy.IS_PEDESTRIAN_11,
        )
        outcome = run_correction(
            strategy,
            [("img", BBox(0, 0, 10, 30))],
            perfect_source(semantic_truths(set())),
        )
        by_kind = outcome.ledger.total_by_kind()
        assert by_kind["stage1_direct_box"] == pytest.approx(44.11)

    def test_exhausted_source_marks_partial(self):
        strategy = Strategy(validation=ValidationStrategy.IS_PEDESTRIAN_11)
        source = PrecollectedResponseSource([])
        outcome = run_correction(strategy, [("img", BBox(0, 0, 10, 30))], source)
        assert outcome.partial
        assert not outcome.accepted and not outcome.rejected

    def test_all_cant_solve_is_unresolved(self):
        strategy = Strategy(validation=ValidationStrategy.IS_PEDESTRIAN_11)
        source = SimulatedResponseSource(
            AnnotatorModel(accuracy=1.0, cant_solve_rate=1.0, seed=2),
            semantic_truths(set()),
        )
        outcome = run_correction(strategy, [("img", BBox(0, 0, 10, 30))], source)
        assert len(outcome.unresolved) == 1
        assert not outcome.accepted and not outcome.rejected


class TestPrecollected:
    def test_exact_count_consumed(self):
        rs = [AnnotatorResponse("t", f"a{i}", "Yes", 1.0) for i in range(11)]
        source = PrecollectedResponseSource(rs)
        task = semantic_tasks_for_box(Strategy(validation=ValidationStrategy.IS_PEDESTRIAN_11), "img", BBox(0, 0, 10, 30))[0]
        task.task_id = "t"
        assert len(source.collect(task)) == 11

    def test_shortfall_raises(self):
        rs = [AnnotatorResponse("t", f"a{i}", "Yes", 1.0) for i in range(3)]
        source = PrecollectedResponseSource(rs)
        task = semantic_tasks_for_box(Strategy(validation=ValidationStrategy.IS_PEDESTRIAN_11), "img", BBox(0, 0, 10, 30))[0]
        task.task_id = "t"
        with pytest.raises(SourceExhausted):
            source.collect(task)


class TestDedupe:
    def softobj(self, bbox, group, image="img"):
        return SoftLabeledObject(
            image_id=image,
            bbox=bbox,
            soft_label=SoftLabel(p_hat=float("nan"), counts={}, n_valid=0),
            group_id=group,
        )

    def test_duplicate_adopts_base_group(self):
        a = self.softobj(BBox(0, 0, 10, 30), "ga")
        b = self.softobj(BBox(1, 0, 11, 30), "gb")
        merged = dedupe_merge([a], [b], iou_duplicate_resolver(0.5))
        assert len(merged) == 2
        assert merged[1].group_id == "ga"

    def test_below_candidate_iou_not_considered(self):
        a = self.softobj(BBox(0, 0, 10, 30), "ga")
        b = self.softobj(BBox(8, 0, 18, 30), "gb")  # IoU 1/9 < 0.25
        assert iou(a.bbox, b.bbox) < 0.25
        merged = dedupe_merge([a], [b], lambda *_: True)
        assert merged[1].group_id == "gb"

    def test_candidate_but_resolver_says_distinct(self):
        a = self.softobj(BBox(0, 0, 10, 30), "ga")
        b = self.softobj(BBox(3, 0, 13, 30), "gb")  # IoU ~ 0.54
        merged = dedupe_merge([a], [b], lambda *_: False)
        assert merged[1].group_id == "gb"

    def test_cross_image_never_duplicate(self):
        a = self.softobj(BBox(0, 0, 10, 30), "ga", image="x")
        b = self.softobj(BBox(0, 0, 10, 30), "gb", image="y")
        merged = dedupe_merge([a], [b], lambda *_: True)
        assert merged[1].group_id == "gb"

    def test_resolver_threshold(self):
        resolve = iou_duplicate_resolver(0.5)
        assert resolve(BBox(0, 0, 10, 10), BBox(0, 0, 10, 10), 0.5)
        assert not resolve(BBox(0, 0, 10, 10), BBox(0, 0, 10, 10), 0.49)


class TestKeypointClustering:
    def test_tight_cluster_merges(self):
        points = [(0.0, 0.0), (1.0, 1.0), (100.0, 100.0)]
        clusters = cluster_keypoints(points, radius=5.0)
        assert sorted(map(sorted, clusters)) == [[0, 1], [2]]

    def test_zero_radius_all_singletons(self):
        points = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]
        clusters = cluster_keypoints(points, radius=0.5)
        assert len(clusters) == 3

    def test_every_point_assigned_once(self):
        import random

        rng = random.Random(1)
        points = [(rng.uniform(0, 100), rng.uniform(0, 100)) for _ in range(60)]
        clusters = cluster_keypoints(points, radius=10.0)
        flat = sorted(i for c in clusters for i in c)
        assert flat == list(range(60))

    def test_median_aggregation(self):
        boxes = [BBox(0, 0, 10, 10), BBox(2, 1, 12, 11), BBox(4, 2, 14, 12)]
        assert aggregate_drawn_boxes(boxes) == BBox(2, 1, 12, 11)


class TestStage1Collection:
    def test_direct_perfect_annotators_recover_truth(self):
        truths = {"img": [BBox(10, 10, 30, 70), BBox(100, 10, 130, 80)]}
        strategy = Strategy(box_source=BoxSource.DIRECT_BOX)
        source = SimulatedResponseSource(
            AnnotatorModel(accuracy=1.0, box_jitter=0.0, seed=4), stage1_truth_lookup(truths)
        )
        boxes = collect_boxes_stage1(strategy, truths, source)
        assert sorted(b.bbox.left for b in boxes) == [10, 100]

    def test_keypoint_workflow_recovers_truth(self):
        truths = {"img": [BBox(10, 10, 30, 70), BBox(200, 10, 230, 80)]}
        strategy = Strategy(box_source=BoxSource.KEYPOINT_TO_BOX)
        source = SimulatedResponseSource(
            AnnotatorModel(accuracy=1.0, box_jitter=0.0, seed=5), stage1_truth_lookup(truths)
        )
        boxes = collect_boxes_stage1(strategy, truths, source)
        assert len(boxes) == 2
        assert sorted(b.bbox.left for b in boxes) == [10, 200]
        assert all(b.box_support == 3 for b in boxes)

    def test_combined_merges_with_keypoint_base(self):
        truths = {"img": [BBox(10, 10, 30, 70)]}
        strategy = Strategy(box_source=BoxSource.COMBINED)
        source = SimulatedResponseSource(
            AnnotatorModel(accuracy=1.0, box_jitter=0.0, seed=6), stage1_truth_lookup(truths)
        )
        boxes = collect_boxes_stage1(strategy, truths, source)
        # one keypoint-derived box plus one direct box, pooled into one group
        assert len(boxes) == 2
        assert len({b.group_id for b in boxes}) == 1

    def test_ledger_records_every_response(self):
        truths = {"img": [BBox(10, 10, 30, 70)]}
        strategy = Strategy(box_source=BoxSource.DIRECT_BOX)
        ledger = CostLedger()
        source = SimulatedResponseSource(
            AnnotatorModel(accuracy=1.0, seed=7), stage1_truth_lookup(truths)
        )
        collect_boxes_stage1(strategy, truths, source, ledger)
        assert len(ledger.entries) == 3  # three annotators, one image


class TestEmitCorrected:
    def test_accepted_boxes_added_as_pedestrians(self):
        strategy = Strategy(validation=ValidationStrategy.IS_PEDESTRIAN_11)
        box = BBox(0, 0, 10, 30)
        outcome = run_correction(
            strategy, [("img", box)], perfect_source(semantic_truths({box_key("img", box)}))
        )
        original = {"img": [LabeledObject("Car", 0.0, 0, 0.0, BBox(50, 0, 90, 30))]}
        corrected, sidecar = emit_corrected_dataset(outcome, original)
        assert len(corrected["img"]) == 2
        added = corrected["img"][1]
        assert added.class_name == "Pedestrian" and added.bbox == box
        assert len(sidecar) == 1 and sidecar[0].soft_label.p_hat == 1.0

    def test_originals_never_deleted(self):
        strategy = Strategy(validation=ValidationStrategy.IS_PEDESTRIAN_11)
        outcome = run_correction(
            strategy, [("img", BBox(0, 0, 10, 30))], perfect_source(semantic_truths(set()))
        )
        original = {"img": [LabeledObject("Pedestrian", 0.0, 0, 0.0, BBox(50, 0, 70, 90))]}
        corrected, sidecar = emit_corrected_dataset(outcome, original)
        assert corrected == original
        assert sidecar == []
