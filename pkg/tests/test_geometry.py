import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from labelmend.geometry import (
    BBox,
    ErrorKind,
    InvalidBox,
    classify_errors,
    filter_boxes,
    greedy_match,
    iou,
    max_iou,
    nms,
)


# ---- independent oracles ----

def raster_iou(a: BBox, b: BBox) -> float:
    """Pixel-rasterization oracle: count integer cells, valid for integer coords."""
    cells_a = {
        (x, y)
        for x in range(int(a.left), int(a.right))
        for y in range(int(a.top), int(a.bottom))
    }
    cells_b = {
        (x, y)
        for x in range(int(b.left), int(b.right))
        for y in range(int(b.top), int(b.bottom))
    }
    inter = len(cells_a & cells_b)
    union = len(cells_a | cells_b)
    return inter / union


def reference_nms(boxes, threshold):
    """Straight-line reference: explicit remaining-set loop."""
    remaining = sorted(range(len(boxes)), key=lambda i: (-boxes[i][1], i))
    keep = []
    while remaining:
        best = remaining.pop(0)
        keep.append(best)
        remaining = [
            j for j in remaining if iou(boxes[best][0], boxes[j][0]) <= threshold
        ]
    return keep


def replay_match(a, b, threshold):
    """Oracle: materialize the full sorted pair list and replay it."""
    pairs = []
    for i, box_a in enumerate(a):
        for j, box_b in enumerate(b):
            v = iou(box_a, box_b)
            if v >= threshold:
                pairs.append((v, i, j))
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
    taken_a, taken_b, out = set(), set(), []
    for v, i, j in pairs:
        if i not in taken_a and j not in taken_b:
            taken_a.add(i)
            taken_b.add(j)
            out.append((i, j, v))
    return out


def random_box(rng, span=40, max_size=15):
    l = rng.randint(0, span)
    t = rng.randint(0, span)
    return BBox(l, t, l + rng.randint(1, max_size), t + rng.randint(1, max_size))


boxes_st = st.builds(
    lambda l, t, w, h: BBox(l, t, l + w, t + h),
    st.floats(-100, 100, allow_nan=False),
    st.floats(-100, 100, allow_nan=False),
    st.floats(0.1, 50),
    st.floats(0.1, 50),
)


class TestBBox:
    def test_rejects_degenerate(self):
        with pytest.raises(InvalidBox):
            BBox(0, 0, 0, 10)
        with pytest.raises(InvalidBox):
            BBox(0, 10, 10, 10)
        with pytest.raises(InvalidBox):
            BBox(5, 0, 4, 10)

    def test_rejects_nonfinite(self):
        with pytest.raises(InvalidBox):
            BBox(0, 0, math.inf, 10)
        with pytest.raises(InvalidBox):
            BBox(math.nan, 0, 10, 10)

    def test_derived_quantities(self):
        b = BBox(2, 3, 10, 7)
        assert b.width == 8 and b.height == 4 and b.area == 32
        assert b.center == (6, 5)


class TestIou:
    def test_identity(self):
        b = BBox(0, 0, 10, 10)
        assert iou(b, b) == 1.0

    def test_disjoint(self):
        assert iou(BBox(0, 0, 10, 10), BBox(20, 20, 30, 30)) == 0.0

    def test_half_overlap(self):
        # 50x10 intersection over 150 union = 1/3
        assert iou(BBox(0, 0, 10, 10), BBox(5, 0, 15, 10)) == pytest.approx(1 / 3)

    def test_touching_edges_is_zero(self):
        assert iou(BBox(0, 0, 10, 10), BBox(10, 0, 20, 10)) == 0.0

    def test_matches_rasterization_oracle(self):
        rng = random.Random(7)
        for _ in range(1000):
            a, b = random_box(rng), random_box(rng)
            assert iou(a, b) == pytest.approx(raster_iou(a, b), abs=1e-9)

    @given(boxes_st, boxes_st)
    def test_symmetric(self, a, b):
        assert iou(a, b) == pytest.approx(iou(b, a), abs=1e-12)

    @given(boxes_st)
    def test_self_iou_is_one(self, a):
        assert iou(a, a) == 1.0

    @given(boxes_st, boxes_st, st.floats(0, 50))
    def test_moving_apart_never_increases(self, a, b, shift):
        """Translating b further right of a cannot raise the IoU."""
        before = iou(a, b)
        moved = BBox(b.left + shift, b.top, b.right + shift, b.bottom)
        if b.left >= a.right:
            assert iou(a, moved) <= before + 1e-12


class TestNms:
    def test_full_overlap_keeps_best(self):
        b = BBox(0, 0, 10, 10)
        assert nms([(b, 0.9), (b, 0.8)], 0.5) == [0]
        assert nms([(b, 0.8), (b, 0.9)], 0.5) == [1]

    def test_disjoint_all_survive(self):
        boxes = [(BBox(i * 20, 0, i * 20 + 10, 10), 0.5 + i * 0.1) for i in range(3)]
        assert sorted(nms(boxes, 0.5)) == [0, 1, 2]

    def test_empty(self):
        assert nms([], 0.5) == []

    def test_output_in_descending_score_order(self):
        rng = random.Random(3)
        boxes = [(random_box(rng), rng.random()) for _ in range(10)]
        keep = nms(boxes, 0.5)
        scores = [boxes[i][1] for i in keep]
        assert scores == sorted(scores, reverse=True)

    def test_matches_reference_on_random_instances(self):
        rng = random.Random(11)
        for _ in range(500):
            boxes = [(random_box(rng), rng.random()) for _ in range(rng.randint(0, 8))]
            assert nms(boxes, 0.5) == reference_nms(boxes, 0.5)

    def test_order_invariant_up_to_tiebreak(self):
        rng = random.Random(5)
        boxes = [(random_box(rng), rng.random()) for _ in range(8)]
        kept = {tuple(sorted(nms(boxes, 0.5)))}
        perm = list(range(len(boxes)))
        for _ in range(10):
            rng.shuffle(perm)
            shuffled = [boxes[i] for i in perm]
            kept.add(tuple(sorted(perm[i] for i in nms(shuffled, 0.5))))
        assert len(kept) == 1


class TestGreedyMatch:
    def test_identical_single(self):
        b = BBox(0, 0, 10, 10)
        result = greedy_match([b], [b], 0.5)
        assert result.pairs == [(0, 0, 1.0)]
        assert result.unmatched_a == [] and result.unmatched_b == []

    def test_greedy_assignment_blocks_second_best(self):
        # P1 overlaps G1 (0.60) and G2 (0.52); P2 overlaps G1 (0.58) only.
        # Greedy fixes (P1, G1), which blocks both other pairs.
        g1 = BBox(0, 0, 10, 10)
        p1 = BBox(2.5, 0, 12.5, 10)
        p2 = BBox(-2.658, 0, 7.342, 10)
        g2 = BBox(7.35, 0, 12.5, 10)
        assert iou(p1, g1) == pytest.approx(0.60, abs=0.005)
        assert iou(p2, g1) == pytest.approx(0.58, abs=0.005)
        assert 0.5 < iou(p1, g2) < 0.58
        assert iou(p2, g2) == 0.0
        result = greedy_match([p1, p2], [g1, g2], 0.5)
        assert [(i, j) for i, j, _ in result.pairs] == [(0, 0)]
        assert result.unmatched_a == [1] and result.unmatched_b == [1]
        assert result.pairs == replay_match([p1, p2], [g1, g2], 0.5)

    def test_matches_replay_oracle_on_random_instances(self):
        rng = random.Random(13)
        for _ in range(1000):
            a = [random_box(rng) for _ in range(rng.randint(0, 6))]
            b = [random_box(rng) for _ in range(rng.randint(0, 6))]
            result = greedy_match(a, b, 0.3)
            assert result.pairs == replay_match(a, b, 0.3)

    def test_pair_ious_non_increasing_and_above_threshold(self):
        rng = random.Random(17)
        for _ in range(200):
            a = [random_box(rng) for _ in range(5)]
            b = [random_box(rng) for _ in range(5)]
            result = greedy_match(a, b, 0.2)
            ious = [v for _, _, v in result.pairs]
            assert all(v >= 0.2 for v in ious)
            assert ious == sorted(ious, reverse=True)

    def test_one_to_one(self):
        rng = random.Random(19)
        for _ in range(200):
            a = [random_box(rng) for _ in range(6)]
            b = [random_box(rng) for _ in range(6)]
            result = greedy_match(a, b, 0.1)
            assert len({i for i, _, _ in result.pairs}) == len(result.pairs)
            assert len({j for _, j, _ in result.pairs}) == len(result.pairs)
            assert sorted(result.unmatched_a + [i for i, _, _ in result.pairs]) == list(range(6))

    def test_invalid_threshold(self):
        with pytest.raises(ValueError):
            greedy_match([], [], 0.0)


class TestClassifyErrors:
    def test_no_intersection_is_overlooked(self):
        kinds = classify_errors([BBox(0, 0, 10, 10)], [BBox(50, 50, 60, 60)])
        assert kinds == [ErrorKind.OVERLOOKED]

    def test_partial_overlap_is_misfitting(self):
        a = BBox(0, 0, 10, 10)
        g = BBox(6, 0, 16, 10)
        assert 0 < iou(a, g) < 0.5
        assert classify_errors([a], [g]) == [ErrorKind.MISFITTING]

    def test_identical_is_matched(self):
        b = BBox(0, 0, 10, 10)
        assert classify_errors([b], [b]) == [ErrorKind.MATCHED]

    def test_empty_reference_all_overlooked(self):
        kinds = classify_errors([BBox(0, 0, 10, 10), BBox(20, 0, 30, 10)], [])
        assert kinds == [ErrorKind.OVERLOOKED, ErrorKind.OVERLOOKED]

    def test_partition(self):
        rng = random.Random(23)
        for _ in range(100):
            vgt = [random_box(rng) for _ in range(5)]
            gt = [random_box(rng) for _ in range(5)]
            kinds = classify_errors(vgt, gt)
            assert len(kinds) == 5
            assert all(isinstance(k, ErrorKind) for k in kinds)

    def test_class_follows_best_reference_iou(self):
        rng = random.Random(29)
        for _ in range(200):
            vgt = [random_box(rng) for _ in range(4)]
            gt = [random_box(rng) for _ in range(4)]
            for box, kind in zip(vgt, classify_errors(vgt, gt)):
                best = max_iou(box, gt)
                if best == 0:
                    assert kind is ErrorKind.OVERLOOKED
                elif best < 0.5:
                    assert kind is ErrorKind.MISFITTING
                else:
                    assert kind is ErrorKind.MATCHED


class TestFilterBoxes:
    def test_height_boundary(self):
        short = BBox(0, 0, 10, 24.9)
        tall = BBox(0, 0, 10, 25.0)
        assert filter_boxes([short, tall], min_height=25) == [1]

    def test_dontcare_overlap_excludes(self):
        box = BBox(0, 0, 10, 30)
        dc = BBox(0, 0, 10, 40)  # IoU 0.75
        assert iou(box, dc) > 0.5
        assert filter_boxes([box], min_height=0, dontcare=[dc]) == []

    def test_no_dontcare_only_height(self):
        boxes = [BBox(0, 0, 10, 20), BBox(0, 0, 10, 50)]
        assert filter_boxes(boxes, min_height=30) == [1]

    def test_dontcare_below_threshold_kept(self):
        box = BBox(0, 0, 10, 30)
        dc = BBox(8, 0, 18, 30)  # small overlap
        assert iou(box, dc) < 0.5
        assert filter_boxes([box], min_height=0, dontcare=[dc]) == [0]

    def test_negative_min_height_rejected(self):
        with pytest.raises(ValueError):
            filter_boxes([], min_height=-1)
