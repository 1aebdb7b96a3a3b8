import numpy as np
import pytest

from groundcap.errors import DataError
from groundcap.regions import (
    BoundingBox,
    FrameProposals,
    RegionSet,
    assemble_region_set,
    iou,
    iou_matrix,
    location_feature,
    location_features,
    match_positives,
)


def box(*coords):
    return BoundingBox(*coords)


class TestIoU:
    def test_identical_boxes(self):
        b = box(1, 2, 5, 7)
        assert iou(b, b) == 1.0

    def test_disjoint_boxes(self):
        assert iou(box(0, 0, 1, 1), box(5, 5, 6, 6)) == 0.0

    def test_hand_computed_overlap(self):
        # intersection 1, union 4 + 4 - 1 = 7
        assert iou(box(0, 0, 2, 2), box(1, 1, 3, 3)) == pytest.approx(1 / 7)

    def test_symmetry_and_bounds(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            x1, y1 = rng.uniform(0, 50, 2)
            a = box(x1, y1, x1 + rng.uniform(1, 30), y1 + rng.uniform(1, 30))
            x1, y1 = rng.uniform(0, 50, 2)
            b = box(x1, y1, x1 + rng.uniform(1, 30), y1 + rng.uniform(1, 30))
            v = iou(a, b)
            assert v == iou(b, a)
            assert 0.0 <= v <= 1.0

    def test_translation_invariance(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            x1, y1 = rng.uniform(0, 50, 2)
            a = box(x1, y1, x1 + rng.uniform(1, 30), y1 + rng.uniform(1, 30))
            x1, y1 = rng.uniform(0, 50, 2)
            b = box(x1, y1, x1 + rng.uniform(1, 30), y1 + rng.uniform(1, 30))
            dx, dy = rng.uniform(-20, 20, 2)
            assert iou(a.shifted(dx, dy), b.shifted(dx, dy)) == pytest.approx(iou(a, b), abs=1e-12)

    def test_degenerate_box_rejected(self):
        with pytest.raises(DataError):
            box(3, 0, 3, 2)

    def test_iou_matrix_matches_scalar(self):
        rng = np.random.default_rng(2)
        boxes_a = []
        boxes_b = []
        for _ in range(6):
            x, y = rng.uniform(0, 20, 2)
            boxes_a.append((x, y, x + rng.uniform(1, 10), y + rng.uniform(1, 10)))
            x, y = rng.uniform(0, 20, 2)
            boxes_b.append((x, y, x + rng.uniform(1, 10), y + rng.uniform(1, 10)))
        got = iou_matrix(np.array(boxes_a), np.array(boxes_b))
        for i, a in enumerate(boxes_a):
            for j, b in enumerate(boxes_b):
                assert got[i, j] == pytest.approx(iou(box(*a), box(*b)), abs=1e-12)


def make_region_set(boxes, frames, num_frames=2, d=4, conf=None, seed=0):
    rng = np.random.default_rng(seed)
    n = len(boxes)
    return RegionSet(
        num_frames=num_frames,
        frame_of=np.array(frames),
        boxes=np.array(boxes, dtype=np.float64),
        conf=np.ones(n) * 0.9 if conf is None else np.array(conf),
        features=rng.normal(size=(n, d)),
        frame_w=100.0,
        frame_h=100.0,
    )


class TestMatchPositives:
    def test_identical_box_is_positive(self):
        rs = make_region_set([(0, 0, 10, 10), (50, 50, 60, 60)], [0, 0])
        match = match_positives(rs, [(box(0, 0, 10, 10), 3, 0)])
        assert match.gamma.tolist() == [1, 0]
        assert match.class_ids[0] == 3

    def test_exactly_half_iou_is_negative(self):
        # region (0,0,10,10) vs gt (0,0,10,5): inter 50, union 100 -> exactly 0.5
        rs = make_region_set([(0, 0, 10, 10)], [0])
        match = match_positives(rs, [(box(0, 0, 10, 5), 0, 0)])
        assert match.gamma.tolist() == [0]

    def test_largest_iou_wins(self):
        rs = make_region_set([(0, 0, 10, 10)], [0])
        gt = [
            (box(0, 0, 10, 16), 1, 0),   # iou 10/16 = 0.625
            (box(0, 0, 10, 14), 2, 0),   # iou 10/14 ~= 0.714
        ]
        match = match_positives(rs, gt)
        assert match.gamma.tolist() == [1]
        assert match.class_ids[0] == 2

    def test_tie_breaks_to_lowest_gt_index(self):
        rs = make_region_set([(0, 0, 10, 10)], [0])
        gt = [(box(0, 0, 10, 14), 5, 0), (box(0, 0, 10, 14), 6, 0)]
        match = match_positives(rs, gt)
        assert match.class_ids[0] == 5

    def test_no_gt_gives_all_zero(self):
        rs = make_region_set([(0, 0, 10, 10)], [0])
        match = match_positives(rs, [])
        assert match.gamma.tolist() == [0]
        assert match.num_positive == 0

    def test_frame_restriction(self):
        rs = make_region_set([(0, 0, 10, 10), (0, 0, 10, 10)], [0, 1])
        gt = [(box(0, 0, 10, 10), 2, 1)]
        match = match_positives(rs, gt, frame_restricted=True)
        assert match.gamma.tolist() == [0, 1]
        match = match_positives(rs, gt, frame_restricted=False)
        assert match.gamma.tolist() == [1, 1]

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(3)
        for trial in range(50):
            n = int(rng.integers(1, 9))
            num_frames = int(rng.integers(1, 4))
            boxes = []
            frames = []
            for f in sorted(int(rng.integers(0, num_frames)) for _ in range(n)):
                x, y = rng.uniform(0, 40, 2)
                boxes.append((x, y, x + rng.uniform(2, 30), y + rng.uniform(2, 30)))
                frames.append(f)
            rs = make_region_set(boxes, frames, num_frames=num_frames, seed=trial)
            gt = []
            for _ in range(int(rng.integers(0, 4))):
                x, y = rng.uniform(0, 40, 2)
                gt.append((box(x, y, x + rng.uniform(2, 30), y + rng.uniform(2, 30)),
                           int(rng.integers(0, 5)), int(rng.integers(0, num_frames))))
            got = match_positives(rs, gt)

            # brute force: scalar loops, no vectorization
            for i in range(n):
                best_iou, best_j = 0.0, None
                for j, (gbox, cls, frame) in enumerate(gt):
                    if frame != frames[i]:
                        continue
                    v = iou(box(*boxes[i]), gbox)
                    if v > best_iou:
                        best_iou, best_j = v, j
                expected = 1 if best_iou > 0.5 else 0
                assert got.gamma[i] == expected
                if expected:
                    assert got.class_ids[i] == gt[best_j][1]
                    assert got.best_iou[i] == pytest.approx(best_iou)


class TestLocationFeature:
    def test_full_frame_box(self):
        got = location_feature(box(0, 0, 100, 100), 0, 10, 100, 100)
        assert got.tolist() == [0, 0, 1, 1, 0]

    def test_hand_computed(self):
        got = location_feature(box(0, 0, 50, 100), 3, 10, 100, 200)
        assert got.tolist() == pytest.approx([0, 0, 0.5, 0.5, 0.3])

    def test_components_bounded(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            w, h = rng.uniform(50, 200, 2)
            x1, y1 = rng.uniform(0, w / 2), rng.uniform(0, h / 2)
            b = box(x1, y1, x1 + rng.uniform(1, w - x1), y1 + rng.uniform(1, h - y1))
            f = int(rng.integers(0, 10))
            got = location_feature(b, f, 10, w, h)
            assert np.all(got >= 0) and np.all(got <= 1)

    def test_batch_matches_single(self):
        rs = make_region_set([(0, 0, 10, 10), (20, 30, 40, 80)], [0, 1])
        batch = location_features(rs)
        for i in range(rs.n):
            single = location_feature(BoundingBox(*rs.boxes[i]), int(rs.frame_of[i]),
                                      rs.num_frames, rs.frame_w, rs.frame_h)
            assert batch[i].tolist() == pytest.approx(single.tolist())


class TestAssembleRegionSet:
    def _proposals(self, conf, seed=0, d=4):
        rng = np.random.default_rng(seed)
        n = len(conf)
        boxes = np.stack([
            rng.uniform(0, 40, n), rng.uniform(0, 40, n),
            rng.uniform(50, 90, n), rng.uniform(50, 90, n),
        ], axis=1)
        return FrameProposals(boxes=boxes, conf=np.array(conf), features=rng.normal(size=(n, d)))

    def test_threshold_filters(self):
        rs = assemble_region_set([self._proposals([0.9, 0.3, 0.1])], 100, 100)
        assert rs.n == 2

    def test_cap_limits_per_frame(self):
        rs = assemble_region_set([self._proposals([0.9] * 150)], 100, 100, cap=100)
        assert rs.n == 100

    def test_empty_input(self):
        rs = assemble_region_set([], 100, 100)
        assert rs.n == 0 and rs.num_frames == 0

    def test_confidence_ordering_stable(self):
        fp = self._proposals([0.5, 0.9, 0.5, 0.7])
        rs = assemble_region_set([fp], 100, 100)
        assert rs.conf.tolist() == [0.9, 0.7, 0.5, 0.5]
        # the two 0.5 entries keep input order: features identify them
        assert np.allclose(rs.features[2], fp.features[0])
        assert np.allclose(rs.features[3], fp.features[2])

    def test_flattening_is_frame_major(self):
        frames = [self._proposals([0.8, 0.4], seed=1), self._proposals([0.9], seed=2)]
        rs = assemble_region_set(frames, 100, 100)
        assert rs.frame_of.tolist() == [0, 0, 1]
        assert rs.frame_indices(0).tolist() == [0, 1]
        assert rs.flat_index(1, 0) == 2

    def test_count_matches_brute_force(self):
        rng = np.random.default_rng(5)
        for trial in range(30):
            per_frame = []
            threshold = float(rng.uniform(0.1, 0.5))
            cap = int(rng.integers(1, 6))
            expected = 0
            for _ in range(int(rng.integers(1, 4))):
                conf = rng.uniform(0, 1, int(rng.integers(0, 10)))
                per_frame.append(self._proposals(list(conf), seed=trial))
                kept = sum(1 for c in conf if c > threshold)
                expected += min(kept, cap)
            rs = assemble_region_set(per_frame, 100, 100, conf_threshold=threshold, cap=cap)
            assert rs.n == expected

    def test_inconsistent_dims_rejected(self):
        frames = [self._proposals([0.9], d=4), self._proposals([0.9], d=5)]
        with pytest.raises(DataError):
            assemble_region_set(frames, 100, 100)
