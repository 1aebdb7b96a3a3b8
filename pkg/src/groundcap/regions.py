"""Proposal regions over sampled frames: boxes, IoU, positive matching, location features.

All coordinates are continuous pixel units (x2 > x1, y2 > y1), no +1 pixel
convention. Regions are stored flattened in frame-major order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError

IOU_POSITIVE_THRESHOLD = 0.5
DEFAULT_CONF_THRESHOLD = 0.2
DEFAULT_FRAME_CAP = 100


@dataclass(frozen=True)
class BoundingBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x2 > self.x1 and self.y2 > self.y1):
            raise DataError(f"degenerate box {self.as_tuple()}: requires x2 > x1 and y2 > y1")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def shifted(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of two (n, 4) / (m, 4) arrays of [x1, y1, x2, y2] rows."""
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    ix = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    iy = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(ix, 0.0, None) * np.clip(iy, 0.0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(inter > 0, inter / union, 0.0)


@dataclass(frozen=True)
class Region:
    box: BoundingBox
    frame_index: int
    confidence: float
    feature: np.ndarray


@dataclass
class RegionSet:
    """N proposal regions across F sampled frames, flattened frame-major."""

    num_frames: int
    frame_of: np.ndarray      # (N,) int, non-decreasing
    boxes: np.ndarray         # (N, 4) float
    conf: np.ndarray          # (N,) float
    features: np.ndarray      # (N, d) float
    frame_w: float
    frame_h: float

    def __post_init__(self):
        self.frame_of = np.asarray(self.frame_of, dtype=np.int64)
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        self.conf = np.asarray(self.conf, dtype=np.float64)
        self.features = np.asarray(self.features, dtype=np.float64)
        n = len(self.frame_of)
        if not (self.boxes.shape[0] == self.conf.shape[0] == self.features.shape[0] == n):
            raise DataError("region arrays disagree on N")
        if n and (self.frame_of.min() < 0 or self.frame_of.max() >= self.num_frames):
            raise DataError("region frame index outside [0, F)")
        if np.any(np.diff(self.frame_of) < 0):
            raise DataError("regions must be flattened frame-major")

    @property
    def n(self) -> int:
        return len(self.frame_of)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1] if self.features.ndim == 2 else 0

    def frame_indices(self, frame: int) -> np.ndarray:
        """Flat indices of the regions on one frame."""
        return np.flatnonzero(self.frame_of == frame)

    def frame_sizes(self) -> list[int]:
        return [int(np.sum(self.frame_of == f)) for f in range(self.num_frames)]

    def region(self, i: int) -> Region:
        return Region(
            box=BoundingBox(*self.boxes[i]),
            frame_index=int(self.frame_of[i]),
            confidence=float(self.conf[i]),
            feature=self.features[i],
        )

    def flat_index(self, frame: int, local: int) -> int:
        idx = self.frame_indices(frame)
        return int(idx[local])


@dataclass
class PositiveMatch:
    """Per-region positive indicators against a set of ground-truth boxes."""

    gamma: np.ndarray          # (N,) 0/1
    class_ids: np.ndarray      # (N,) matched class id, -1 for negatives
    best_iou: np.ndarray       # (N,) IoU of the matched box (0 when negative)
    threshold: float = IOU_POSITIVE_THRESHOLD

    @property
    def positive_indices(self) -> np.ndarray:
        return np.flatnonzero(self.gamma == 1)

    @property
    def num_positive(self) -> int:
        return int(self.gamma.sum())


def match_positives(
    regions: RegionSet,
    gt: Sequence[tuple[BoundingBox, int, int]],
    threshold: float = IOU_POSITIVE_THRESHOLD,
    frame_restricted: bool = True,
) -> PositiveMatch:
    """Mark regions with IoU strictly over `threshold` against any GT box.

    `gt` holds (box, class_id, frame_index) triples. A region matching several
    GT boxes takes the class of the largest-IoU box, ties broken by lowest GT
    index. With `frame_restricted` a region can only match GT boxes on its own
    frame.
    """
    n = regions.n
    gamma = np.zeros(n, dtype=np.int8)
    class_ids = np.full(n, -1, dtype=np.int64)
    best = np.zeros(n, dtype=np.float64)
    if not gt or n == 0:
        return PositiveMatch(gamma, class_ids, best, threshold)

    gt_boxes = np.array([b.as_tuple() for b, _, _ in gt], dtype=np.float64)
    gt_frames = np.array([f for _, _, f in gt], dtype=np.int64)
    if gt_frames.min() < 0 or gt_frames.max() >= regions.num_frames:
        raise DataError("GT box frame index outside [0, F)")
    overlaps = iou_matrix(regions.boxes, gt_boxes)  # (N, G)
    if frame_restricted:
        overlaps = np.where(regions.frame_of[:, None] == gt_frames[None, :], overlaps, 0.0)
    # argmax picks the lowest GT index on ties
    best_gt = np.argmax(overlaps, axis=1)
    best = overlaps[np.arange(n), best_gt]
    hit = best > threshold
    gamma[hit] = 1
    class_ids[hit] = np.array([gt[j][1] for j in best_gt], dtype=np.int64)[hit]
    best = np.where(hit, best, 0.0)
    return PositiveMatch(gamma, class_ids, best, threshold)


def location_feature(
    box: BoundingBox, frame_index: int, num_frames: int, frame_w: float, frame_h: float
) -> np.ndarray:
    """5-vector (x1/W, y1/H, x2/W, y2/H, frame/F), all components in [0, 1]."""
    if frame_w <= 0 or frame_h <= 0:
        raise DataError("frame size must be positive")
    return np.array(
        [
            box.x1 / frame_w,
            box.y1 / frame_h,
            box.x2 / frame_w,
            box.y2 / frame_h,
            frame_index / num_frames,
        ],
        dtype=np.float64,
    )


def location_features(regions: RegionSet) -> np.ndarray:
    """Location feature rows for all regions of a set, shape (N, 5)."""
    if regions.frame_w <= 0 or regions.frame_h <= 0:
        raise DataError("frame size must be positive")
    scale = np.array([regions.frame_w, regions.frame_h, regions.frame_w, regions.frame_h])
    out = np.empty((regions.n, 5), dtype=np.float64)
    out[:, :4] = regions.boxes / scale
    out[:, 4] = regions.frame_of / regions.num_frames
    return out


@dataclass
class FrameProposals:
    """Raw detector output for one frame, before filtering."""

    boxes: np.ndarray       # (n, 4)
    conf: np.ndarray        # (n,)
    features: np.ndarray    # (n, d)

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        self.conf = np.asarray(self.conf, dtype=np.float64)
        self.features = np.asarray(self.features, dtype=np.float64)
        if not (self.boxes.shape[0] == self.conf.shape[0] == self.features.shape[0]):
            raise DataError("proposal arrays disagree on count")


def assemble_region_set(
    per_frame: Sequence[FrameProposals],
    frame_w: float,
    frame_h: float,
    conf_threshold: float = DEFAULT_CONF_THRESHOLD,
    cap: int = DEFAULT_FRAME_CAP,
) -> RegionSet:
    """Filter proposals (confidence strictly over the threshold, then top-`cap`
    per frame) and flatten frame-major.

    Kept regions are ordered by confidence descending, stable on ties.
    """
    if cap < 1:
        raise ConfigError("per-frame cap must be >= 1")
    dims = {fp.features.shape[1] for fp in per_frame if fp.features.size}
    if len(dims) > 1:
        raise DataError(f"inconsistent feature dimensions: {sorted(dims)}")
    d = dims.pop() if dims else 0

    frames, boxes, conf, feats = [], [], [], []
    for f, fp in enumerate(per_frame):
        keep = np.flatnonzero(fp.conf > conf_threshold)
        # stable sort on -conf preserves input order among ties
        order = keep[np.argsort(-fp.conf[keep], kind="stable")][:cap]
        frames.extend([f] * len(order))
        boxes.append(fp.boxes[order])
        conf.append(fp.conf[order])
        feats.append(fp.features[order])

    n = len(frames)
    return RegionSet(
        num_frames=len(per_frame),
        frame_of=np.array(frames, dtype=np.int64),
        boxes=np.concatenate(boxes) if n else np.zeros((0, 4)),
        conf=np.concatenate(conf) if n else np.zeros(0),
        features=np.concatenate(feats) if n else np.zeros((0, d)),
        frame_w=frame_w,
        frame_h=frame_h,
    )
