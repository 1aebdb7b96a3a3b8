"""Seeded synthetic corpora with planted region-word correlations.

Every caption mentions 1-3 object classes; each mentioned class gets one
"planted" region whose feature comes from the class's cluster and whose GT box
equals the region box exactly (IoU 1). Distractor regions are drawn from the
clusters of classes *not* mentioned in the caption. Box slots within a frame
never overlap, so each groundable word has exactly one positive region.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import featio
from .corpus import EntityMention, SegmentAnnotation, serialize_annotations
from .errors import ConfigError
from .regions import BoundingBox, RegionSet

CLASS_WORDS = (
    "dog", "cat", "car", "tree", "ball", "chair", "bird", "cup",
    "boat", "lamp", "horse", "table", "kite", "drum", "bike", "box",
)
DEFAULT_VERBS = ("moves", "turns", "waits", "spins", "rolls", "rests")

_TEMPLATES: tuple[tuple, ...] = (
    ("a", 0, "V"),
    ("the", 0, "V", "slowly"),
    ("a", 0, "V", "near", "a", 1),
    ("the", 0, "and", "the", 1, "V"),
    ("a", 0, "V", "past", "a", 1, "and", "a", 2),
)


@dataclass
class SyntheticSpec:
    num_classes: int = 8
    frames: int = 3
    regions_per_frame: int = 5
    distractors: int = 4             # distractor fill per frame, capped by regions_per_frame
    cluster_separation: float = 4.0
    feature_noise: float = 0.3
    region_dim: int = 64
    temporal_dim: int = 32
    num_train: int = 500
    num_val: int = 100
    class_weights: tuple[float, ...] | None = None
    vocabulary: tuple[str, ...] = DEFAULT_VERBS
    seed: int = 0
    frame_w: float = 400.0
    frame_h: float = 300.0

    def __post_init__(self):
        if self.num_classes < 1 or self.frames < 1 or self.regions_per_frame < 1:
            raise ConfigError("num_classes, frames and regions_per_frame must be >= 1")
        if self.num_classes > min(self.region_dim, self.temporal_dim):
            raise ConfigError("need num_classes <= min(region_dim, temporal_dim) for cluster means")
        if self.num_classes > len(CLASS_WORDS):
            raise ConfigError(f"at most {len(CLASS_WORDS)} synthetic classes supported")
        if self.class_weights is not None and len(self.class_weights) != self.num_classes:
            raise ConfigError("class_weights length must equal num_classes")


def class_names(spec: SyntheticSpec) -> tuple[str, ...]:
    return CLASS_WORDS[: spec.num_classes]


def cluster_means(spec: SyntheticSpec, dim: int) -> np.ndarray:
    """(K, dim) separated cluster centers (scaled unit axes)."""
    means = np.zeros((spec.num_classes, dim))
    for c in range(spec.num_classes):
        means[c, c] = spec.cluster_separation
    return means


def _slot_box(slot: int, total: int, frame_w: float, frame_h: float) -> BoundingBox:
    width = frame_w / total
    return BoundingBox(
        slot * width + 0.05 * width,
        0.2 * frame_h,
        (slot + 1) * width - 0.05 * width,
        0.8 * frame_h,
    )


@dataclass
class SyntheticSegment:
    annotation: SegmentAnnotation
    regions: RegionSet
    temporal: np.ndarray


def _make_segment(
    spec: SyntheticSpec, rng: np.random.Generator, video_id: str
) -> SyntheticSegment:
    names = class_names(spec)
    fmeans = cluster_means(spec, spec.region_dim)
    tmeans = cluster_means(spec, spec.temporal_dim)
    weights = None
    if spec.class_weights is not None:
        weights = np.asarray(spec.class_weights, dtype=np.float64)
        weights = weights / weights.sum()

    n_mentioned = int(rng.integers(1, min(3, spec.num_classes, spec.regions_per_frame) + 1))
    mentioned = rng.choice(spec.num_classes, size=n_mentioned, replace=False, p=weights)
    template = _TEMPLATES[int(rng.integers(0, len(_TEMPLATES)))]
    while sum(1 for t in template if isinstance(t, int)) > n_mentioned:
        template = _TEMPLATES[int(rng.integers(0, len(_TEMPLATES)))]

    caption: list[str] = []
    mention_info: list[tuple[int, int]] = []   # (token position, class id)
    used = 0
    for item in template:
        if item == "V":
            caption.append(spec.vocabulary[int(rng.integers(0, len(spec.vocabulary)))])
        elif isinstance(item, int):
            class_id = int(mentioned[used])
            used += 1
            mention_info.append((len(caption), class_id))
            caption.append(names[class_id])
        else:
            caption.append(item)

    # assign each mention a frame and a region slot on that frame
    planted: dict[int, list[tuple[int, int]]] = {f: [] for f in range(spec.frames)}
    mention_frames = rng.integers(0, spec.frames, size=len(mention_info))
    slots_by_frame = {f: list(rng.permutation(spec.regions_per_frame)) for f in range(spec.frames)}
    mentions = []
    for (pos, class_id), frame in zip(mention_info, mention_frames):
        slot = int(slots_by_frame[int(frame)].pop(0))
        planted[int(frame)].append((slot, class_id))
        box = _slot_box(slot, spec.regions_per_frame, spec.frame_w, spec.frame_h)
        mentions.append(
            EntityMention(
                np_text=f"a {names[class_id]}",
                token_span=(pos,),
                frame_index=int(frame),
                boxes=(box,),
                is_group=False,
                labels=(names[class_id],),
            )
        )

    other = [c for c in range(spec.num_classes) if c not in set(int(m) for m in mentioned)]
    frame_of, boxes, conf, feats = [], [], [], []
    for f in range(spec.frames):
        rows: list[tuple[int, int, float]] = []   # (slot, class, conf)
        for slot, class_id in planted[f]:
            rows.append((slot, class_id, float(rng.uniform(0.85, 1.0))))
        fill = min(spec.distractors, spec.regions_per_frame - len(rows))
        free = [s for s in range(spec.regions_per_frame) if s not in {r[0] for r in rows}]
        for slot in free[:fill]:
            class_id = int(rng.choice(other)) if other else int(rng.integers(0, spec.num_classes))
            rows.append((slot, class_id, float(rng.uniform(0.5, 0.85))))
        rows.sort()
        for slot, class_id, c in rows:
            frame_of.append(f)
            boxes.append(_slot_box(slot, spec.regions_per_frame, spec.frame_w, spec.frame_h).as_tuple())
            conf.append(c)
            feats.append(fmeans[class_id] + spec.feature_noise * rng.standard_normal(spec.region_dim))

    regions = RegionSet(
        num_frames=spec.frames,
        frame_of=np.array(frame_of, dtype=np.int64),
        boxes=np.array(boxes, dtype=np.float64),
        conf=np.array(conf, dtype=np.float64),
        features=np.array(feats, dtype=np.float64),
        frame_w=spec.frame_w,
        frame_h=spec.frame_h,
    )

    temporal = 0.1 * rng.standard_normal((spec.frames, spec.temporal_dim))
    for (pos, class_id), frame in zip(mention_info, mention_frames):
        temporal[int(frame)] += tmeans[class_id]

    end_s = float(rng.uniform(5.0, 30.0))
    annotation = SegmentAnnotation(
        video_id=video_id,
        segment_index=0,
        total_segments=1,
        start_s=0.0,
        end_s=end_s,
        caption=tuple(caption),
        mentions=tuple(mentions),
    )
    return SyntheticSegment(annotation, regions, temporal)


def synthesize_split(
    spec: SyntheticSpec, count: int, rng: np.random.Generator, prefix: str
) -> list[SyntheticSegment]:
    return [_make_segment(spec, rng, f"{prefix}{i:05d}") for i in range(count)]


@dataclass
class SyntheticData:
    train_path: Path
    val_path: Path
    features_dir: Path
    class_names: tuple[str, ...]


def make_synthetic(spec: SyntheticSpec, out_dir: str | Path) -> SyntheticData:
    """Write a canonical-format corpus plus `.feat`/`.tfeat` files; output is
    byte-identical for the same spec (including seed)."""
    out_dir = Path(out_dir)
    features_dir = out_dir / "features"
    features_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    files = {"train": spec.num_train, "val": spec.num_val}
    paths = {}
    for split, count in files.items():
        segments = synthesize_split(spec, count, rng, prefix=f"synth_{split}_")
        path = out_dir / f"{split}.jsonl"
        path.write_text(serialize_annotations([s.annotation for s in segments]), encoding="utf-8")
        for seg in segments:
            stem = f"{seg.annotation.video_id}_{seg.annotation.segment_index}"
            featio.save_region_set(seg.regions, features_dir / f"{stem}.feat")
            featio.save_temporal(seg.temporal, features_dir / f"{stem}.tfeat")
        paths[split] = path
    return SyntheticData(
        train_path=paths["train"],
        val_path=paths["val"],
        features_dir=features_dir,
        class_names=class_names(spec),
    )
