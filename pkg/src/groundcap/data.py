"""Loading annotation splits together with their feature files, and
tensorizing segments for the captioner."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import featio
from .corpus import (
    EncodedCaption,
    ObjectClassSet,
    SegmentAnnotation,
    SegmentMeta,
    Vocabulary,
    encode_caption,
    load_annotations,
    segment_meta,
    video_durations,
)
from .decoder import GroundedStep, PreparedExample
from .errors import DataError
from .regions import RegionSet, location_features, match_positives


@dataclass
class LoadedExample:
    annotation: SegmentAnnotation
    encoded: EncodedCaption
    regions: RegionSet
    temporal: np.ndarray
    meta: SegmentMeta


def feature_paths(features_dir: str | Path, annotation: SegmentAnnotation) -> tuple[Path, Path]:
    stem = f"{annotation.video_id}_{annotation.segment_index}"
    base = Path(features_dir)
    return base / f"{stem}.feat", base / f"{stem}.tfeat"


def load_split(
    corpus_path: str | Path,
    features_dir: str | Path,
    vocab: Vocabulary,
    classes: ObjectClassSet,
) -> list[LoadedExample]:
    """Load one split; every segment must have matching .feat/.tfeat files."""
    segments = load_annotations(corpus_path).segments
    durations = video_durations(segments)
    examples = []
    for seg in segments:
        feat_path, tfeat_path = feature_paths(features_dir, seg)
        regions = featio.load_region_set(feat_path)
        temporal = featio.load_temporal(tfeat_path)
        for mention in seg.mentions:
            if mention.frame_index >= regions.num_frames:
                raise DataError(
                    f"{seg.segment_id}: mention frame {mention.frame_index} outside "
                    f"the region set's {regions.num_frames} frames"
                )
        examples.append(
            LoadedExample(
                annotation=seg,
                encoded=encode_caption(seg, vocab, classes),
                regions=regions,
                temporal=temporal,
                meta=segment_meta(seg, durations[seg.video_id]),
            )
        )
    return examples


def prepare_example(
    example: LoadedExample,
    vocab: Vocabulary,
    frame_restricted: bool = True,
) -> PreparedExample:
    """Tensorize a loaded segment and precompute its supervision targets."""
    seg, enc, regions = example.annotation, example.encoded, example.regions
    target_ids = list(enc.token_ids)
    input_ids = [vocab.bos_id] + target_ids[:-1]
    grounded = []
    all_gt = []
    for word in enc.grounded:
        gt = [(b, word.class_id, word.frame_index) for b in word.boxes]
        all_gt.extend(gt)
        match = match_positives(regions, gt, frame_restricted=frame_restricted)
        grounded.append(GroundedStep(step=word.position, class_id=word.class_id,
                                     gamma=match.gamma))
    cls_match = match_positives(regions, all_gt, frame_restricted=frame_restricted)
    return PreparedExample(
        segment_id=seg.segment_id,
        input_ids=torch.tensor(input_ids, dtype=torch.long),
        target_ids=torch.tensor(target_ids, dtype=torch.long),
        grounded=grounded,
        cls_match=cls_match,
        features=torch.as_tensor(regions.features, dtype=torch.float64),
        locations=torch.as_tensor(location_features(regions), dtype=torch.float64),
        temporal=torch.as_tensor(example.temporal, dtype=torch.float64),
        meta=example.meta,
        regions=regions,
        reference=seg.caption[: vocab.max_caption_length],
        words=tuple(enc.grounded),
    )


def prepare_split(
    examples: list[LoadedExample], vocab: Vocabulary, frame_restricted: bool = True
) -> list[PreparedExample]:
    return [prepare_example(ex, vocab, frame_restricted) for ex in examples]
