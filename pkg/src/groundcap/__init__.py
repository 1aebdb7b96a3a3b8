"""Grounded captioning toolkit.

Region-attention caption decoding over detector proposals with optional
localization supervision (attention, grounding, and region-classification
losses), plus the grounding metric suite used to evaluate it.
"""

from .corpus import (
    EntityMention,
    ObjectClassSet,
    SegmentAnnotation,
    Vocabulary,
    build_vocabulary,
    corpus_stats,
    derive_object_classes,
    encode_caption,
    parse_annotations,
)
from .decoder import (
    GroundedCaptioner,
    LambdaWeights,
    ModelConfig,
    PRESETS,
    create_model,
    load_checkpoint,
    save_checkpoint,
)
from .errors import ConfigError, DataError, GroundcapError, TrainingError
from .regions import BoundingBox, RegionSet, assemble_region_set, iou, match_positives

__all__ = [
    "BoundingBox",
    "ConfigError",
    "DataError",
    "EntityMention",
    "GroundcapError",
    "GroundedCaptioner",
    "LambdaWeights",
    "ModelConfig",
    "ObjectClassSet",
    "PRESETS",
    "RegionSet",
    "SegmentAnnotation",
    "TrainingError",
    "Vocabulary",
    "assemble_region_set",
    "build_vocabulary",
    "corpus_stats",
    "create_model",
    "derive_object_classes",
    "encode_caption",
    "iou",
    "load_checkpoint",
    "match_positives",
    "parse_annotations",
    "save_checkpoint",
]

__version__ = "0.1.0"
