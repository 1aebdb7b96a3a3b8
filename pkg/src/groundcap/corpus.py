"""Annotation corpora: parsing/validation, vocabularies, object classes, statistics.

Canonical file format is UTF-8 JSON Lines, one segment per line:

    {"video_id": str, "segment_index": int, "total_segments": int,
     "start_s": float, "end_s": float, "caption": [str, ...],
     "mentions": [{"np": str, "tokens": [int, ...], "frame": int,
                   "boxes": [[x1, y1, x2, y2], ...], "group": bool,
                   "labels": [str, ...]}, ...]}

Record-level violations (malformed JSON, bad segment metadata, duplicate
segments) are errors; mention-level violations are dropped with a warning.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, IO, Iterable, NamedTuple, Sequence

from .errors import ConfigError, DataError
from .regions import BoundingBox

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
SPECIAL_TOKENS = (PAD, BOS, EOS, UNK)

# Corpus presets: (min word count, max caption length, class frequency threshold)
ANET_PRESET = {"min_count": 3, "max_len": 20, "class_threshold": 50}
FLICKR_PRESET = {"min_count": 5, "max_len": 16, "class_threshold": 100}


@dataclass(frozen=True)
class EntityMention:
    """One noun phrase of a caption with its box annotation(s)."""

    np_text: str
    token_span: tuple[int, ...]
    frame_index: int
    boxes: tuple[BoundingBox, ...]
    is_group: bool
    labels: tuple[str, ...]


@dataclass(frozen=True)
class SegmentAnnotation:
    video_id: str
    segment_index: int
    total_segments: int
    start_s: float
    end_s: float
    caption: tuple[str, ...]
    mentions: tuple[EntityMention, ...]

    @property
    def segment_id(self) -> str:
        return f"{self.video_id}_{self.segment_index}"


class ParseResult(NamedTuple):
    segments: list[SegmentAnnotation]
    warnings: list[str]


# --------------------------------------------------------------------------
# label extraction (pluggable tagger)

_DETERMINERS = {
    "a", "an", "the", "this", "that", "these", "those", "some", "any", "each",
    "every", "no", "both", "few", "several", "many", "most", "other", "another",
    "his", "her", "its", "their", "my", "your", "our", "one", "two", "three",
    "four", "five", "six", "seven", "eight", "nine", "ten",
}
_PREPOSITIONS = {
    "in", "on", "of", "with", "at", "near", "by", "from", "to", "into", "onto",
    "over", "under", "behind", "beside", "around", "across", "against",
}
_PRONOUNS = {
    "he", "she", "it", "they", "him", "her", "them", "his", "hers", "its",
    "theirs", "himself", "herself", "itself", "themselves", "someone",
    "everyone", "herself", "each", "other",
}

Tagger = Callable[[str], list[str]]


def default_tagger(np_text: str) -> list[str]:
    """Head-word heuristic: cut at the first preposition, strip determiners,
    keep the last remaining token (or a pronoun). Not parser-quality."""
    words = [w.strip(".,!?;:\"'()") for w in np_text.lower().split()]
    words = [w for w in words if w]
    if not words:
        return []
    for i, w in enumerate(words):
        if w in _PREPOSITIONS and i > 0:
            words = words[:i]
            break
    content = [w for w in words if w not in _DETERMINERS]
    if content:
        return [content[-1]]
    if words[-1] in _PRONOUNS:
        return [words[-1]]
    return []


def lemma_candidates(word: str) -> list[str]:
    """The word itself plus naive singular forms, most specific first."""
    w = word.lower()
    cands = [w]
    if w.endswith("ies") and len(w) > 4:
        cands.append(w[:-3] + "y")
    elif w.endswith(("ses", "xes", "zes", "ches", "shes")) and len(w) > 4:
        cands.append(w[:-2])
    elif w.endswith("s") and not w.endswith("ss") and len(w) > 2:
        cands.append(w[:-1])
    return cands


# --------------------------------------------------------------------------
# canonical parsing

def _mention_from_record(rec: dict) -> EntityMention:
    boxes = tuple(BoundingBox(*[float(v) for v in b]) for b in rec["boxes"])
    return EntityMention(
        np_text=str(rec["np"]),
        token_span=tuple(int(i) for i in rec["tokens"]),
        frame_index=int(rec["frame"]),
        boxes=boxes,
        is_group=bool(rec.get("group", False)),
        labels=tuple(str(s).lower() for s in rec.get("labels", [])),
    )


def _validate_mention(
    mention: EntityMention,
    caption_len: int,
    claimed: set[int],
    tagger: Tagger,
) -> tuple[EntityMention | None, str | None]:
    """Returns (possibly relabelled mention, None) or (None, reason)."""
    span = mention.token_span
    if not span or any(b <= a for a, b in zip(span, span[1:])):
        return None, "token span not strictly increasing"
    if span[0] < 0 or span[-1] >= caption_len:
        return None, "token span outside caption"
    if any(t in claimed for t in span):
        return None, "token already claimed by another mention"
    if mention.frame_index < 0:
        return None, "negative frame index"
    if not mention.boxes:
        return None, "no boxes"
    labels = mention.labels or tuple(tagger(mention.np_text))
    if not labels:
        return None, "no object label could be extracted"
    if labels is not mention.labels:
        mention = EntityMention(
            mention.np_text, span, mention.frame_index, mention.boxes, mention.is_group, labels
        )
    return mention, None


def parse_annotations(
    stream: IO[bytes] | IO[str] | Iterable[str] | Iterable[bytes],
    tagger: Tagger = default_tagger,
) -> ParseResult:
    """Parse a canonical JSON-Lines annotation stream.

    Raises DataError (naming the line) for malformed records and duplicate
    (video_id, segment_index) pairs; drops invalid mentions with a warning.
    """
    segments: list[SegmentAnnotation] = []
    warnings: list[str] = []
    seen: set[tuple[str, int]] = set()
    for lineno, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        line = raw.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"line {lineno}: malformed JSON ({exc.msg} at column {exc.colno})")
        try:
            segment = _segment_from_record(rec, lineno, warnings, tagger)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"line {lineno}: malformed record ({exc})")
        key = (segment.video_id, segment.segment_index)
        if key in seen:
            raise DataError(f"line {lineno}: duplicate segment {key}")
        seen.add(key)
        segments.append(segment)
    return ParseResult(segments, warnings)


def _segment_from_record(
    rec: dict, lineno: int, warnings: list[str], tagger: Tagger
) -> SegmentAnnotation:
    video_id = str(rec["video_id"])
    segment_index = int(rec["segment_index"])
    total_segments = int(rec["total_segments"])
    start_s, end_s = float(rec["start_s"]), float(rec["end_s"])
    caption = tuple(str(t) for t in rec["caption"])
    if total_segments < 1 or not 0 <= segment_index < total_segments:
        raise DataError(f"line {lineno}: segment_index {segment_index} outside [0, {total_segments})")
    if not start_s < end_s:
        raise DataError(f"line {lineno}: start_s must be < end_s")

    mentions: list[EntityMention] = []
    claimed: set[int] = set()
    for k, mrec in enumerate(rec.get("mentions", [])):
        try:
            mention = _mention_from_record(mrec)
        except DataError as exc:  # degenerate box
            warnings.append(f"line {lineno}: mention {k} dropped: {exc}")
            continue
        mention, reason = _validate_mention(mention, len(caption), claimed, tagger)
        if mention is None:
            warnings.append(f"line {lineno}: mention {k} dropped: {reason}")
            continue
        claimed.update(mention.token_span)
        mentions.append(mention)
    return SegmentAnnotation(
        video_id, segment_index, total_segments, start_s, end_s, caption, tuple(mentions)
    )


def serialize_annotations(segments: Iterable[SegmentAnnotation]) -> str:
    """Canonical JSON-Lines rendering (the normal form of the format)."""
    lines = []
    for seg in segments:
        rec = {
            "video_id": seg.video_id,
            "segment_index": seg.segment_index,
            "total_segments": seg.total_segments,
            "start_s": seg.start_s,
            "end_s": seg.end_s,
            "caption": list(seg.caption),
            "mentions": [
                {
                    "np": m.np_text,
                    "tokens": list(m.token_span),
                    "frame": m.frame_index,
                    "boxes": [list(b.as_tuple()) for b in m.boxes],
                    "group": m.is_group,
                    "labels": list(m.labels),
                }
                for m in seg.mentions
            ],
        }
        lines.append(json.dumps(rec, separators=(",", ":")))
    return "\n".join(lines) + ("\n" if lines else "")


def load_annotations(path, tagger: Tagger = default_tagger) -> ParseResult:
    with open(path, "rb") as fh:
        return parse_annotations(fh, tagger)


# --------------------------------------------------------------------------
# vocabulary

@dataclass
class Vocabulary:
    token_to_id: dict[str, int]
    id_to_token: list[str]
    max_caption_length: int

    pad_id: int = 0
    bos_id: int = 1
    eos_id: int = 2
    unk_id: int = 3

    def __len__(self) -> int:
        return len(self.id_to_token)

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, self.unk_id)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        """Ids of the first max_caption_length tokens, EOS appended."""
        ids = [self.id_of(t) for t in tokens[: self.max_caption_length]]
        ids.append(self.eos_id)
        return ids

    def decode(self, ids: Iterable[int]) -> list[str]:
        out = []
        for i in ids:
            if i == self.eos_id:
                break
            if i in (self.pad_id, self.bos_id):
                continue
            out.append(self.id_to_token[i])
        return out

    def to_json(self) -> str:
        return json.dumps(
            {"tokens": self.id_to_token, "max_caption_length": self.max_caption_length},
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        data = json.loads(text)
        tokens = list(data["tokens"])
        if tokens[:4] != list(SPECIAL_TOKENS):
            raise DataError("vocabulary file does not start with the special tokens")
        return cls(
            token_to_id={t: i for i, t in enumerate(tokens)},
            id_to_token=tokens,
            max_caption_length=int(data["max_caption_length"]),
        )

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()[:16]


def build_vocabulary(
    corpus: Iterable[SegmentAnnotation], min_count: int, max_len: int
) -> Vocabulary:
    """Count caption tokens (truncated to max_len first) and keep those with
    frequency >= min_count; everything else maps to UNK."""
    if min_count < 1 or max_len < 1:
        raise ConfigError("min_count and max_len must be >= 1")
    counts: Counter[str] = Counter()
    for seg in corpus:
        counts.update(seg.caption[:max_len])
    kept = sorted(t for t, c in counts.items() if c >= min_count and t not in SPECIAL_TOKENS)
    tokens = list(SPECIAL_TOKENS) + kept
    return Vocabulary(
        token_to_id={t: i for i, t in enumerate(tokens)},
        id_to_token=tokens,
        max_caption_length=max_len,
    )


# --------------------------------------------------------------------------
# object classes

@dataclass
class ObjectClassSet:
    """Ordered object class names; the background sentinel is never a member."""

    names: tuple[str, ...]
    name_to_id: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.name_to_id:
            self.name_to_id = {n: i for i, n in enumerate(self.names)}

    @property
    def num_classes(self) -> int:
        return len(self.names)

    def __len__(self) -> int:
        return len(self.names)

    def class_of(self, word: str) -> int | None:
        """Class id for a word, trying naive singular lemmas as fallback."""
        for cand in lemma_candidates(word):
            if cand in self.name_to_id:
                return self.name_to_id[cand]
        return None

    def to_json(self) -> str:
        return json.dumps({"classes": list(self.names)}, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "ObjectClassSet":
        return cls(names=tuple(json.loads(text)["classes"]))

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()[:16]


def derive_object_classes(
    corpus: Iterable[SegmentAnnotation], freq_threshold: int
) -> ObjectClassSet:
    """Words whose frequency across mention labels reaches the threshold.

    Should be fed train+val annotations only. Ordering is frequency descending
    then lexicographic, for run-to-run determinism.
    """
    if freq_threshold < 1:
        raise ConfigError("freq_threshold must be >= 1")
    counts: Counter[str] = Counter()
    for seg in corpus:
        for mention in seg.mentions:
            counts.update(mention.labels)
    kept = [w for w, c in counts.items() if c >= freq_threshold]
    kept.sort(key=lambda w: (-counts[w], w))
    return ObjectClassSet(names=tuple(kept))


# --------------------------------------------------------------------------
# caption encoding

@dataclass(frozen=True)
class GroundedWord:
    """A visually-groundable caption token with its supervision targets."""

    position: int             # token index in the (truncated) caption
    class_id: int
    boxes: tuple[BoundingBox, ...]
    frame_index: int
    is_group: bool


@dataclass
class EncodedCaption:
    token_ids: list[int]          # truncated caption ids, EOS appended
    mask: list[bool]              # per caption token; True = groundable
    grounded: list[GroundedWord]  # one entry per True mask position, in order


def encode_caption(
    annotation: SegmentAnnotation, vocab: Vocabulary, classes: ObjectClassSet
) -> EncodedCaption:
    """Token ids plus the groundable mask and per-timestep GT boxes/classes.

    A token is groundable iff it sits in a mention's span, its lemma is an
    object class, and the mention has at least one box. Tokens past the
    vocabulary's max length are discarded together with their mentions.
    """
    max_len = vocab.max_caption_length
    caption = annotation.caption[:max_len]
    ids = vocab.encode(annotation.caption)
    mask = [False] * len(caption)
    grounded: list[GroundedWord] = []
    for mention in annotation.mentions:
        if any(t >= max_len for t in mention.token_span):
            continue
        for t in mention.token_span:
            class_id = classes.class_of(caption[t])
            if class_id is None:
                continue
            mask[t] = True
            grounded.append(
                GroundedWord(
                    position=t,
                    class_id=class_id,
                    boxes=mention.boxes,
                    frame_index=mention.frame_index,
                    is_group=mention.is_group,
                )
            )
    grounded.sort(key=lambda g: g.position)
    return EncodedCaption(token_ids=ids, mask=mask, grounded=grounded)


# --------------------------------------------------------------------------
# statistics

@dataclass
class CorpusStats:
    segment_count: int
    box_count: int
    boxes_per_segment_mean: float | None
    boxes_per_segment_std: float | None   # population std
    labels_per_box_mean: float | None
    class_histogram: dict[str, int]
    multi_instance_fraction: float | None


def corpus_stats(corpus: Sequence[SegmentAnnotation]) -> CorpusStats:
    boxes_per_segment = []
    box_count = 0
    label_box_products = 0
    mention_count = 0
    multi_instance = 0
    histogram: Counter[str] = Counter()
    for seg in corpus:
        n_boxes = sum(len(m.boxes) for m in seg.mentions)
        if seg.mentions:
            boxes_per_segment.append(n_boxes)
        box_count += n_boxes
        for m in seg.mentions:
            mention_count += 1
            label_box_products += len(m.labels) * len(m.boxes)
            histogram.update(m.labels)
            if m.is_group or len(m.boxes) > 1:
                multi_instance += 1

    def _mean(xs):
        return sum(xs) / len(xs) if xs else None

    mean = _mean(boxes_per_segment)
    std = None
    if boxes_per_segment:
        std = math.sqrt(sum((x - mean) ** 2 for x in boxes_per_segment) / len(boxes_per_segment))
    return CorpusStats(
        segment_count=len(corpus),
        box_count=box_count,
        boxes_per_segment_mean=mean,
        boxes_per_segment_std=std,
        labels_per_box_mean=(label_box_products / box_count) if box_count else None,
        class_histogram=dict(histogram),
        multi_instance_fraction=(multi_instance / mention_count) if mention_count else None,
    )


# --------------------------------------------------------------------------
# segment positional metadata

@dataclass(frozen=True)
class SegmentMeta:
    total_segments: int
    segment_index: int
    start_s: float
    end_s: float
    duration_s: float


def video_durations(segments: Iterable[SegmentAnnotation]) -> dict[str, float]:
    """Video duration proxy: the max segment end time seen per video."""
    out: dict[str, float] = {}
    for seg in segments:
        out[seg.video_id] = max(out.get(seg.video_id, 0.0), seg.end_s)
    return out


def segment_meta(annotation: SegmentAnnotation, duration_s: float) -> SegmentMeta:
    if duration_s <= 0:
        raise DataError("video duration must be positive")
    return SegmentMeta(
        total_segments=annotation.total_segments,
        segment_index=annotation.segment_index,
        start_s=annotation.start_s,
        end_s=annotation.end_s,
        duration_s=duration_s,
    )


# --------------------------------------------------------------------------
# release importer

@dataclass
class ImportConfig:
    """Field mapping for importing a public annotation release.

    The expected layout is a JSON object mapping video id -> video record,
    optionally nested under `database_key`. Each video record holds parallel
    per-box arrays inside its segments dict; boxes sharing a token span merge
    into one mention.
    """

    database_key: str | None = "database"
    segments_key: str = "segments"
    tokens_key: str = "tokens"
    boxes_key: str = "process_bnd_box"
    classes_key: str = "process_clss"
    token_idx_key: str = "process_idx"
    frame_key: str = "frame_ind"
    crowd_key: str = "crowds"
    timestamps_key: str = "timestamps"

    @classmethod
    def from_json(cls, text: str) -> "ImportConfig":
        data = json.loads(text)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown importer config keys: {sorted(unknown)}")
        return cls(**data)


def import_release(
    obj: dict, config: ImportConfig | None = None, tagger: Tagger = default_tagger
) -> ParseResult:
    """Convert a release-style nested annotation dict to canonical segments."""
    config = config or ImportConfig()
    if config.database_key and config.database_key in obj:
        obj = obj[config.database_key]
    records = []
    for video_id in sorted(obj):
        video = obj[video_id]
        segments = video.get(config.segments_key, {})
        timestamps = video.get(config.timestamps_key)
        seg_keys = sorted(segments, key=lambda k: int(k))
        total = len(seg_keys)
        for seg_key in seg_keys:
            seg = segments[seg_key]
            idx = int(seg_key)
            if timestamps and idx < len(timestamps):
                start_s, end_s = float(timestamps[idx][0]), float(timestamps[idx][1])
            else:
                start_s, end_s = float(idx), float(idx + 1)
            tokens = [str(t) for t in seg[config.tokens_key]]
            mentions = _merge_release_boxes(seg, config, tokens)
            records.append(
                {
                    "video_id": video_id,
                    "segment_index": idx,
                    "total_segments": total,
                    "start_s": start_s,
                    "end_s": end_s,
                    "caption": tokens,
                    "mentions": mentions,
                }
            )
    text = "\n".join(json.dumps(r, separators=(",", ":")) for r in records)
    return parse_annotations(io.StringIO(text), tagger)


def _merge_release_boxes(seg: dict, config: ImportConfig, tokens: list[str]) -> list[dict]:
    boxes = seg.get(config.boxes_key, [])
    classes = seg.get(config.classes_key, [[]] * len(boxes))
    token_idx = seg.get(config.token_idx_key, [[]] * len(boxes))
    frames = seg.get(config.frame_key, [0] * len(boxes))
    crowds = seg.get(config.crowd_key, [0] * len(boxes))

    by_span: dict[tuple[int, ...], dict] = {}
    for i, box in enumerate(boxes):
        span = tuple(sorted(int(t) for t in (token_idx[i] or [])))
        labels = classes[i]
        if isinstance(labels, str):
            labels = [labels]
        entry = by_span.setdefault(
            span,
            {
                "np": " ".join(tokens[t] for t in span if 0 <= t < len(tokens)),
                "tokens": list(span),
                "frame": int(frames[i]),
                "boxes": [],
                "group": False,
                "labels": [],
            },
        )
        entry["boxes"].append([float(v) for v in box])
        entry["group"] = entry["group"] or bool(crowds[i])
        for lab in labels:
            if str(lab).lower() not in entry["labels"]:
                entry["labels"].append(str(lab).lower())
    return [by_span[s] for s in sorted(by_span)]
