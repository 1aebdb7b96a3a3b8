"""Grounding evaluation: localization accuracy on GT sentences, generation
F1 (all / loc), region classification accuracy, and the proposal upper bound.

All scores are macro-averaged over object classes; annotation sparsity means
candidate regions are restricted to the frame carrying the GT box. When a
class occurs several times in one sentence only its first instance counts.
"""

from __future__ import annotations

import json
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import GroundedWord
from .errors import ConfigError
from .regions import IOU_POSITIVE_THRESHOLD, PositiveMatch, RegionSet, iou_matrix


@dataclass
class LocalizationRecord:
    """One annotated object word with its predicted region."""

    class_id: int
    predicted_box: np.ndarray | None   # argmax-weight region's box, None if no candidate
    best_iou: float
    correct: bool


@dataclass
class MacroAccuracy:
    percent: float
    per_class: dict[int, tuple[int, int]]   # class -> (correct, total)


def _macro_percent(per_class: dict[int, tuple[int, int]]) -> float:
    if not per_class:
        return 0.0
    return 100.0 * sum(c / t for c, t in per_class.values()) / len(per_class)


@dataclass
class WordGrounding:
    """Raw input for localization scoring: one annotated object word together
    with the region weights in effect when the word was generated."""

    class_id: int
    weights: np.ndarray        # (N,) attention or grounding weights
    gt_boxes: np.ndarray       # (M, 4)
    gt_frame: int


def localize_word(
    weights: np.ndarray, regions: RegionSet, gt_frame: int, gt_boxes: np.ndarray,
    class_id: int,
) -> LocalizationRecord:
    """Pick the argmax-weight region among the GT frame's proposals and score
    it against the word's GT boxes at the 0.5 IoU bar."""
    cand = regions.frame_indices(gt_frame)
    if len(cand) == 0:
        return LocalizationRecord(class_id, None, 0.0, False)
    pred = int(cand[int(np.argmax(np.asarray(weights)[cand]))])
    box = regions.boxes[pred]
    best = float(iou_matrix(box[None, :], gt_boxes).max())
    return LocalizationRecord(class_id, box, best, best > IOU_POSITIVE_THRESHOLD)


def segment_localization_records(
    words: Sequence[WordGrounding], regions: RegionSet
) -> list[LocalizationRecord]:
    """Records for one sentence, keeping only each class's first instance."""
    seen: set[int] = set()
    records = []
    for w in words:
        if w.class_id in seen:
            continue
        seen.add(w.class_id)
        records.append(localize_word(w.weights, regions, w.gt_frame, w.gt_boxes, w.class_id))
    return records


def gt_localization_accuracy(records: Iterable[LocalizationRecord]) -> MacroAccuracy:
    """Per-class localization accuracy, macro-averaged over the classes that
    appear in the records."""
    per_class: dict[int, list[int]] = defaultdict(lambda: [0, 0])
    for rec in records:
        per_class[rec.class_id][1] += 1
        per_class[rec.class_id][0] += int(rec.correct)
    if not per_class:
        warnings.warn("gt_localization_accuracy: no records, reporting 0%")
        return MacroAccuracy(0.0, {})
    table = {c: (v[0], v[1]) for c, v in per_class.items()}
    return MacroAccuracy(_macro_percent(table), table)


# --------------------------------------------------------------------------
# generation F1

@dataclass
class GeneratedWordEval:
    class_id: int
    localized: bool


@dataclass
class SegmentGenerationEval:
    """One segment's generated object words (in emission order) and the
    object classes annotated in its reference sentence (in order)."""

    generated: list[GeneratedWordEval]
    reference_classes: list[int]


@dataclass
class F1Result:
    precision: float   # macro, percent
    recall: float      # macro, percent
    f1: float          # harmonic mean of the macro precision and recall
    per_class: dict[int, dict[str, int]]   # class -> counts A, B, C, D, E


def harmonic_f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def generation_f1(
    segments: Sequence[SegmentGenerationEval], mode: str = "all"
) -> F1Result:
    """Localization F1 on generated sentences.

    Per class: A generated object words, B reference object words, C correctly
    predicted words on the generated side, D on the reference side, E correctly
    predicted and localized. Mode "all" uses P=E/A, R=E/B; mode "loc" only
    judges localization among correctly predicted words via P=E/C, R=E/D.
    Classes never predicted score zero; the macro average runs over the
    classes present in the split's references.
    """
    if mode not in ("all", "loc"):
        raise ConfigError(f"unknown F1 mode {mode!r}")
    counts: dict[int, dict[str, int]] = defaultdict(lambda: {"A": 0, "B": 0, "C": 0, "D": 0, "E": 0})
    for seg in segments:
        ref_classes = list(dict.fromkeys(seg.reference_classes))  # first instances
        gen_first: dict[int, GeneratedWordEval] = {}
        for word in seg.generated:
            gen_first.setdefault(word.class_id, word)
        for c in ref_classes:
            counts[c]["B"] += 1
            if c in gen_first:
                counts[c]["D"] += 1
        for c, word in gen_first.items():
            counts[c]["A"] += 1
            if c in ref_classes:
                counts[c]["C"] += 1
                if word.localized:
                    counts[c]["E"] += 1

    split_classes = [c for c, k in counts.items() if k["B"] > 0]
    if not split_classes:
        warnings.warn("generation_f1: no reference object words, reporting 0")
        return F1Result(0.0, 0.0, 0.0, dict(counts))

    def _ratio(num: int, den: int) -> float:
        return num / den if den else 0.0

    precisions, recalls = [], []
    for c in split_classes:
        k = counts[c]
        if k["A"] == 0:   # class never predicted
            precisions.append(0.0)
            recalls.append(0.0)
        elif mode == "all":
            precisions.append(_ratio(k["E"], k["A"]))
            recalls.append(_ratio(k["E"], k["B"]))
        else:
            precisions.append(_ratio(k["E"], k["C"]))
            recalls.append(_ratio(k["E"], k["D"]))
    precision = 100.0 * sum(precisions) / len(split_classes)
    recall = 100.0 * sum(recalls) / len(split_classes)
    return F1Result(precision, recall, harmonic_f1(precision, recall), dict(counts))


# --------------------------------------------------------------------------
# region classification accuracy

def classification_accuracy(
    similarity: np.ndarray, match: PositiveMatch
) -> MacroAccuracy:
    """Top-1 accuracy over positive regions, per class then macro-averaged."""
    sim = np.asarray(similarity)
    per_class: dict[int, list[int]] = defaultdict(lambda: [0, 0])
    for i in match.positive_indices:
        gt_class = int(match.class_ids[i])
        pred = int(np.argmax(sim[:, i]))
        per_class[gt_class][1] += 1
        per_class[gt_class][0] += int(pred == gt_class)
    if not per_class:
        warnings.warn("classification_accuracy: no positive regions, reporting 0%")
        return MacroAccuracy(0.0, {})
    table = {c: (v[0], v[1]) for c, v in per_class.items()}
    return MacroAccuracy(_macro_percent(table), table)


def accumulate_classification(
    pairs: Iterable[tuple[np.ndarray, PositiveMatch]]
) -> MacroAccuracy:
    """Classification accuracy pooled over several segments."""
    per_class: dict[int, list[int]] = defaultdict(lambda: [0, 0])
    for similarity, match in pairs:
        sim = np.asarray(similarity)
        for i in match.positive_indices:
            gt_class = int(match.class_ids[i])
            per_class[gt_class][1] += 1
            per_class[gt_class][0] += int(np.argmax(sim[:, i]) == gt_class)
    if not per_class:
        warnings.warn("classification_accuracy: no positive regions, reporting 0%")
        return MacroAccuracy(0.0, {})
    table = {c: (v[0], v[1]) for c, v in per_class.items()}
    return MacroAccuracy(_macro_percent(table), table)


# --------------------------------------------------------------------------
# proposal upper bound

def localization_upper_bound(
    items: Sequence[tuple[RegionSet, Sequence[GroundedWord]]]
) -> MacroAccuracy:
    """Fraction of annotated object words coverable by *some* candidate region
    on the GT frame (oracle region selection), macro-averaged per class."""
    per_class: dict[int, list[int]] = defaultdict(lambda: [0, 0])
    for regions, words in items:
        seen: set[int] = set()
        for word in words:
            if word.class_id in seen:
                continue
            seen.add(word.class_id)
            cand = regions.frame_indices(word.frame_index)
            covered = False
            if len(cand):
                boxes = np.array([b.as_tuple() for b in word.boxes])
                covered = bool(iou_matrix(regions.boxes[cand], boxes).max() > IOU_POSITIVE_THRESHOLD)
            per_class[word.class_id][1] += 1
            per_class[word.class_id][0] += int(covered)
    if not per_class:
        warnings.warn("localization_upper_bound: no annotated words, reporting 0%")
        return MacroAccuracy(0.0, {})
    table = {c: (v[0], v[1]) for c, v in per_class.items()}
    return MacroAccuracy(_macro_percent(table), table)


# --------------------------------------------------------------------------
# report

@dataclass
class MetricReport:
    attn: MacroAccuracy | None = None
    grd: MacroAccuracy | None = None
    cls: MacroAccuracy | None = None
    f1_all: F1Result | None = None
    f1_loc: F1Result | None = None
    bleu1: float | None = None       # percent
    bleu4: float | None = None       # percent
    cider: float | None = None
    meteor: str = "n/a"              # external linguistic resources not bundled
    spice: str = "n/a"
    class_names: dict[int, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        def acc(x: MacroAccuracy | None):
            if x is None:
                return None
            return {"percent": x.percent,
                    "per_class": {str(k): list(v) for k, v in sorted(x.per_class.items())}}

        def f1(x: F1Result | None):
            if x is None:
                return None
            return {"precision": x.precision, "recall": x.recall, "f1": x.f1,
                    "per_class": {str(k): v for k, v in sorted(x.per_class.items())}}

        return {
            "attn": acc(self.attn), "grd": acc(self.grd), "cls": acc(self.cls),
            "f1_all": f1(self.f1_all), "f1_loc": f1(self.f1_loc),
            "bleu1": self.bleu1, "bleu4": self.bleu4, "cider": self.cider,
            "meteor": self.meteor, "spice": self.spice,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def format_table(self, per_class: bool = False) -> str:
        def num(x):
            return "  n/a" if x is None else f"{x:5.2f}"

        rows = [
            ("Attn.", None if self.attn is None else self.attn.percent),
            ("Grd.", None if self.grd is None else self.grd.percent),
            ("F1_all", None if self.f1_all is None else self.f1_all.f1),
            ("F1_loc", None if self.f1_loc is None else self.f1_loc.f1),
            ("Cls.", None if self.cls is None else self.cls.percent),
            ("Bleu@1", self.bleu1),
            ("Bleu@4", self.bleu4),
            ("CIDEr", self.cider),
        ]
        lines = [f"{name:<8} {num(value)}" for name, value in rows]
        lines.append(f"{'METEOR':<8}   {self.meteor}")
        lines.append(f"{'SPICE':<8}   {self.spice}")
        if per_class:
            lines.append("")
            lines.append("per-class localization (attention):")
            source = self.attn.per_class if self.attn else {}
            for c in sorted(source):
                correct, total = source[c]
                name = self.class_names.get(c, str(c))
                lines.append(f"  {name:<16} {correct}/{total}")
        return "\n".join(lines)
