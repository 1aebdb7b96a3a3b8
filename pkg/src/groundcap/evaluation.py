"""Running a trained captioner over a split and assembling the metric report.

Localization on GT sentences feeds the reference tokens through the decoder
and scores the argmax attention/grounding region of every annotated object
word; generation metrics decode captions and score language quality plus
localization F1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .corpus import ObjectClassSet, Vocabulary
from .decoder import DecodeStep, GroundedCaptioner, PreparedExample
from .langeval import bleu_all, cider
from .metrics import (
    GeneratedWordEval,
    MetricReport,
    SegmentGenerationEval,
    WordGrounding,
    accumulate_classification,
    generation_f1,
    gt_localization_accuracy,
    localize_word,
    segment_localization_records,
)


def _gt_boxes(word) -> np.ndarray:
    return np.array([b.as_tuple() for b in word.boxes], dtype=np.float64)


def grounding_word_records(
    ex: PreparedExample, steps: list[DecodeStep], which: str
) -> list[WordGrounding]:
    """Attention or grounding weights for each annotated object word."""
    records = []
    for word in ex.words:
        step = steps[word.position]
        weights = step.alpha if which == "attention" else step.beta
        if weights is None:
            continue
        records.append(
            WordGrounding(
                class_id=word.class_id,
                weights=weights.detach().numpy(),
                gt_boxes=_gt_boxes(word),
                gt_frame=word.frame_index,
            )
        )
    return records


def generation_eval(
    ex: PreparedExample,
    tokens: list[int],
    steps: list[DecodeStep],
    vocab: Vocabulary,
    classes: ObjectClassSet,
) -> SegmentGenerationEval:
    """Per-segment raw material for the generation F1 metrics."""
    gt_first = {}
    for word in ex.words:
        gt_first.setdefault(word.class_id, word)
    generated = []
    for token_id, step in zip(tokens, steps):
        class_id = classes.class_of(vocab.id_to_token[token_id])
        if class_id is None:
            continue
        localized = False
        if class_id in gt_first:
            word = gt_first[class_id]
            rec = localize_word(
                step.alpha.detach().numpy(), ex.regions, word.frame_index,
                _gt_boxes(word), class_id,
            )
            localized = rec.correct
        generated.append(GeneratedWordEval(class_id=class_id, localized=localized))
    reference_classes = [w.class_id for w in ex.words]
    return SegmentGenerationEval(generated=generated, reference_classes=reference_classes)


@dataclass
class GeneratedCaption:
    segment_id: str
    token_ids: list[int]
    tokens: list[str]
    steps: list[DecodeStep]


def generate_captions(
    model: GroundedCaptioner,
    examples: list[PreparedExample],
    vocab: Vocabulary,
    mode: str = "greedy",
    beam_width: int = 1,
    max_len: int | None = None,
) -> list[GeneratedCaption]:
    model.eval()
    out = []
    with torch.no_grad():
        for ex in examples:
            ids, steps = model.generate(
                ex.features, ex.locations, ex.temporal, ex.meta,
                mode=mode, beam_width=beam_width, max_len=max_len,
                bos_id=vocab.bos_id, eos_id=vocab.eos_id,
            )
            out.append(GeneratedCaption(
                segment_id=ex.segment_id,
                token_ids=ids,
                tokens=[vocab.id_to_token[i] for i in ids],
                steps=steps,
            ))
    return out


def validation_cider(
    model: GroundedCaptioner, examples: list[PreparedExample], vocab: Vocabulary
) -> float:
    """Greedy-decoded CIDEr against the single reference caption per segment."""
    captions = generate_captions(model, examples, vocab)
    candidates = [c.tokens for c in captions]
    references = [[list(ex.reference)] for ex in examples]
    return cider(candidates, references)


def evaluate_split(
    model: GroundedCaptioner,
    examples: list[PreparedExample],
    vocab: Vocabulary,
    classes: ObjectClassSet,
    gt_grounding: bool = True,
    generation: bool = True,
    mode: str = "greedy",
    beam_width: int = 1,
) -> MetricReport:
    model.eval()
    report = MetricReport(class_names=dict(enumerate(classes.names)))

    if gt_grounding:
        attn_records, grd_records, cls_pairs = [], [], []
        with torch.no_grad():
            for ex in examples:
                steps = model.teacher_forced_pass(ex)
                attn_records.extend(segment_localization_records(
                    grounding_word_records(ex, steps, "attention"), ex.regions))
                grd_records.extend(segment_localization_records(
                    grounding_word_records(ex, steps, "grounding"), ex.regions))
                similarity = torch.softmax(model.bank.base_logits(ex.features), dim=0)
                cls_pairs.append((similarity.numpy(), ex.cls_match))
        report.attn = gt_localization_accuracy(attn_records)
        report.grd = gt_localization_accuracy(grd_records)
        report.cls = accumulate_classification(cls_pairs)

    if generation:
        captions = generate_captions(model, examples, vocab, mode=mode, beam_width=beam_width)
        segments = []
        id_lookup = {c.segment_id: c for c in captions}
        for ex in examples:
            cap = id_lookup[ex.segment_id]
            segments.append(generation_eval(ex, cap.token_ids, cap.steps, vocab, classes))
        report.f1_all = generation_f1(segments, "all")
        report.f1_loc = generation_f1(segments, "loc")
        candidates = [c.tokens for c in captions]
        references = [[list(ex.reference)] for ex in examples]
        scores = bleu_all(candidates, references, max_n=4)
        report.bleu1 = 100.0 * scores[0]
        report.bleu4 = 100.0 * scores[3]
        report.cider = cider(candidates, references)
    return report
