"""Training loop: Adam with a stepwise-decayed learning rate, a reduced-rate
parameter group for the classifier bank, JSON-Lines step logs, and per-epoch
validation selecting the checkpoint with the best CIDEr.

Runs are bit-reproducible under a fixed seed: single-threaded torch, one seeded
RNG stream for shuffling, and raw-binary checkpoints.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import TrainConfig
from .corpus import ObjectClassSet, Vocabulary, build_vocabulary, derive_object_classes, load_annotations
from .data import load_split, prepare_split
from .decoder import GroundedCaptioner, create_model, get_preset, save_checkpoint
from .errors import TrainingError
from .evaluation import validation_cider

log = logging.getLogger(__name__)


def lr_at_epoch(base: float, factor: float, every: int, epoch: int) -> float:
    """Stepwise decay at epoch boundaries: base * factor**(epoch // every)."""
    return base * factor ** (epoch // every)


@dataclass
class TrainResult:
    best_epoch: int
    best_cider: float
    log_path: Path
    best_checkpoint: Path
    last_checkpoint: Path
    vocab: Vocabulary
    classes: ObjectClassSet


def build_corpus_artifacts(config: TrainConfig) -> tuple[Vocabulary, ObjectClassSet]:
    """Vocabulary from the train split; object classes from train+val."""
    train = load_annotations(config.train_annotations).segments
    val = load_annotations(config.val_annotations).segments
    vocab = build_vocabulary(train, config.min_count, config.max_len)
    classes = derive_object_classes(train + val, config.class_threshold)
    return vocab, classes


def train(config: TrainConfig) -> TrainResult:
    torch.set_num_threads(1)
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)

    vocab, classes = build_corpus_artifacts(config)
    train_examples = prepare_split(
        load_split(config.train_annotations, config.features_dir, vocab, classes),
        vocab, config.frame_restricted,
    )
    val_examples = prepare_split(
        load_split(config.val_annotations, config.features_dir, vocab, classes),
        vocab, config.frame_restricted,
    )

    preset = get_preset(config.preset)
    model = create_model(config.model_config(len(vocab), classes.num_classes), config.seed)
    bank_params = set(id(p) for p in model.bank.parameters())
    base_group = [p for p in model.parameters() if id(p) not in bank_params]
    optimizer = torch.optim.Adam(
        [
            {"params": base_group, "lr": config.learning_rate},
            {"params": list(model.bank.parameters()),
             "lr": config.learning_rate * config.finetune_multiplier},
        ],
        betas=(0.9, 0.999),
    )

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(config.to_json() + "\n", encoding="utf-8")
    (out_dir / "vocab.json").write_text(vocab.to_json() + "\n", encoding="utf-8")
    (out_dir / "classes.json").write_text(classes.to_json() + "\n", encoding="utf-8")
    log_path = out_dir / "log.jsonl"
    best_path = out_dir / "best.ckpt"
    last_path = out_dir / "last.ckpt"

    def checkpoint(path: Path, epoch: int, val_cider: float) -> None:
        save_checkpoint(
            model, path,
            vocab_hash=vocab.content_hash(),
            class_hash=classes.content_hash(),
            lambda_preset=preset.name,
            extra={"epoch": epoch, "val_cider": val_cider},
        )

    best_epoch, best_cider = -1, -math.inf
    step = 0
    with open(log_path, "w", encoding="utf-8") as log_file:
        for epoch in range(config.max_epochs):
            lr = lr_at_epoch(config.learning_rate, config.decay_factor,
                             config.decay_every, epoch)
            optimizer.param_groups[0]["lr"] = lr
            optimizer.param_groups[1]["lr"] = lr * config.finetune_multiplier

            model.train()
            order = rng.permutation(len(train_examples))
            for start in range(0, len(order), config.batch_size):
                batch = [train_examples[i] for i in order[start: start + config.batch_size]]
                total, breakdown = model.compute_losses(batch, preset.lambdas)
                if not math.isfinite(breakdown.total):
                    dump = {
                        "epoch": epoch, "step": step,
                        "segments": [ex.segment_id for ex in batch],
                        **breakdown.as_dict(),
                    }
                    (out_dir / "diagnostic_dump.json").write_text(
                        json.dumps(dump, indent=2), encoding="utf-8")
                    raise TrainingError(
                        f"non-finite loss at epoch {epoch} step {step}; "
                        f"batch dumped to {out_dir / 'diagnostic_dump.json'}"
                    )
                optimizer.zero_grad()
                total.backward()
                optimizer.step()
                record = {"epoch": epoch, "step": step, "lr": lr, **breakdown.as_dict()}
                log_file.write(json.dumps(record) + "\n")
                step += 1

            val_cider = validation_cider(model, val_examples, vocab)
            log_file.write(json.dumps({"epoch": epoch, "val_cider": val_cider}) + "\n")
            checkpoint(last_path, epoch, val_cider)
            if val_cider > best_cider:
                best_epoch, best_cider = epoch, val_cider
                checkpoint(best_path, epoch, val_cider)
            model.train()
        log_file.write(json.dumps({"selected_epoch": best_epoch,
                                   "best_val_cider": best_cider}) + "\n")

    return TrainResult(
        best_epoch=best_epoch,
        best_cider=best_cider,
        log_path=log_path,
        best_checkpoint=best_path,
        last_checkpoint=last_path,
        vocab=vocab,
        classes=classes,
    )
