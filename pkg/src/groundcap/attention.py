"""Attention machinery: additive region/frame attention, the attention
supervision loss, Bi-GRU temporal context, and the global segment feature.
"""

from __future__ import annotations

import logging

import numpy as np
import torch
import torch.nn as nn

from .corpus import SegmentMeta
from .errors import ConfigError, DataError
from .grounding import LOG_EPS

log = logging.getLogger(__name__)


class AdditiveAttention(nn.Module):
    """Additive (tanh) attention scoring over a set of encoded items.

    score_i = w^T tanh(W_i item_i + W_s state); weights are the softmax of the
    scores and the context is the weighted sum of items.
    """

    def __init__(self, dim: int):
        super().__init__()
        self.item_map = nn.Linear(dim, dim, bias=False)
        self.state_map = nn.Linear(dim, dim, bias=False)
        self.score = nn.Linear(dim, 1, bias=False)

    def project_items(self, items: torch.Tensor) -> torch.Tensor:
        """Step-independent item projection, cacheable per segment."""
        return self.item_map(items)

    def forward(
        self, items: torch.Tensor, state: torch.Tensor,
        projected: torch.Tensor | None = None,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        if items.shape[0] < 1:
            raise DataError("attention needs at least one item")
        if projected is None:
            projected = self.item_map(items)
        scores = self.score(torch.tanh(projected + self.state_map(state))).squeeze(1)
        weights = torch.softmax(scores, dim=0)
        context = weights @ items
        return weights, context


def attention_loss(alpha: torch.Tensor, gamma: np.ndarray) -> torch.Tensor:
    """Negative log attention mass on the positive regions of one word.

    Returns 0 for an all-zero gamma; the caller excludes such words from the
    per-word average.
    """
    if len(gamma) != alpha.shape[0]:
        raise ConfigError(f"gamma length {len(gamma)} != attention length {alpha.shape[0]}")
    pos = np.flatnonzero(gamma)
    if len(pos) == 0:
        return alpha.new_zeros(())
    probs = alpha[torch.as_tensor(pos, dtype=torch.long)]
    if bool((probs < LOG_EPS).any()):
        log.warning("attention_loss: probability clamped at %g", LOG_EPS)
    return -(probs.clamp_min(LOG_EPS).log()).sum()


class TemporalEncoder(nn.Module):
    """Bi-GRU over the frame-wise feature stack plus additive frame attention.

    Forward/backward GRU states (model_dim/2 each) are concatenated and
    projected back to the model width; frames are encoded once per segment.
    """

    def __init__(self, temporal_dim: int, model_dim: int):
        super().__init__()
        if model_dim % 2 != 0:
            raise ConfigError("model width must be even for the Bi-GRU split")
        self.gru = nn.GRU(temporal_dim, model_dim // 2, bidirectional=True, batch_first=True)
        self.project = nn.Linear(model_dim, model_dim)
        self.attention = AdditiveAttention(model_dim)

    def encode(self, frames: torch.Tensor) -> torch.Tensor:
        """(F_t, d_t) -> (F_t, m) encoded frames."""
        if frames.shape[0] < 1:
            raise DataError("need at least one frame")
        states, _ = self.gru(frames.unsqueeze(0))
        return self.project(states.squeeze(0))

    def context(
        self, encoded_frames: torch.Tensor, state: torch.Tensor,
        projected: torch.Tensor | None = None,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Per-step convex combination of the encoded frames."""
        return self.attention(encoded_frames, state, projected)


def segment_position_scalars(meta: SegmentMeta) -> np.ndarray:
    """(index/total, 1/total, start/duration, end/duration), all in [0, 1]."""
    if meta.duration_s <= 0:
        raise DataError("duration must be positive")
    return np.array(
        [
            meta.segment_index / meta.total_segments,
            1.0 / meta.total_segments,
            meta.start_s / meta.duration_s,
            meta.end_s / meta.duration_s,
        ],
        dtype=np.float64,
    )


class GlobalEncoder(nn.Module):
    """Mean-pooled frame features concatenated with the four segment-position
    scalars, linearly projected to the model width."""

    def __init__(self, temporal_dim: int, model_dim: int):
        super().__init__()
        self.project = nn.Linear(temporal_dim + 4, model_dim)

    def forward(self, frames: torch.Tensor, meta: SegmentMeta) -> torch.Tensor:
        scalars = torch.as_tensor(segment_position_scalars(meta), dtype=frames.dtype)
        pooled = frames.mean(dim=0)
        return self.project(torch.cat([pooled, scalars]))
