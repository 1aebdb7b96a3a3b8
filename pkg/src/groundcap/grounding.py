"""Region-class similarity, grounding-aware region encoding, and the
classification / grounding losses.

Shape conventions: region features are (N, d) rows; similarity matrices are
(K, N) with column-stochastic base similarity and row-stochastic conditioned
similarity.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, DataError
from .regions import PositiveMatch

log = logging.getLogger(__name__)

LOG_EPS = 1e-12  # clamp before logs, for numerical safety


class ClassifierBank(nn.Module):
    """A bank of per-class region classifiers (weight matrix d x K, bias K)."""

    def __init__(self, region_dim: int, num_classes: int, dropout: float = 0.5):
        super().__init__()
        self.region_dim = region_dim
        self.num_classes = num_classes
        self.weight = nn.Parameter(torch.randn(region_dim, num_classes) * 0.02)
        self.bias = nn.Parameter(torch.zeros(num_classes))
        self.dropout = nn.Dropout(dropout)

    def base_logits(self, features: torch.Tensor) -> torch.Tensor:
        """ReLU'd class scores (K, N) for (N, d) features, plus bias.

        Dropout applies in training mode only; one call per segment pass keeps
        a single mask shared by the similarity and conditioned-similarity uses.
        """
        if features.shape[1] != self.region_dim:
            raise ConfigError(
                f"feature dim {features.shape[1]} != classifier dim {self.region_dim}"
            )
        if not torch.isfinite(features).all():
            raise DataError("non-finite region features")
        scores = F.relu(features @ self.weight).transpose(0, 1)  # (K, N)
        scores = self.dropout(scores)
        return scores + self.bias.unsqueeze(1)

    def similarity(self, features: torch.Tensor) -> torch.Tensor:
        """Region-class similarity matrix (K, N); each column sums to 1."""
        return torch.softmax(self.base_logits(features), dim=0)

    def conditioned_similarity(
        self, features: torch.Tensor, alpha: torch.Tensor
    ) -> torch.Tensor:
        """Similarity conditioned on attention weights; each row sums to 1.

        The attention vector is added identically to every class row in logit
        space, so the result is invariant to constant shifts of alpha.
        """
        return self.conditioned_from_base(self.base_logits(features), alpha)

    @staticmethod
    def conditioned_from_base(base_logits: torch.Tensor, alpha: torch.Tensor) -> torch.Tensor:
        if alpha.shape[0] != base_logits.shape[1]:
            raise ConfigError(
                f"attention length {alpha.shape[0]} != region count {base_logits.shape[1]}"
            )
        return torch.softmax(base_logits + alpha.unsqueeze(0), dim=1)

    def load_arrays(self, weight: np.ndarray, bias: np.ndarray) -> None:
        with torch.no_grad():
            self.weight.copy_(torch.as_tensor(weight, dtype=self.weight.dtype))
            self.bias.copy_(torch.as_tensor(bias, dtype=self.bias.dtype))


def region_class_similarity(
    features: torch.Tensor, bank: ClassifierBank, train_mode: bool = False
) -> torch.Tensor:
    """Functional wrapper: column-stochastic (K, N) similarity matrix."""
    was_training = bank.training
    bank.train(train_mode)
    try:
        return bank.similarity(features)
    finally:
        bank.train(was_training)


def classification_loss(similarity: torch.Tensor, match: PositiveMatch) -> torch.Tensor:
    """Mean cross-entropy over positive regions; 0 when there are none."""
    pos = match.positive_indices
    if len(pos) == 0:
        return similarity.new_zeros(())
    classes = torch.as_tensor(match.class_ids[pos], dtype=torch.long)
    probs = similarity[classes, torch.as_tensor(pos, dtype=torch.long)]
    if bool((probs < LOG_EPS).any()):
        log.warning("classification_loss: probability clamped at %g", LOG_EPS)
    return -(probs.clamp_min(LOG_EPS).log()).mean()


def grounding_loss(
    conditioned: torch.Tensor, class_id: int, gamma: np.ndarray
) -> torch.Tensor:
    """Negative log mass of one class row on its positive regions.

    Returns 0 for an all-zero gamma; the caller excludes such words from the
    per-word average.
    """
    row = conditioned[class_id]
    if len(gamma) != row.shape[0]:
        raise ConfigError(f"gamma length {len(gamma)} != region count {row.shape[0]}")
    pos = np.flatnonzero(gamma)
    if len(pos) == 0:
        return conditioned.new_zeros(())
    probs = row[torch.as_tensor(pos, dtype=torch.long)]
    if bool((probs < LOG_EPS).any()):
        log.warning("grounding_loss: probability clamped at %g", LOG_EPS)
    return -(probs.clamp_min(LOG_EPS).log()).sum()


class GroundingEncoder(nn.Module):
    """Projects [feature | class similarity | location embedding] rows to the
    model width, making the region encoding grounding-aware."""

    def __init__(
        self,
        region_dim: int,
        num_classes: int,
        loc_dim: int,
        model_dim: int,
        dropout: float = 0.5,
        relu_after: bool = True,
    ):
        super().__init__()
        self.loc_proj = nn.Linear(5, loc_dim)
        self.project = nn.Linear(region_dim + num_classes + loc_dim, model_dim, bias=False)
        self.relu_after = relu_after
        self.dropout = nn.Dropout(dropout)

    def forward(
        self, features: torch.Tensor, similarity: torch.Tensor, locations: torch.Tensor
    ) -> torch.Tensor:
        if features.shape[0] != similarity.shape[1] or features.shape[0] != locations.shape[0]:
            raise ConfigError("features, similarity and locations disagree on N")
        stacked = torch.cat([features, similarity.transpose(0, 1), self.loc_proj(locations)], dim=1)
        encoded = self.project(stacked)
        if self.relu_after:
            encoded = self.dropout(F.relu(encoded))
        return encoded


class SelfAttentionLayer(nn.Module):
    """One post-norm transformer encoder layer (multi-head self-attention and
    a two-layer feed-forward block, both with residuals)."""

    def __init__(self, dim: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.out = nn.Linear(dim, dim)
        self.ff1 = nn.Linear(dim, 2 * dim)
        self.ff2 = nn.Linear(2 * dim, dim)
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)
        self.dropout = nn.Dropout(dropout)
        self.scale = self.head_dim ** -0.5

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        n, dim = x.shape
        qkv = self.qkv(x).reshape(n, 3, self.heads, self.head_dim).permute(1, 2, 0, 3)
        q, k, v = qkv[0], qkv[1], qkv[2]                    # (H, N, head_dim)
        weights = torch.softmax(q @ k.transpose(-2, -1) * self.scale, dim=-1)
        context = (weights @ v).transpose(0, 1).reshape(n, dim)
        x = self.norm1(x + self.dropout(self.out(context)))
        return self.norm2(x + self.dropout(self.ff2(F.relu(self.ff1(x)))))


class RegionContextEncoder(nn.Module):
    """Self-attention stack over region encodings (no positional encoding:
    location is already part of the grounding-aware encoding)."""

    def __init__(self, model_dim: int, layers: int = 2, heads: int = 6, dropout: float = 0.1):
        super().__init__()
        if model_dim % heads != 0:
            raise ConfigError(f"model width {model_dim} not divisible by {heads} heads")
        self.layers = nn.ModuleList(
            SelfAttentionLayer(model_dim, heads, dropout) for _ in range(layers)
        )

    def forward(self, encoded: torch.Tensor) -> torch.Tensor:
        if encoded.shape[0] < 1:
            raise DataError("need at least one region")
        for layer in self.layers:
            encoded = layer(encoded)
        return encoded


# --------------------------------------------------------------------------
# classifier transfer from a source detector

@dataclass
class SourceClassifiers:
    names: list[str]
    weights: np.ndarray   # (d, K_src)
    biases: np.ndarray    # (K_src,)


def read_embedding_table(path) -> dict[str, np.ndarray]:
    """Whitespace-separated `word v1 ... vD` text format."""
    table: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if len(parts) < 2:
                continue
            table[parts[0]] = np.asarray([float(v) for v in parts[1:]], dtype=np.float64)
    return table


def init_classifier_transfer(
    class_names: list[str] | tuple[str, ...],
    embeddings: dict[str, np.ndarray] | None,
    source: SourceClassifiers | None,
    region_dim: int,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Initial (weight, bias) arrays for a classifier bank.

    Each target class copies the classifier of its nearest source class by
    Euclidean distance in the embedding space. Classes without a usable match
    (or when no source is given) fall back to seeded random init, std 0.02.
    """
    rng = np.random.default_rng(seed)
    k = len(class_names)
    weight = rng.normal(0.0, 0.02, size=(region_dim, k))
    bias = np.zeros(k)
    if source is None or embeddings is None:
        return weight, bias
    if source.weights.shape[0] != region_dim:
        raise ConfigError(
            f"source classifier dim {source.weights.shape[0]} != region dim {region_dim}"
        )
    source_vecs = [(j, embeddings[n]) for j, n in enumerate(source.names) if n in embeddings]
    if not source_vecs:
        return weight, bias
    for i, name in enumerate(class_names):
        if name not in embeddings:
            continue
        target = embeddings[name]
        dists = [(float(np.linalg.norm(target - vec)), j) for j, vec in source_vecs]
        _, j = min(dists)
        weight[:, i] = source.weights[:, j]
        bias[i] = source.biases[j]
    return weight, bias
