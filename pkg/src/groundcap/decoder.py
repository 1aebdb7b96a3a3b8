"""Two-LSTM captioner with region/temporal attention, the four-term joint
loss, teacher forcing, and greedy/beam generation.

Decode step t consumes input token t (BOS, s1, ..., sT) and predicts target
token t (s1, ..., sT, EOS); a caption of T tokens therefore yields T+1 steps.
The supervision losses attach to the step whose *target* is the groundable
word, i.e. to the distributions in effect while generating that word.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .attention import AdditiveAttention, GlobalEncoder, TemporalEncoder
from .corpus import GroundedWord, SegmentMeta
from .errors import ConfigError, DataError
from .grounding import (
    LOG_EPS,
    ClassifierBank,
    GroundingEncoder,
    RegionContextEncoder,
)
from .regions import PositiveMatch, RegionSet


def _decode_step(
    y: torch.Tensor,
    h_a: torch.Tensor, c_a: torch.Tensor, h_l: torch.Tensor, c_l: torch.Tensor,
    global_vec: torch.Tensor,
    region_enc: torch.Tensor, region_proj: torch.Tensor,
    frames_enc: torch.Tensor, frames_proj: torch.Tensor,
    att_w_ih: torch.Tensor, att_w_hh: torch.Tensor,
    att_b_ih: torch.Tensor, att_b_hh: torch.Tensor,
    lang_w_ih: torch.Tensor, lang_w_hh: torch.Tensor,
    lang_b_ih: torch.Tensor, lang_b_hh: torch.Tensor,
    r_state_w: torch.Tensor, r_score_w: torch.Tensor,
    t_state_w: torch.Tensor, t_score_w: torch.Tensor,
    out_w: torch.Tensor, out_b: torch.Tensor,
):
    """One decode step: attention LSTM, region + temporal attention, language
    LSTM, word distribution. Weights are passed as tensors so the owning
    modules stay the single source of parameters."""
    att_in = torch.cat([h_l, global_vec.unsqueeze(0), y.unsqueeze(0)], dim=1)
    h_a, c_a = torch.lstm_cell(att_in, (h_a, c_a), att_w_ih, att_w_hh, att_b_ih, att_b_hh)
    hidden = h_a.squeeze(0)
    r_scores = torch.tanh(region_proj + hidden @ r_state_w.t()) @ r_score_w.t()
    alpha = torch.softmax(r_scores.squeeze(1), dim=0)
    region_ctx = alpha @ region_enc
    t_scores = torch.tanh(frames_proj + hidden @ t_state_w.t()) @ t_score_w.t()
    frame_weights = torch.softmax(t_scores.squeeze(1), dim=0)
    temporal_ctx = frame_weights @ frames_enc
    lang_in = torch.cat([h_a, temporal_ctx.unsqueeze(0), region_ctx.unsqueeze(0)], dim=1)
    h_l, c_l = torch.lstm_cell(lang_in, (h_l, c_l), lang_w_ih, lang_w_hh, lang_b_ih, lang_b_hh)
    log_probs = F.log_softmax((h_l @ out_w.t() + out_b).squeeze(0), dim=0)
    return h_a, c_a, h_l, c_l, log_probs, alpha, hidden


def _decode_loop(
    input_ids: torch.Tensor, embed_w: torch.Tensor,
    global_vec: torch.Tensor,
    region_enc: torch.Tensor, region_proj: torch.Tensor,
    frames_enc: torch.Tensor, frames_proj: torch.Tensor,
    att_w_ih: torch.Tensor, att_w_hh: torch.Tensor,
    att_b_ih: torch.Tensor, att_b_hh: torch.Tensor,
    lang_w_ih: torch.Tensor, lang_w_hh: torch.Tensor,
    lang_b_ih: torch.Tensor, lang_b_hh: torch.Tensor,
    r_state_w: torch.Tensor, r_score_w: torch.Tensor,
    t_state_w: torch.Tensor, t_score_w: torch.Tensor,
    out_w: torch.Tensor, out_b: torch.Tensor,
):
    """Teacher-forced decode: stacked (log_probs, alphas, hiddens)."""
    steps = input_ids.shape[0]
    m = att_w_hh.shape[1]
    h_a = torch.zeros(1, m, dtype=global_vec.dtype)
    c_a = torch.zeros(1, m, dtype=global_vec.dtype)
    h_l = torch.zeros(1, m, dtype=global_vec.dtype)
    c_l = torch.zeros(1, m, dtype=global_vec.dtype)
    ys = embed_w.index_select(0, input_ids)
    logps = []
    alphas = []
    hiddens = []
    for t in range(steps):
        h_a, c_a, h_l, c_l, log_probs, alpha, hidden = _decode_step(
            ys[t], h_a, c_a, h_l, c_l, global_vec,
            region_enc, region_proj, frames_enc, frames_proj,
            att_w_ih, att_w_hh, att_b_ih, att_b_hh,
            lang_w_ih, lang_w_hh, lang_b_ih, lang_b_hh,
            r_state_w, r_score_w, t_state_w, t_score_w, out_w, out_b,
        )
        logps.append(log_probs)
        alphas.append(alpha)
        hiddens.append(hidden)
    return torch.stack(logps), torch.stack(alphas), torch.stack(hiddens)


# TorchScript keeps the per-step loop fast on tiny tensors, where eager
# dispatch dominates; torch.compile's tracing model does not fit a
# data-dependent recurrent loop at this scale.
import warnings as _warnings

with _warnings.catch_warnings():
    _warnings.simplefilter("ignore", DeprecationWarning)
    _decode_step = torch.jit.script(_decode_step)
    _decode_loop = torch.jit.script(_decode_loop)


@dataclass
class ModelConfig:
    vocab_size: int
    num_classes: int
    region_dim: int = 64      # d
    embed_dim: int = 16       # e
    hidden_dim: int = 32      # m
    loc_dim: int = 300        # d_s
    temporal_dim: int = 32    # d_t
    dropout: float = 0.5
    encoder_layers: int = 2
    encoder_heads: int = 6
    encoder_dropout: float = 0.1
    self_attention: bool = True
    relu_after_encoding: bool = True
    max_decode_len: int = 20
    token_loss_average: str = "token"   # "token" or "sentence"

    def __post_init__(self):
        for name in ("vocab_size", "num_classes", "region_dim", "embed_dim",
                     "hidden_dim", "loc_dim", "temporal_dim", "encoder_layers",
                     "encoder_heads", "max_decode_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.hidden_dim % 2 != 0:
            raise ConfigError("hidden_dim must be even (Bi-GRU split)")
        if self.self_attention and self.hidden_dim % self.encoder_heads != 0:
            raise ConfigError(
                f"hidden_dim {self.hidden_dim} not divisible by {self.encoder_heads} heads"
            )
        if self.token_loss_average not in ("token", "sentence"):
            raise ConfigError("token_loss_average must be 'token' or 'sentence'")


def paper_dims() -> dict:
    """The full-scale dimension settings (usable with real detector features)."""
    return dict(region_dim=2048, embed_dim=512, hidden_dim=1024, loc_dim=300,
                temporal_dim=3072, encoder_heads=6, encoder_layers=2)


@dataclass(frozen=True)
class LambdaWeights:
    alpha: float = 0.0
    beta: float = 0.0
    c: float = 0.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.c < 0:
            raise ConfigError("loss weights must be non-negative")


@dataclass(frozen=True)
class SupervisionPreset:
    name: str
    lambdas: LambdaWeights
    self_attention: bool = True


# One preset per supervision configuration of the grounded-captioning ablation.
PRESETS: dict[str, SupervisionPreset] = {
    p.name: p
    for p in [
        SupervisionPreset("unsup-no-selfattn", LambdaWeights(0, 0, 0), self_attention=False),
        SupervisionPreset("unsup", LambdaWeights(0, 0, 0)),
        SupervisionPreset("sup-attn", LambdaWeights(alpha=0.05)),
        SupervisionPreset("sup-grd", LambdaWeights(beta=0.5)),
        SupervisionPreset("sup-cls", LambdaWeights(c=0.1)),
        SupervisionPreset("sup-attn-grd", LambdaWeights(alpha=0.5, beta=0.5)),
        SupervisionPreset("sup-attn-cls", LambdaWeights(alpha=0.05, c=0.1)),
        SupervisionPreset("sup-grd-cls", LambdaWeights(beta=0.05, c=0.1)),
        SupervisionPreset("sup-attn-grd-cls", LambdaWeights(alpha=0.1, beta=0.1, c=0.1)),
    ]
}


def get_preset(name: str) -> SupervisionPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown supervision preset {name!r}; known: {sorted(PRESETS)}")


@dataclass
class DecodeStep:
    """Per-timestep record shared by the losses and the grounding metrics."""

    t: int
    hidden: torch.Tensor            # attention-LSTM hidden state
    log_probs: torch.Tensor         # (V,) log word distribution
    alpha: torch.Tensor             # (N,) region attention weights
    beta: torch.Tensor | None       # (N,) grounding weights of the target class
    token: int                      # target token (teacher forcing) or emitted token
    class_id: int | None = None


@dataclass(frozen=True)
class LossBreakdown:
    sent: float
    attn: float
    cls: float
    grd: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return {"l_sent": self.sent, "l_attn": self.attn, "l_cls": self.cls,
                "l_grd": self.grd, "l_total": self.total}


def joint_loss(
    sent: torch.Tensor,
    attn: torch.Tensor,
    cls: torch.Tensor,
    grd: torch.Tensor,
    lambdas: LambdaWeights,
) -> tuple[torch.Tensor, LossBreakdown]:
    """Weighted sum of the four components, components retained for logging."""
    total = sent + lambdas.alpha * attn + lambdas.c * cls + lambdas.beta * grd
    s, a, c, g = (float(x.detach()) for x in (sent, attn, cls, grd))
    breakdown = LossBreakdown(
        sent=s, attn=a, cls=c, grd=g,
        total=s + lambdas.alpha * a + lambdas.c * c + lambdas.beta * g,
    )
    return total, breakdown


def sentence_loss(
    log_probs: torch.Tensor, targets: torch.Tensor, pad_id: int = 0
) -> torch.Tensor:
    """Mean negative log-likelihood of the targets over non-PAD timesteps."""
    keep = targets != pad_id
    if not bool(keep.any()):
        return log_probs.new_zeros(())
    picked = log_probs[torch.arange(len(targets)), targets]
    return -(picked[keep]).mean()


@dataclass
class GroundedStep:
    """A decode step whose target token is visually groundable."""

    step: int
    class_id: int
    gamma: np.ndarray                      # (N,) positives for this word's GT boxes
    positives: torch.Tensor | None = None  # derived index form; None when gamma is all-zero

    def __post_init__(self):
        if self.positives is None:
            idx = np.flatnonzero(self.gamma)
            self.positives = torch.as_tensor(idx, dtype=torch.long) if len(idx) else None


@dataclass
class PreparedExample:
    """A segment tensorized for the captioner, supervision targets included."""

    segment_id: str
    input_ids: torch.Tensor          # (T+1,) BOS, s1..sT
    target_ids: torch.Tensor         # (T+1,) s1..sT, EOS
    grounded: list[GroundedStep]
    cls_match: PositiveMatch         # positives over all GT boxes of the segment
    features: torch.Tensor           # (N, d)
    locations: torch.Tensor          # (N, 5)
    temporal: torch.Tensor           # (F_t, d_t)
    meta: SegmentMeta
    regions: RegionSet | None = None
    reference: tuple[str, ...] = ()
    words: tuple[GroundedWord, ...] = ()   # annotation-side records for metrics

    # derived tensors, filled in __post_init__
    cls_positives: torch.Tensor | None = None
    cls_classes: torch.Tensor | None = None
    ids_validated: bool = False

    def __post_init__(self):
        pos = self.cls_match.positive_indices
        if len(pos):
            self.cls_positives = torch.as_tensor(pos, dtype=torch.long)
            self.cls_classes = torch.as_tensor(self.cls_match.class_ids[pos], dtype=torch.long)


@dataclass
class SegmentLosses:
    sent: torch.Tensor
    attn_words: list[torch.Tensor] = field(default_factory=list)
    grd_words: list[torch.Tensor] = field(default_factory=list)
    cls_neg_logs: torch.Tensor | None = None


@dataclass
class SegmentEncodings:
    """Per-segment tensors that do not depend on the decode step."""

    base: torch.Tensor         # (K, N) class logits (pre-softmax)
    similarity: torch.Tensor   # (K, N) column-stochastic
    region_enc: torch.Tensor   # (N, m) context-encoded regions
    frames_enc: torch.Tensor   # (F_t, m)
    global_vec: torch.Tensor   # (m,)
    region_proj: torch.Tensor | None = None   # cached attention projections
    frames_proj: torch.Tensor | None = None


class GroundedCaptioner(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        m, e, d = config.hidden_dim, config.embed_dim, config.region_dim
        self.embed = nn.Embedding(config.vocab_size, e)
        self.bank = ClassifierBank(d, config.num_classes, config.dropout)
        self.ground_enc = GroundingEncoder(
            d, config.num_classes, config.loc_dim, m,
            dropout=config.dropout, relu_after=config.relu_after_encoding,
        )
        self.context_enc = (
            RegionContextEncoder(m, config.encoder_layers, config.encoder_heads,
                                 config.encoder_dropout)
            if config.self_attention else None
        )
        self.region_attn = AdditiveAttention(m)
        self.temporal = TemporalEncoder(config.temporal_dim, m)
        self.global_enc = GlobalEncoder(config.temporal_dim, m)
        self.att_lstm = nn.LSTMCell(m + m + e, m)
        self.lang_lstm = nn.LSTMCell(3 * m, m)
        self.out_proj = nn.Linear(m, config.vocab_size)

    # -- encoding ---------------------------------------------------------

    def encode_regions(
        self, features: torch.Tensor, locations: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Returns (base class logits (K,N), similarity (K,N), encoded (N,m))."""
        base = self.bank.base_logits(features)
        similarity = torch.softmax(base, dim=0)
        encoded = self.ground_enc(features, similarity, locations)
        if self.context_enc is not None:
            encoded = self.context_enc(encoded)
        return base, similarity, encoded

    def _init_state(self, dtype, device):
        m = self.config.hidden_dim
        z = torch.zeros(1, m, dtype=dtype, device=device)
        return (z, z.clone()), (z.clone(), z.clone())

    def _step_weights(self) -> tuple[torch.Tensor, ...]:
        return (
            self.att_lstm.weight_ih, self.att_lstm.weight_hh,
            self.att_lstm.bias_ih, self.att_lstm.bias_hh,
            self.lang_lstm.weight_ih, self.lang_lstm.weight_hh,
            self.lang_lstm.bias_ih, self.lang_lstm.bias_hh,
            self.region_attn.state_map.weight, self.region_attn.score.weight,
            self.temporal.attention.state_map.weight, self.temporal.attention.score.weight,
            self.out_proj.weight, self.out_proj.bias,
        )

    def _step(self, token: torch.Tensor, enc: SegmentEncodings, state):
        (h_a, c_a), (h_l, c_l) = state
        h_a, c_a, h_l, c_l, log_probs, alpha, hidden = _decode_step(
            self.embed.weight[token], h_a, c_a, h_l, c_l, enc.global_vec,
            enc.region_enc, enc.region_proj, enc.frames_enc, enc.frames_proj,
            *self._step_weights(),
        )
        return ((h_a, c_a), (h_l, c_l)), hidden, log_probs, alpha

    def _run_teacher_loop(self, ex: PreparedExample, enc: SegmentEncodings):
        """Stacked (log_probs, alphas, hiddens) over the teacher-forced steps."""
        return _decode_loop(
            ex.input_ids, self.embed.weight, enc.global_vec,
            enc.region_enc, enc.region_proj, enc.frames_enc, enc.frames_proj,
            *self._step_weights(),
        )

    # -- teacher forcing ---------------------------------------------------

    def _encode_raw(self, features, locations, temporal, meta) -> SegmentEncodings:
        base, similarity, region_enc = self.encode_regions(features, locations)
        frames_enc = self.temporal.encode(temporal)
        return SegmentEncodings(
            base=base,
            similarity=similarity,
            region_enc=region_enc,
            frames_enc=frames_enc,
            global_vec=self.global_enc(temporal, meta),
            region_proj=self.region_attn.project_items(region_enc),
            frames_proj=self.temporal.attention.project_items(frames_enc),
        )

    def encode_segment(self, ex: PreparedExample) -> SegmentEncodings:
        return self._encode_raw(ex.features, ex.locations, ex.temporal, ex.meta)

    def _with_projections(self, enc: SegmentEncodings) -> SegmentEncodings:
        if enc.region_proj is None:
            enc.region_proj = self.region_attn.project_items(enc.region_enc)
        if enc.frames_proj is None:
            enc.frames_proj = self.temporal.attention.project_items(enc.frames_enc)
        return enc

    def _validate_ids(self, ex: PreparedExample) -> None:
        if ex.ids_validated:
            return
        if int(ex.input_ids.max()) >= self.config.vocab_size or int(ex.input_ids.min()) < 0:
            raise DataError("token id out of vocabulary range")
        ex.ids_validated = True

    def _word_beta(self, enc: SegmentEncodings, alpha: torch.Tensor, class_id: int):
        """Grounding weights for one class: the row-wise softmax of the
        conditioned similarity only needs that class's logit row."""
        return torch.softmax(enc.base[class_id] + alpha, dim=0)

    def decode_steps(
        self, ex: PreparedExample, enc: SegmentEncodings
    ) -> list[DecodeStep]:
        self._validate_ids(ex)
        enc = self._with_projections(enc)
        logps, alphas, hiddens = self._run_teacher_loop(ex, enc)
        by_step = {g.step: g for g in ex.grounded}
        steps: list[DecodeStep] = []
        for t in range(len(ex.input_ids)):
            beta = None
            class_id = None
            if t in by_step:
                class_id = by_step[t].class_id
                beta = self._word_beta(enc, alphas[t], class_id)
            steps.append(DecodeStep(
                t=t, hidden=hiddens[t], log_probs=logps[t], alpha=alphas[t], beta=beta,
                token=int(ex.target_ids[t]), class_id=class_id,
            ))
        return steps

    def teacher_forced_pass(self, ex: PreparedExample) -> list[DecodeStep]:
        """Run the ground-truth token sequence through the decoder, recording
        attention for every step and grounding weights for groundable steps."""
        return self.decode_steps(ex, self.encode_segment(ex))

    def segment_losses(
        self, ex: PreparedExample, pad_id: int = 0,
        encodings: SegmentEncodings | None = None,
    ) -> SegmentLosses:
        self._validate_ids(ex)
        enc = self._with_projections(
            encodings if encodings is not None else self.encode_segment(ex)
        )
        logps, alphas, _ = self._run_teacher_loop(ex, enc)
        sent = sentence_loss(logps, ex.target_ids, pad_id)
        if self.config.token_loss_average == "sentence":
            sent = sent * float((ex.target_ids != pad_id).sum())
        out = SegmentLosses(sent=sent)
        for g in ex.grounded:
            if g.positives is None:
                continue  # no proposal passes the IoU bar: word excluded
            alpha = alphas[g.step]
            out.attn_words.append(-(alpha[g.positives].clamp_min(LOG_EPS).log()).sum())
            beta = self._word_beta(enc, alpha, g.class_id)
            out.grd_words.append(-(beta[g.positives].clamp_min(LOG_EPS).log()).sum())
        if ex.cls_positives is not None:
            probs = enc.similarity[ex.cls_classes, ex.cls_positives]
            out.cls_neg_logs = -(probs.clamp_min(LOG_EPS).log())
        return out

    def batch_components(
        self, batch: list[PreparedExample], pad_id: int = 0
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
        """The four loss components (sent, attn, cls, grd) over a batch.

        The sentence loss averages per sentence; the attention/grounding
        losses average over all counted groundable words in the batch, and the
        classification loss over all positive regions in the batch.
        """
        if not batch:
            raise DataError("empty batch")
        zero = batch[0].features.new_zeros(())
        per_segment = [self.segment_losses(ex, pad_id) for ex in batch]
        sent = torch.stack([s.sent for s in per_segment]).mean()
        attn_words = [w for s in per_segment for w in s.attn_words]
        grd_words = [w for s in per_segment for w in s.grd_words]
        cls_logs = [s.cls_neg_logs for s in per_segment if s.cls_neg_logs is not None]
        attn = torch.stack(attn_words).mean() if attn_words else zero
        grd = torch.stack(grd_words).mean() if grd_words else zero
        cls = torch.cat(cls_logs).mean() if cls_logs else zero
        return sent, attn, cls, grd

    def compute_losses(
        self, batch: list[PreparedExample], lambdas: LambdaWeights, pad_id: int = 0
    ) -> tuple[torch.Tensor, LossBreakdown]:
        """Joint loss over a batch; components retained in the breakdown."""
        sent, attn, cls, grd = self.batch_components(batch, pad_id)
        return joint_loss(sent, attn, cls, grd, lambdas)

    # -- generation --------------------------------------------------------

    def generate(
        self,
        features: torch.Tensor,
        locations: torch.Tensor,
        temporal: torch.Tensor,
        meta: SegmentMeta,
        mode: str = "greedy",
        beam_width: int = 1,
        max_len: int | None = None,
        bos_id: int = 1,
        eos_id: int = 2,
    ) -> tuple[list[int], list[DecodeStep]]:
        """Decode a caption; stops at EOS or max_len. The returned steps carry
        one attention record per emitted token (the EOS step is dropped)."""
        if mode not in ("greedy", "beam"):
            raise ConfigError(f"unknown decoding mode {mode!r}")
        if max_len is None:
            max_len = self.config.max_decode_len
        if max_len < 1:
            raise ConfigError("max_len must be >= 1")
        enc = self._encode_raw(features, locations, temporal, meta)
        if mode == "beam":
            if beam_width < 1:
                raise ConfigError("beam width must be >= 1")
            return self._beam_search(enc, features, beam_width, max_len, bos_id, eos_id)

        state = self._init_state(features.dtype, features.device)
        tokens: list[int] = []
        steps: list[DecodeStep] = []
        prev = torch.tensor(bos_id, dtype=torch.long)
        for t in range(max_len):
            state, h_a, log_probs, alpha = self._step(prev, enc, state)
            token = int(torch.argmax(log_probs))
            if token == eos_id:
                break
            tokens.append(token)
            steps.append(DecodeStep(t=t, hidden=h_a, log_probs=log_probs,
                                    alpha=alpha, beta=None, token=token))
            prev = torch.tensor(token, dtype=torch.long)
        return tokens, steps

    def _beam_search(self, enc: SegmentEncodings, features, width, max_len, bos_id, eos_id):
        # hypothesis: (tokens, steps, logprob_sum, state)
        live = [([], [], 0.0, self._init_state(features.dtype, features.device))]
        done = []
        for t in range(max_len + 1):
            expansions = []
            for tokens, steps, score, state in live:
                if len(tokens) == max_len:
                    done.append((tokens, steps, score, len(tokens) + 1))
                    continue
                prev = torch.tensor(tokens[-1] if tokens else bos_id, dtype=torch.long)
                new_state, h_a, log_probs, alpha = self._step(prev, enc, state)
                top = torch.topk(log_probs, min(width, len(log_probs)))
                for lp, tok in zip(top.values.tolist(), top.indices.tolist()):
                    if tok == eos_id:
                        done.append((tokens, steps, score + lp, len(tokens) + 1))
                    else:
                        step = DecodeStep(t=len(tokens), hidden=h_a, log_probs=log_probs,
                                          alpha=alpha, beta=None, token=tok)
                        expansions.append((tokens + [tok], steps + [step],
                                           score + lp, new_state))
            expansions.sort(key=lambda h: (-h[2], h[0]))
            live = expansions[:width]
            if not live:
                break
        for tokens, steps, score, state in live:  # length cap reached
            done.append((tokens, steps, score, len(tokens) + 1))
        done.sort(key=lambda h: (-(h[2] / h[3]), h[0]))  # length-normalized score
        best = done[0]
        return best[0], best[1]


def create_model(config: ModelConfig, seed: int = 0) -> GroundedCaptioner:
    """Seeded double-precision model; double precision keeps checkpoint
    round-trips exact and gradient checks meaningful."""
    torch.manual_seed(seed)
    return GroundedCaptioner(config).double()


# --------------------------------------------------------------------------
# checkpoints: JSON manifest + named tensors as raw little-endian binary

_CKPT_MAGIC = b"GCCKPT01"


def save_checkpoint(
    model: GroundedCaptioner,
    path: str | Path,
    vocab_hash: str = "",
    class_hash: str = "",
    lambda_preset: str = "",
    extra: dict | None = None,
) -> None:
    state = model.state_dict()
    names = sorted(state)
    tensors = []
    blobs = []
    offset = 0
    for name in names:
        arr = state[name].detach().cpu().numpy()
        dtype = arr.dtype.newbyteorder("<")
        raw = np.ascontiguousarray(arr, dtype=dtype).tobytes(order="C")
        tensors.append({"name": name, "dtype": dtype.str, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    manifest = {
        "format_version": 1,
        "model_config": asdict(model.config),
        "vocab_hash": vocab_hash,
        "class_hash": class_hash,
        "lambda_preset": lambda_preset,
        "tensors": tensors,
    }
    if extra:
        manifest["extra"] = extra
    header = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path: str | Path) -> tuple[GroundedCaptioner, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise DataError(f"{path}: not a checkpoint file")
        header_len = int.from_bytes(fh.read(8), "little")
        manifest = json.loads(fh.read(header_len).decode("utf-8"))
        payload = fh.read()
    config = ModelConfig(**manifest["model_config"])
    model = GroundedCaptioner(config).double()
    state = {}
    for entry in manifest["tensors"]:
        raw = payload[entry["offset"]: entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])
        state[entry["name"]] = torch.as_tensor(arr.copy())
    model.load_state_dict(state)
    return model, manifest
