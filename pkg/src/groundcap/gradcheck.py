"""Finite-difference verification of the joint loss gradients.

Central differences (step 1e-5, double precision, dropout off) over every
scalar parameter, compared against the backward-pass gradients. The four loss
components are measured in the same evaluations and combined per supervision
preset afterwards, which is arithmetically identical to sweeping each preset
separately since the joint loss is linear in its components.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .corpus import SegmentMeta
from .decoder import (
    GroundedCaptioner,
    GroundedStep,
    ModelConfig,
    PreparedExample,
    PRESETS,
    SegmentEncodings,
    create_model,
    get_preset,
)
from .errors import GroundcapError
from .regions import BoundingBox, RegionSet, location_features, match_positives

COMPONENTS = ("sent", "attn", "cls", "grd")
DEFAULT_STEP = 1e-5
DEFAULT_THRESHOLD = 1e-4

# stage each module feeds into, for selective recomputation during the sweep
_REGION_STAGE = ("bank", "ground_enc", "context_enc", "region_attn.item_map")
_FRAME_STAGE = ("temporal.gru", "temporal.project", "temporal.attention.item_map")
_GLOBAL_STAGE = ("global_enc",)


def tiny_config(self_attention: bool = True) -> ModelConfig:
    """The gradient-check instance: N=6, K=5, F=2, T=4, m=16, e=8."""
    return ModelConfig(
        vocab_size=12,
        num_classes=5,
        region_dim=8,
        embed_dim=8,
        hidden_dim=16,
        loc_dim=5,
        temporal_dim=6,
        dropout=0.0,
        encoder_layers=2,
        encoder_heads=4,   # 16 is not divisible by the default 6 heads
        encoder_dropout=0.0,
        self_attention=self_attention,
        max_decode_len=8,
    )


def tiny_instance(seed: int = 0) -> PreparedExample:
    """One segment with 2 frames x 3 regions, a 4-token caption, and two
    groundable words whose GT boxes coincide with planted regions."""
    rng = np.random.default_rng(seed)
    boxes = []
    frame_of = []
    for f in range(2):
        for slot in range(3):
            boxes.append((slot * 120.0 + 10, 40.0, slot * 120.0 + 100, 200.0))
            frame_of.append(f)
    regions = RegionSet(
        num_frames=2,
        frame_of=np.array(frame_of),
        boxes=np.array(boxes),
        conf=rng.uniform(0.5, 1.0, size=6),
        features=rng.normal(0.0, 1.0, size=(6, 8)),
        frame_w=360.0,
        frame_h=240.0,
    )
    gt = [
        (BoundingBox(*boxes[1]), 0, 0),   # word at step 1 -> region 1 on frame 0
        (BoundingBox(*boxes[4]), 1, 1),   # word at step 3 -> region 4 on frame 1
    ]
    grounded = [
        GroundedStep(step=1, class_id=0, gamma=match_positives(regions, gt[:1]).gamma),
        GroundedStep(step=3, class_id=1, gamma=match_positives(regions, gt[1:]).gamma),
    ]
    return PreparedExample(
        segment_id="tiny_0",
        input_ids=torch.tensor([1, 4, 5, 6, 7]),
        target_ids=torch.tensor([4, 5, 6, 7, 2]),
        grounded=grounded,
        cls_match=match_positives(regions, gt),
        features=torch.as_tensor(regions.features),
        locations=torch.as_tensor(location_features(regions)),
        temporal=torch.as_tensor(rng.normal(0.0, 1.0, size=(2, 6))),
        meta=SegmentMeta(total_segments=2, segment_index=0, start_s=0.0, end_s=5.0,
                         duration_s=10.0),
        regions=regions,
    )


@dataclass
class GradCheckReport:
    seed: int
    step: float
    threshold: float
    per_preset: dict[str, dict[str, float]]   # preset -> parameter group -> max rel err
    runtime_s: float = 0.0
    components: dict[str, float] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max((e for groups in self.per_preset.values() for e in groups.values()),
                   default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.threshold

    def summary(self) -> str:
        lines = [f"gradcheck seed={self.seed} step={self.step:g} "
                 f"threshold={self.threshold:g} runtime={self.runtime_s:.1f}s"]
        for preset, groups in self.per_preset.items():
            worst = max(groups.values())
            verdict = "ok" if worst < self.threshold else "FAIL"
            lines.append(f"  {preset:<20} max rel err {worst:.3e}  [{verdict}]")
        lines.append(f"  global max rel err {self.max_error:.3e} "
                     f"-> {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def _group_of(name: str) -> str:
    return name.split(".")[0]


def _relative_error(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    if scale < 1e-8:
        return 0.0
    return abs(a - b) / max(scale, 1e-6)


class _StagedEvaluator:
    """Evaluates the four loss components, recomputing only the stages a
    perturbed parameter can influence."""

    def __init__(self, model: GroundedCaptioner, ex: PreparedExample):
        self.model = model
        self.ex = ex
        self.refresh_all()

    def refresh_all(self):
        self._refresh_regions()
        self._refresh_frames()
        self._refresh_global()

    def _refresh_regions(self):
        base, sim, region_enc = self.model.encode_regions(self.ex.features, self.ex.locations)
        self.base, self.similarity, self.region_enc = base, sim, region_enc
        self.region_proj = self.model.region_attn.project_items(region_enc)

    def _refresh_frames(self):
        self.frames_enc = self.model.temporal.encode(self.ex.temporal)
        self.frames_proj = self.model.temporal.attention.project_items(self.frames_enc)

    def _refresh_global(self):
        self.global_vec = self.model.global_enc(self.ex.temporal, self.ex.meta)

    def refresh_stage(self, param_name: str):
        if param_name.startswith(_REGION_STAGE):
            self._refresh_regions()
        elif param_name.startswith(_FRAME_STAGE):
            self._refresh_frames()
        elif param_name.startswith(_GLOBAL_STAGE):
            self._refresh_global()

    def components(self) -> np.ndarray:
        enc = SegmentEncodings(self.base, self.similarity, self.region_enc,
                               self.frames_enc, self.global_vec,
                               self.region_proj, self.frames_proj)
        losses = self.model.segment_losses(self.ex, encodings=enc)
        zero = 0.0
        attn = float(torch.stack(losses.attn_words).mean()) if losses.attn_words else zero
        grd = float(torch.stack(losses.grd_words).mean()) if losses.grd_words else zero
        cls = float(losses.cls_neg_logs.mean()) if losses.cls_neg_logs is not None else zero
        return np.array([float(losses.sent), attn, cls, grd])


def _analytic_component_grads(
    model: GroundedCaptioner, ex: PreparedExample
) -> dict[str, dict[str, np.ndarray]]:
    params = dict(model.named_parameters())
    names = list(params)
    tensors = [params[n] for n in names]
    sent, attn, cls, grd = model.batch_components([ex])
    out: dict[str, dict[str, np.ndarray]] = {}
    for comp_name, comp in zip(COMPONENTS, (sent, attn, cls, grd)):
        if comp.grad_fn is None:   # component is a constant (no counted words)
            grads = [None] * len(tensors)
        else:
            grads = torch.autograd.grad(comp, tensors, retain_graph=True,
                                        allow_unused=True)
        out[comp_name] = {
            n: (np.zeros(p.shape).ravel() if g is None else g.detach().numpy().ravel().copy())
            for n, p, g in zip(names, tensors, grads)
        }
    return out


def _fd_component_grads(
    model: GroundedCaptioner, ex: PreparedExample, step: float
) -> dict[str, dict[str, np.ndarray]]:
    out = {c: {} for c in COMPONENTS}
    with torch.inference_mode():
        evaluator = _StagedEvaluator(model, ex)
        for name, param in model.named_parameters():
            flat = param.view(-1)
            fd = np.zeros((len(COMPONENTS), flat.numel()))
            for i in range(flat.numel()):
                original = float(flat[i])
                flat[i] = original + step
                evaluator.refresh_stage(name)
                plus = evaluator.components()
                flat[i] = original - step
                evaluator.refresh_stage(name)
                minus = evaluator.components()
                flat[i] = original
                fd[:, i] = (plus - minus) / (2.0 * step)
            evaluator.refresh_stage(name)
            for k, comp in enumerate(COMPONENTS):
                out[comp][name] = fd[k]
    return out


def finite_diff_check(
    seed: int = 0,
    step: float = DEFAULT_STEP,
    threshold: float = DEFAULT_THRESHOLD,
    preset_names: list[str] | None = None,
) -> GradCheckReport:
    """Compare analytic and central-difference gradients of the joint loss for
    every parameter group under every requested supervision preset."""
    torch.set_num_threads(1)
    start = time.perf_counter()
    names = preset_names if preset_names is not None else list(PRESETS)
    presets = [get_preset(n) for n in names]
    ex = tiny_instance(seed)

    per_preset: dict[str, dict[str, float]] = {}
    components: dict[str, float] = {}
    for self_attention in sorted({p.self_attention for p in presets}, reverse=True):
        model = create_model(tiny_config(self_attention), seed)
        model.eval()
        analytic = _analytic_component_grads(model, ex)
        fd = _fd_component_grads(model, ex, step)
        if not all(np.isfinite(g).all() for by in analytic.values() for g in by.values()):
            raise GroundcapError("non-finite analytic gradient")
        if self_attention:
            with torch.no_grad():
                for comp, value in zip(COMPONENTS, _StagedEvaluator(model, ex).components()):
                    components[comp] = float(value)
        for preset in presets:
            if preset.self_attention != self_attention:
                continue
            lam = preset.lambdas
            weights = {"sent": 1.0, "attn": lam.alpha, "cls": lam.c, "grd": lam.beta}
            groups: dict[str, float] = {}
            for name in analytic["sent"]:
                a = sum(weights[c] * analytic[c][name] for c in COMPONENTS)
                f = sum(weights[c] * fd[c][name] for c in COMPONENTS)
                if not np.isfinite(f).all():
                    raise GroundcapError(f"non-finite finite-difference gradient in {name}")
                err = max((_relative_error(x, y) for x, y in zip(a, f)), default=0.0)
                group = _group_of(name)
                groups[group] = max(groups.get(group, 0.0), err)
            per_preset[preset.name] = groups

    return GradCheckReport(
        seed=seed,
        step=step,
        threshold=threshold,
        per_preset={n: per_preset[n] for n in names},
        runtime_s=time.perf_counter() - start,
        components=components,
    )
