"""Box-overlay rendering for generated captions.

Without source video frames the boxes are drawn on blank canvases of the
segment's frame size. Each emitted word yields one PNG with the argmax
attention box; a JSON sidecar lists (word, box, weight, frame) per word.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .decoder import DecodeStep
from .regions import RegionSet

_CANVAS = (224, 224, 224)
_BOX = (0, 200, 0)


def render_overlays(
    tokens: list[str],
    steps: list[DecodeStep],
    regions: RegionSet,
    out_dir: str | Path,
    stem: str,
) -> Path:
    """Render one PNG per emitted word and return the JSON sidecar path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    side = []
    w, h = max(int(regions.frame_w), 1), max(int(regions.frame_h), 1)
    for i, (word, step) in enumerate(zip(tokens, steps)):
        alpha = step.alpha.detach().numpy()
        pred = int(np.argmax(alpha))
        box = [float(v) for v in regions.boxes[pred]]
        frame = int(regions.frame_of[pred])
        weight = float(alpha[pred])
        image = Image.new("RGB", (w, h), _CANVAS)
        draw = ImageDraw.Draw(image)
        draw.rectangle(box, outline=_BOX, width=2)
        draw.text((box[0] + 3, max(box[1] - 12, 0)), f"{word} ({weight:.2f})", fill=(180, 0, 0))
        image.save(out_dir / f"{stem}_{i:02d}_{word}.png")
        side.append({"word": word, "box": box, "weight": weight, "frame": frame})
    sidecar = out_dir / f"{stem}_overlay.json"
    sidecar.write_text(json.dumps(side, indent=2), encoding="utf-8")
    return sidecar
