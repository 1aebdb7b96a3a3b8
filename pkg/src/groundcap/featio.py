"""Binary feature files: `.feat` (region features) and `.tfeat` (frame features).

Both use the same convention: a JSON sidecar (`<name>.feat.json`) describing
shapes and box metadata, next to a raw little-endian row-major float32 matrix.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataError
from .regions import RegionSet


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def _write_matrix(path: Path, matrix: np.ndarray) -> None:
    data = np.ascontiguousarray(matrix, dtype="<f4")
    path.write_bytes(data.tobytes(order="C"))


def _read_matrix(path: Path, n: int, d: int) -> np.ndarray:
    raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    if raw.size != n * d:
        raise DataError(f"{path}: expected {n}x{d} float32 values, found {raw.size}")
    return raw.reshape(n, d).astype(np.float64)


def save_region_set(regions: RegionSet, path: str | Path) -> None:
    path = Path(path)
    meta = {
        "n": regions.n,
        "d": regions.feature_dim,
        "f": regions.num_frames,
        "frames": [int(x) for x in regions.frame_of],
        "boxes": [[float(v) for v in row] for row in regions.boxes],
        "conf": [float(x) for x in regions.conf],
        "frame_w": float(regions.frame_w),
        "frame_h": float(regions.frame_h),
    }
    _sidecar(path).write_text(json.dumps(meta, separators=(",", ":")) + "\n", encoding="utf-8")
    _write_matrix(path, regions.features)


def load_region_set(path: str | Path) -> RegionSet:
    path = Path(path)
    sidecar = _sidecar(path)
    if not path.exists() or not sidecar.exists():
        raise DataError(f"missing region feature file or sidecar for {path}")
    try:
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
        n, d, f = int(meta["n"]), int(meta["d"]), int(meta["f"])
        regions = RegionSet(
            num_frames=f,
            frame_of=np.asarray(meta["frames"], dtype=np.int64),
            boxes=np.asarray(meta["boxes"], dtype=np.float64).reshape(n, 4) if n else np.zeros((0, 4)),
            conf=np.asarray(meta["conf"], dtype=np.float64),
            features=_read_matrix(path, n, d),
            frame_w=float(meta["frame_w"]),
            frame_h=float(meta["frame_h"]),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"{sidecar}: malformed sidecar ({exc})") from exc
    return regions


def save_temporal(features: np.ndarray, path: str | Path) -> None:
    """Frame-wise feature stack, shape (F_t, d_t), extension `.tfeat`."""
    path = Path(path)
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 1:
        raise DataError("temporal features must be a (F_t, d_t) matrix with F_t >= 1")
    meta = {"n": int(features.shape[0]), "d": int(features.shape[1])}
    _sidecar(path).write_text(json.dumps(meta, separators=(",", ":")) + "\n", encoding="utf-8")
    _write_matrix(path, features)


def load_temporal(path: str | Path) -> np.ndarray:
    path = Path(path)
    sidecar = _sidecar(path)
    if not path.exists() or not sidecar.exists():
        raise DataError(f"missing temporal feature file or sidecar for {path}")
    try:
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
        return _read_matrix(path, int(meta["n"]), int(meta["d"]))
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"{sidecar}: malformed sidecar ({exc})") from exc
