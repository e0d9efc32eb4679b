"""IoU and boundary IoU with dataset-level aggregation.

Boundary IoU follows the band construction: the band of a mask at radius d
is the set of mask pixels within Euclidean distance d of the background,
with the image border counting as background — equivalently, the mask minus
its d-pixel erosion. At d=1 the band is exactly the boundary pixels (mask
pixels 4-adjacent to background or the border). Both metrics use the
empty-vs-empty = 1.0 convention so aggregates stay well-defined.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import distance_transform_edt

from .errors import EmptyDatasetError
from .validation import check_binary_mask, check_same_shape


@dataclass
class EvalRecord:
    """Per-image metrics row."""

    image_id: str
    iou: float
    biou: float
    prompt: str
    time_ms: float | None = None


def iou(pred, gt) -> float:
    """Intersection over union of two boolean masks (1.0 if both empty)."""
    p = check_binary_mask(pred)
    g = check_binary_mask(gt)
    check_same_shape(p, g)
    union = np.logical_or(p, g).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, g).sum() / union)


def boundary_pixels(mask: np.ndarray) -> np.ndarray:
    """Mask pixels 4-adjacent to background or to the image border."""
    m = check_binary_mask(mask)
    padded = np.pad(m, 1, constant_values=False)
    up = padded[:-2, 1:-1]
    down = padded[2:, 1:-1]
    left = padded[1:-1, :-2]
    right = padded[1:-1, 2:]
    interior = up & down & left & right
    return m & ~interior


def boundary_band(mask, d: int) -> np.ndarray:
    """Mask pixels within Euclidean distance d of the background.

    The image border counts as background, so a mask touching the edge
    still has a band there. A solid region therefore loses its interior:
    the band is the mask minus its d-pixel erosion.
    """
    if d < 1:
        raise ValueError(f"band radius d must be >= 1, got {d}")
    m = check_binary_mask(mask)
    if not m.any():
        return np.zeros_like(m)
    # Distance of every mask pixel to the nearest background pixel, with a
    # one-pixel background frame so the border behaves like background.
    padded = np.pad(m, 1, constant_values=False)
    dist = distance_transform_edt(padded)[1:-1, 1:-1]
    return m & (dist <= d)


def boundary_iou(pred, gt, d: int) -> float:
    """IoU restricted to boundary bands (1.0 when both bands are empty)."""
    p = check_binary_mask(pred)
    g = check_binary_mask(gt)
    check_same_shape(p, g)
    return iou(boundary_band(p, d), boundary_band(g, d))


def default_band_radius(height: int, width: int) -> int:
    """Band radius: 2% of the image diagonal, at least 1 pixel."""
    return max(1, round(0.02 * float(np.hypot(height, width))))


def aggregate(records: list[EvalRecord]) -> tuple[float, float]:
    """Arithmetic means (mIoU, mBIoU) over per-image records."""
    if not records:
        raise EmptyDatasetError("cannot aggregate an empty record list")
    m_iou = float(np.mean([r.iou for r in records]))
    m_biou = float(np.mean([r.biou for r in records]))
    return m_iou, m_biou


def write_records_jsonl(records: list[EvalRecord], path) -> None:
    """One EvalRecord per line, as JSON."""
    lines = [json.dumps(asdict(r), sort_keys=True) for r in records]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_records_jsonl(path) -> list[EvalRecord]:
    records = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            records.append(EvalRecord(**json.loads(line)))
    return records


def render_report(rows: list[dict]) -> str:
    """Plain-text results table: Method | mIoU | mBIoU | Time (ms).

    ``rows`` are dicts with keys method, miou, mbiou and optional time_ms.
    Timing is reported, never asserted.
    """
    header = f"{'Method':<24} {'mIoU':>7} {'mBIoU':>7} {'Time (ms)':>10}"
    rule = "-" * len(header)
    lines = [header, rule]
    for row in rows:
        time_ms = row.get("time_ms")
        time_str = f"{time_ms:.1f}" if time_ms is not None else "-"
        lines.append(f"{row['method']:<24} {row['miou']:>7.3f} {row['mbiou']:>7.3f} {time_str:>10}")
    return "\n".join(lines)
