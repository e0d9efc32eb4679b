"""Input validation helpers used at the public API boundaries.

These mirror the role of ``sklearn.utils.validation``: normalize user input
into the arrays the pipeline expects, failing early with actionable messages.
"""

from __future__ import annotations

import numpy as np
import torch

from .errors import InvalidBoxError, InvalidInputError, InvalidPromptError


def check_image(image) -> np.ndarray:
    """Validate and normalize an image to float32 HxWx3 in [0, 1].

    Accepts HxW (grayscale, replicated to 3 channels) or HxWx3 arrays with
    either uint8 [0, 255] or float [0, 1] values.
    """
    arr = np.asarray(image)
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidInputError(f"image must be HxW or HxWx3, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(f"image has empty spatial dims: {arr.shape}")
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float32) / 255.0
    else:
        arr = arr.astype(np.float32)
    if not np.isfinite(arr).all():
        raise InvalidInputError("image contains non-finite values")
    if arr.min() < -1e-6 or arr.max() > 1.0 + 1e-6:
        raise InvalidInputError("float image values must lie in [0, 1]")
    return np.clip(arr, 0.0, 1.0)


def check_prompt(prompt) -> str:
    """Validate a text prompt: non-empty after trimming."""
    if not isinstance(prompt, str):
        raise InvalidPromptError(f"prompt must be a string, got {type(prompt).__name__}")
    trimmed = prompt.strip()
    if not trimmed:
        raise InvalidPromptError("prompt is empty")
    return trimmed


def check_box(box, image_height: int, image_width: int) -> tuple[float, float, float, float]:
    """Validate a (x_min, y_min, x_max, y_max) box in image pixel coordinates.

    Corners must be ordered (strictly, so zero-area boxes are rejected) and
    lie inside the image.
    """
    try:
        x0, y0, x1, y1 = (float(v) for v in box)
    except (TypeError, ValueError) as exc:
        raise InvalidBoxError(f"box must be 4 numbers (x_min, y_min, x_max, y_max): {box!r}") from exc
    if not all(np.isfinite([x0, y0, x1, y1])):
        raise InvalidBoxError("box has non-finite coordinates")
    if x0 >= x1 or y0 >= y1:
        raise InvalidBoxError(f"box corners must be strictly ordered, got ({x0}, {y0}, {x1}, {y1})")
    if x0 < 0 or y0 < 0 or x1 > image_width or y1 > image_height:
        raise InvalidBoxError(
            f"box ({x0}, {y0}, {x1}, {y1}) exceeds image bounds {image_width}x{image_height}"
        )
    return (x0, y0, x1, y1)


def check_binary_mask(mask) -> np.ndarray:
    """Validate a 2-D boolean mask (accepts 0/1 integer arrays)."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise InvalidInputError(f"mask must be 2-D, got shape {arr.shape}")
    if arr.dtype != bool:
        uniq = np.unique(arr)
        if not np.all(np.isin(uniq, (0, 1))):
            raise InvalidInputError("mask values must be boolean or 0/1")
        arr = arr.astype(bool)
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "masks") -> None:
    if a.shape != b.shape:
        raise InvalidInputError(f"{what} shapes differ: {a.shape} vs {b.shape}")


def check_finite_tensor(t: torch.Tensor, name: str) -> torch.Tensor:
    if not torch.isfinite(t).all():
        raise InvalidInputError(f"{name} contains non-finite values")
    return t
