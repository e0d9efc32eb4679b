"""Shared numeric kernels: spatial softmax, cosine similarity, bilinear resampling.

All three operate on 2-D grids / 1-D vectors as ``torch.Tensor`` so the same
code runs inside the differentiable pipeline and in plain evaluation code.
Inputs may be any array-like; they are converted with ``torch.as_tensor``
(numpy arrays are accepted and zero-copied where possible).
"""

from __future__ import annotations

import torch

from .errors import DegenerateVectorError, InvalidInputError

Tensor = torch.Tensor


def _as_float_tensor(values, name: str) -> Tensor:
    t = torch.as_tensor(values)
    if not t.is_floating_point():
        t = t.to(torch.get_default_dtype())
    return t


def spatial_softmax(grid) -> Tensor:
    """Softmax over *all* positions of a 2-D grid.

    The grid is flattened into a single distribution (one weight per spatial
    position), computed with max-subtraction for numerical stability, and
    reshaped back. Output values lie in (0, 1) and sum to 1.

    Raises
    ------
    InvalidInputError
        If the grid is not 2-D or contains non-finite values.
    """
    g = _as_float_tensor(grid, "grid")
    if g.ndim != 2 or g.shape[0] < 1 or g.shape[1] < 1:
        raise InvalidInputError(f"spatial_softmax expects a 2-D grid, got shape {tuple(g.shape)}")
    if not torch.isfinite(g).all():
        raise InvalidInputError("spatial_softmax: grid contains non-finite values")
    flat = g.reshape(-1)
    flat = flat - flat.max()
    weights = torch.softmax(flat, dim=0)
    return weights.reshape(g.shape)


def cosine_similarity(u, v) -> Tensor:
    """Cosine similarity between two 1-D vectors, clamped to [-1, 1].

    Raises
    ------
    InvalidInputError
        On dimension mismatch or non-finite values.
    DegenerateVectorError
        If either vector has zero norm (never silently returns 0).
    """
    a = _as_float_tensor(u, "u")
    b = _as_float_tensor(v, "v")
    if a.ndim != 1 or b.ndim != 1:
        raise InvalidInputError("cosine_similarity expects 1-D vectors")
    if a.shape[0] != b.shape[0]:
        raise InvalidInputError(f"cosine_similarity: dimension mismatch {a.shape[0]} vs {b.shape[0]}")
    if not (torch.isfinite(a).all() and torch.isfinite(b).all()):
        raise InvalidInputError("cosine_similarity: non-finite input")
    na = torch.linalg.vector_norm(a)
    nb = torch.linalg.vector_norm(b)
    if na.item() == 0.0 or nb.item() == 0.0:
        raise DegenerateVectorError("cosine_similarity: zero-norm vector")
    return torch.clamp((a * b).sum() / (na * nb), -1.0, 1.0)


def bilinear_resample(grid, out_height: int, out_width: int) -> Tensor:
    """Bilinearly resample a 2-D grid to ``out_height x out_width``.

    Convention: align-corners-false (half-pixel centers). The source
    coordinate for output index ``j`` along an axis of input size ``n_in``
    and output size ``n_out`` is::

        src = (j + 0.5) * n_in / n_out - 0.5, clamped to [0, n_in - 1]

    and the value is the linear interpolation of the two neighbouring
    samples. Weights are convex, so the output never overshoots the input
    range; constant fields are reproduced exactly.
    """
    out_height = int(out_height)
    out_width = int(out_width)
    if out_height < 1 or out_width < 1:
        raise InvalidInputError(f"bilinear_resample: output dims must be >= 1, got {out_height}x{out_width}")
    g = _as_float_tensor(grid, "grid")
    if g.ndim != 2:
        raise InvalidInputError(f"bilinear_resample expects a 2-D grid, got shape {tuple(g.shape)}")
    if not torch.isfinite(g).all():
        raise InvalidInputError("bilinear_resample: grid contains non-finite values")
    if (out_height, out_width) == tuple(g.shape):
        return g.clone()
    out = torch.nn.functional.interpolate(
        g[None, None], size=(out_height, out_width), mode="bilinear", align_corners=False
    )
    return out[0, 0]
