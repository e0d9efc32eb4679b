"""Text-to-visual projection, attention pooling, head scoring, and dense
similarity-map generation.

The projection maps a text embedding t (dim D_t) into the visual patch
feature space (dim D_v) through two affine layers with a tanh between:

    psi(t) = tanh(t @ W_a + b_a) @ W_b + b_b

with W_a: (D_t, D_h), b_a: (D_h,), W_b: (D_h, D_v), b_b: (D_v,). All four
blocks are trainable and the map is differentiable in the parameters and t.

Head scoring pools patch features under each attention head's softmaxed map
and takes the cosine similarity with psi(t); the dense similarity map is the
per-patch cosine between each patch feature and psi(t).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn

from .backbones import AttentionHeadMaps, PatchFeatureGrid, TextEmbedding
from .errors import ConfigurationError, DegenerateVectorError, InvalidInputError
from .numerics import spatial_softmax

Tensor = torch.Tensor

NORMALIZATIONS = ("raw", "unit_interval")


@dataclass
class SimilarityMap:
    """Dense text-to-patch relevance grid.

    ``raw`` values are cosine similarities in [-1, 1]; ``unit_interval``
    values are affinely rescaled to [0, 1] via (s + 1) / 2.
    """

    grid: Tensor  # (grid_h, grid_w)
    prompt: str
    normalization: str = "unit_interval"


@dataclass
class HeadScores:
    """Per-head cosine scores against psi(t), with the max-head summary."""

    per_head: Tensor  # (N,)
    best: float
    best_index: int


class TextProjection(nn.Module):
    """The trainable two-layer nonlinear map from text space to visual space."""

    def __init__(self, d_text: int, d_hidden: int = 256, d_visual: int = 16, seed: int = 0,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        if min(d_text, d_hidden, d_visual) < 1:
            raise ConfigurationError("projection dims must be >= 1")
        self.d_text, self.d_hidden, self.d_visual = d_text, d_hidden, d_visual
        g = torch.Generator().manual_seed(seed * 1000 + 53)

        def uniform(shape, bound):
            return torch.empty(*shape, dtype=dtype).uniform_(-bound, bound, generator=g)

        self.w_a = nn.Parameter(uniform((d_text, d_hidden), d_text**-0.5))
        self.b_a = nn.Parameter(torch.zeros(d_hidden, dtype=dtype))
        # Small output scale: downstream scoring is cosine-based, so psi's
        # magnitude is irrelevant to the forward pass but sets the angular
        # step size under SGD (a rotation step scales as |psi|^-2).  Starting
        # small lets the projection re-aim in few steps at modest lr.
        self.w_b = nn.Parameter(uniform((d_hidden, d_visual), 0.25 * d_hidden**-0.5))
        self.b_b = nn.Parameter(torch.zeros(d_visual, dtype=dtype))

    def forward(self, t: Tensor) -> Tensor:
        if t.ndim != 1 or t.shape[0] != self.d_text:
            raise ConfigurationError(
                f"projection expects a ({self.d_text},) text vector, got {tuple(t.shape)}"
            )
        hidden = torch.tanh(t @ self.w_a + self.b_a)
        return hidden @ self.w_b + self.b_b


def project_text(t, params: TextProjection) -> Tensor:
    """Apply the projection to a TextEmbedding or raw (D_t,) tensor."""
    vec = t.values if isinstance(t, TextEmbedding) else torch.as_tensor(t)
    return params(vec.to(params.w_a.dtype))


def attention_pool(v, attention_logits) -> Tensor:
    """Pool patch features under a softmax-normalized attention map.

    v may be a PatchFeatureGrid or a (gh, gw, D_v) tensor; attention_logits is
    a (gh, gw) grid of logits. The result is the weighted average of patch
    features, i.e. a convex combination: each output coordinate lies within
    that coordinate's min/max over patches.
    """
    feats = v.features if isinstance(v, PatchFeatureGrid) else torch.as_tensor(v)
    if feats.ndim != 3:
        raise InvalidInputError(f"attention_pool expects (gh, gw, D_v) features, got {tuple(feats.shape)}")
    weights = spatial_softmax(attention_logits)
    if weights.shape != feats.shape[:2]:
        raise InvalidInputError(
            f"attention map shape {tuple(weights.shape)} does not match feature grid {tuple(feats.shape[:2])}"
        )
    return torch.einsum("hw,hwd->d", weights.to(feats.dtype), feats)


def score_heads(v, heads: AttentionHeadMaps, psi_t: Tensor) -> HeadScores:
    """Cosine similarity of each head-pooled visual embedding with psi(t).

    The summary score is the maximum over heads; ties break toward the
    lowest head index.
    """
    feats = v.features if isinstance(v, PatchFeatureGrid) else torch.as_tensor(v)
    psi_t = torch.as_tensor(psi_t)
    if psi_t.ndim != 1 or psi_t.shape[0] != feats.shape[2]:
        raise ConfigurationError(
            f"psi_t dim {tuple(psi_t.shape)} does not match feature dim {feats.shape[2]}"
        )
    psi_norm = torch.linalg.vector_norm(psi_t)
    if psi_norm.item() == 0.0:
        raise DegenerateVectorError("score_heads: psi(t) has zero norm")
    scores = []
    for i in range(heads.head_count):
        pooled = attention_pool(feats, heads.maps[i])
        pnorm = torch.linalg.vector_norm(pooled)
        if pnorm.item() == 0.0:
            raise DegenerateVectorError(f"score_heads: head {i} pools to a zero vector")
        scores.append(torch.clamp((pooled * psi_t).sum() / (pnorm * psi_norm), -1.0, 1.0))
    per_head = torch.stack(scores)
    best_index = int(per_head.argmax().item())
    # argmax tie behaviour is not guaranteed; enforce lowest-index explicitly.
    best_value = per_head[best_index]
    for i in range(best_index):
        if per_head[i].item() == best_value.item():
            best_index = i
            break
    return HeadScores(per_head=per_head, best=float(per_head[best_index].item()), best_index=best_index)


def dense_similarity_map(v, psi_t: Tensor, normalization: str = "unit_interval",
                         prompt: str = "") -> SimilarityMap:
    """Per-patch cosine similarity between patch features and psi(t).

    Differentiable in psi_t. ``unit_interval`` rescales (s + 1) / 2 so the
    prompt encoder always sees a bounded, prompt-independent input range.
    """
    if normalization not in NORMALIZATIONS:
        raise ConfigurationError(f"unknown normalization {normalization!r}; use one of {NORMALIZATIONS}")
    feats = v.features if isinstance(v, PatchFeatureGrid) else torch.as_tensor(v)
    if feats.ndim != 3:
        raise InvalidInputError(f"expected (gh, gw, D_v) features, got {tuple(feats.shape)}")
    psi_t = torch.as_tensor(psi_t)
    if psi_t.ndim != 1 or psi_t.shape[0] != feats.shape[2]:
        raise ConfigurationError(
            f"psi_t dim {tuple(psi_t.shape)} does not match feature dim {feats.shape[2]}"
        )
    psi_norm = torch.linalg.vector_norm(psi_t)
    if psi_norm.item() == 0.0:
        raise DegenerateVectorError("dense_similarity_map: psi(t) has zero norm")
    patch_norms = torch.linalg.vector_norm(feats, dim=2)
    if (patch_norms == 0).any():
        h, w = [int(x) for x in (patch_norms == 0).nonzero()[0]]
        raise DegenerateVectorError(f"dense_similarity_map: patch ({h}, {w}) has a zero-norm feature")
    sims = torch.clamp(
        torch.einsum("hwd,d->hw", feats, psi_t.to(feats.dtype)) / (patch_norms * psi_norm), -1.0, 1.0
    )
    if normalization == "unit_interval":
        sims = (sims + 1.0) / 2.0
    return SimilarityMap(grid=sims, prompt=prompt, normalization=normalization)


PROJECTION_FORMAT = "textseg-projection"
PROJECTION_VERSION = 1


def save_projection(params: TextProjection, path) -> None:
    """Serialize projection weights to a flat JSON container.

    Layout: matrices are row-major nested lists with explicit dims, keys
    w_a (d_text x d_hidden), b_a (d_hidden), w_b (d_hidden x d_visual),
    b_b (d_visual).
    """
    payload = {
        "format": PROJECTION_FORMAT,
        "version": PROJECTION_VERSION,
        "d_text": params.d_text,
        "d_hidden": params.d_hidden,
        "d_visual": params.d_visual,
        "layout": "row-major",
        "w_a": params.w_a.detach().tolist(),
        "b_a": params.b_a.detach().tolist(),
        "w_b": params.w_b.detach().tolist(),
        "b_b": params.b_b.detach().tolist(),
    }
    Path(path).write_text(json.dumps(payload))


def load_projection(path) -> TextProjection:
    """Load projection weights saved by :func:`save_projection`."""
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != PROJECTION_FORMAT or payload.get("version") != PROJECTION_VERSION:
        raise ConfigurationError(f"not a v{PROJECTION_VERSION} projection container: {path}")
    proj = TextProjection(payload["d_text"], payload["d_hidden"], payload["d_visual"])
    with torch.no_grad():
        proj.w_a.copy_(torch.tensor(payload["w_a"]))
        proj.b_a.copy_(torch.tensor(payload["b_a"]))
        proj.w_b.copy_(torch.tensor(payload["w_b"]))
        proj.b_b.copy_(torch.tensor(payload["b_b"]))
    return proj
