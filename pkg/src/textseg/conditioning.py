"""Turn a similarity map into a dense mask embedding and bundle it with
geometric prompts for the decoder.

The similarity map is first bilinearly upsampled to the fixed 256x256 prompt
resolution, then encoded by a small trainable stack of strided convolutions
(the analogue of a mask-input encoder, but fully trainable) down to the
decoder-side embedding grid E_h x E_w with D_e channels. Geometric prompts
(box corners, labelled points) become sparse tokens: a fixed random Fourier
position code plus a trainable per-type embedding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
from torch import nn

from .errors import ConfigurationError, EmptyPromptError, InvalidBoxError, InvalidInputError
from .numerics import bilinear_resample
from .projection import SimilarityMap
from .validation import check_box

Tensor = torch.Tensor

PROMPT_INPUT_SIZE = 256

# Sparse token types.
POINT_BG = 0
POINT_FG = 1
BOX_TOPLEFT = 2
BOX_BOTTOMRIGHT = 3


@dataclass
class GeometricPrompt:
    """Box and/or labelled point prompts in image pixel coordinates."""

    box: tuple[float, float, float, float] | None = None  # (x_min, y_min, x_max, y_max)
    points: list[tuple[float, float, int]] = field(default_factory=list)  # (x, y, label in {0,1})

    def is_empty(self) -> bool:
        return self.box is None and not self.points


@dataclass
class PromptBundle:
    """Everything the decoder consumes besides the image embedding."""

    sparse_tokens: Tensor  # (K, D_e); K may be 0
    dense_embedding: Tensor  # (D_e, E_h, E_w)
    prompt_text: str = ""
    similarity_input: Tensor | None = None  # the 256x256 grid fed to the encoder, if any


def prepare_similarity_input(sim_map: SimilarityMap) -> Tensor:
    """Bilinearly upsample a similarity map to the 256x256 prompt resolution."""
    grid = sim_map.grid if isinstance(sim_map, SimilarityMap) else torch.as_tensor(sim_map)
    return bilinear_resample(grid, PROMPT_INPUT_SIZE, PROMPT_INPUT_SIZE)


class LayerNorm2d(nn.Module):
    """Channel-wise LayerNorm over (C, H, W) maps."""

    def __init__(self, channels: int, eps: float = 1e-6):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        mu = x.mean(dim=1, keepdim=True)
        var = (x - mu).pow(2).mean(dim=1, keepdim=True)
        x = (x - mu) / torch.sqrt(var + self.eps)
        return x * self.weight[:, None, None] + self.bias[:, None, None]


class SimilarityMapEncoder(nn.Module):
    """Trainable conv stack: 256x256x1 -> E x E x D_e.

    Two strided convolutions (stride 2 each at full scale, scaled up for the
    toy geometry), each followed by LayerNorm and GELU, then a pointwise
    projection to D_e channels. Zero input with zero biases maps to zero
    output: the stack is linear before its (learned) biases.
    """

    def __init__(self, embed_size: int, d_embed: int, seed: int = 0):
        super().__init__()
        if PROMPT_INPUT_SIZE % embed_size != 0:
            raise ConfigurationError(f"embedding size {embed_size} must divide {PROMPT_INPUT_SIZE}")
        total = PROMPT_INPUT_SIZE // embed_size
        stride = int(math.isqrt(total))
        if stride * stride != total:
            raise ConfigurationError(
                f"total stride {total} (256 -> {embed_size}) must be a perfect square for two conv layers"
            )
        self.embed_size = embed_size
        self.d_embed = d_embed
        c1 = max(4, d_embed // 4)
        c2 = max(8, d_embed // 2)
        self.conv1 = nn.Conv2d(1, c1, kernel_size=2 * stride, stride=stride, padding=stride // 2)
        self.norm1 = LayerNorm2d(c1)
        self.conv2 = nn.Conv2d(c1, c2, kernel_size=2 * stride, stride=stride, padding=stride // 2)
        self.norm2 = LayerNorm2d(c2)
        self.proj = nn.Conv2d(c2, d_embed, kernel_size=1)
        self._seed_init(seed)

    def _seed_init(self, seed: int):
        g = torch.Generator().manual_seed(seed * 1000 + 67)
        for conv in (self.conv1, self.conv2, self.proj):
            fan_in = conv.in_channels * conv.kernel_size[0] * conv.kernel_size[1]
            with torch.no_grad():
                conv.weight.copy_(torch.empty_like(conv.weight).normal_(0.0, fan_in**-0.5, generator=g))
                conv.bias.zero_()

    def forward(self, grid_256: Tensor) -> Tensor:
        grid_256 = torch.as_tensor(grid_256)
        if grid_256.shape != (PROMPT_INPUT_SIZE, PROMPT_INPUT_SIZE):
            raise ConfigurationError(
                f"similarity input must be {PROMPT_INPUT_SIZE}x{PROMPT_INPUT_SIZE}, got {tuple(grid_256.shape)}"
            )
        x = grid_256[None, None].to(self.conv1.weight.dtype)
        x = torch.nn.functional.gelu(self.norm1(self.conv1(x)))
        x = torch.nn.functional.gelu(self.norm2(self.conv2(x)))
        return self.proj(x)[0]  # (D_e, E, E)


def encode_similarity_map(grid_256: Tensor, params: SimilarityMapEncoder) -> Tensor:
    """Functional alias: run the trainable encoder on a prepared 256x256 grid."""
    return params(grid_256)


class SparsePromptEmbedder(nn.Module):
    """Box corners and points -> sparse tokens.

    Token = random-Fourier position code of normalized (x, y) plus a
    trainable type embedding (background point, foreground point, box
    top-left, box bottom-right).
    """

    def __init__(self, d_embed: int, seed: int = 0):
        super().__init__()
        if d_embed % 2 != 0:
            raise ConfigurationError("d_embed must be even for the Fourier position code")
        g = torch.Generator().manual_seed(seed * 1000 + 71)
        fourier = torch.empty(2, d_embed // 2).normal_(0.0, 1.0, generator=g)
        self.register_buffer("fourier", fourier)
        self.type_embed = nn.Parameter(torch.empty(4, d_embed).normal_(0.0, 0.02, generator=g))

    def position_code(self, x_norm: float, y_norm: float) -> Tensor:
        p = torch.tensor([x_norm, y_norm], dtype=self.fourier.dtype) @ self.fourier
        return torch.cat([torch.sin(2 * math.pi * p), torch.cos(2 * math.pi * p)])

    def forward(self, geom: GeometricPrompt, image_height: int, image_width: int) -> Tensor:
        tokens = []
        if geom.box is not None:
            x0, y0, x1, y1 = check_box(geom.box, image_height, image_width)
            tokens.append(self.position_code(x0 / image_width, y0 / image_height) + self.type_embed[BOX_TOPLEFT])
            tokens.append(self.position_code(x1 / image_width, y1 / image_height) + self.type_embed[BOX_BOTTOMRIGHT])
        for x, y, label in geom.points:
            if label not in (POINT_BG, POINT_FG):
                raise InvalidInputError(f"point label must be 0 (bg) or 1 (fg), got {label}")
            if not (0 <= x <= image_width and 0 <= y <= image_height):
                raise InvalidBoxError(f"point ({x}, {y}) lies outside the {image_width}x{image_height} image")
            tokens.append(self.position_code(x / image_width, y / image_height) + self.type_embed[label])
        if not tokens:
            return torch.zeros(0, self.type_embed.shape[1])
        return torch.stack(tokens)


class PromptConditioner(nn.Module):
    """Owns the trainable prompt path: similarity encoder + sparse embedder."""

    def __init__(self, embed_size: int, d_embed: int, seed: int = 0):
        super().__init__()
        self.similarity_encoder = SimilarityMapEncoder(embed_size, d_embed, seed=seed)
        self.sparse_embedder = SparsePromptEmbedder(d_embed, seed=seed)
        self.embed_size = embed_size
        self.d_embed = d_embed

    def encode_similarity(self, sim_map: SimilarityMap) -> tuple[Tensor, Tensor]:
        grid_256 = prepare_similarity_input(sim_map)
        return self.similarity_encoder(grid_256), grid_256

    def build_prompt_bundle(self, geom: GeometricPrompt | None, dense: Tensor | None,
                            text: str = "", image_height: int = 0, image_width: int = 0,
                            similarity_input: Tensor | None = None) -> PromptBundle:
        """Assemble the decoder-side bundle; see build_prompt_bundle()."""
        geom = geom or GeometricPrompt()
        if geom.is_empty() and dense is None:
            raise EmptyPromptError("need a geometric prompt, a semantic prompt, or both")
        if dense is None:
            dense = torch.zeros(self.d_embed, self.embed_size, self.embed_size)
        if dense.shape != (self.d_embed, self.embed_size, self.embed_size):
            raise ConfigurationError(
                f"dense embedding shape {tuple(dense.shape)} does not match decoder config "
                f"({self.d_embed}, {self.embed_size}, {self.embed_size})"
            )
        sparse = self.sparse_embedder(geom, image_height, image_width)
        return PromptBundle(sparse_tokens=sparse, dense_embedding=dense,
                            prompt_text=text, similarity_input=similarity_input)


def build_prompt_bundle(geom: GeometricPrompt | None, dense: Tensor | None, text: str,
                        conditioner: PromptConditioner, image_height: int, image_width: int,
                        similarity_input: Tensor | None = None) -> PromptBundle:
    """Bundle sparse geometric tokens with the dense semantic embedding.

    Box-only, points-only, and combined configurations are all supported;
    with no semantic prompt the dense embedding is zero.
    """
    return conditioner.build_prompt_bundle(geom, dense, text, image_height, image_width,
                                           similarity_input=similarity_input)
