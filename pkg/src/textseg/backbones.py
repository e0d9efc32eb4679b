"""Adapters for the three frozen encoders: text, dense visual (with per-head
attention), and the segmentation-side image encoder.

Two modes exist. ``toy`` builds small, seeded, fully deterministic stand-ins
(fixed random linear-plus-nonlinearity maps over patch pixel statistics) so
every downstream shape, gradient path, and invariant can be exercised without
multi-GB weights. ``real`` loads user-supplied TorchScript modules from the
configured weight locators; it is optional and never required by the tests.

All encoder parameters are ``nn.Parameter`` objects with
``requires_grad=False`` by default, so freezing is enforced by autograd and
"frozen" is checkable bit-for-bit. The only block a training regime may ever
unfreeze is the text encoder's final projection layer.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .errors import ConfigurationError, InvalidInputError, InvalidPromptError
from .validation import check_image, check_prompt

Tensor = torch.Tensor

# Real-mode geometry (published backbone defaults): the dense visual encoder
# consumes 518x518 with 14-px patches (37x37 grid); the segmentation encoder
# consumes 1024x1024 and emits a 64x64 embedding grid (16x overall stride).
REAL_VISUAL_INPUT_SIZE = 518
REAL_VISUAL_PATCH_SIZE = 14
REAL_DECODER_INPUT_SIZE = 1024
REAL_DECODER_STRIDE = 16


@dataclass
class TextEmbedding:
    """Encoded text-category vector consumed by the projection."""

    values: Tensor  # (D_t,)
    source_prompt: str


@dataclass
class PatchFeatureGrid:
    """Dense visual features v[h, w] over the patch grid."""

    features: Tensor  # (grid_h, grid_w, D_v)
    patch_size: int
    source_height: int
    source_width: int

    @property
    def grid_shape(self) -> tuple[int, int]:
        return (int(self.features.shape[0]), int(self.features.shape[1]))

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[2])


@dataclass
class AttentionHeadMaps:
    """Per-head [CLS]-to-patch attention logit maps from the final layer."""

    maps: Tensor  # (N, grid_h, grid_w) raw logits, one Grid2D per head
    head_count: int


@dataclass
class ImageEmbedding:
    """Segmentation-encoder output the mask decoder consumes."""

    values: Tensor  # (D_e, E_h, E_w)
    interm_features: list[Tensor] = field(default_factory=list)  # each (C, H', W')


@dataclass
class BackboneConfig:
    """Dimensions, mode, seed, and weight locators for the encoder stack."""

    mode: str = "toy"  # "toy" | "real"
    seed: int = 0
    d_text: int = 16  # D_t
    d_visual: int = 16  # D_v
    d_embed: int = 32  # D_e
    patch_size: int = 8  # P
    head_count: int = 4  # N
    image_stride: int = 4  # segmentation-encoder downsampling factor (toy)
    d_raw_text: int = 32  # toy text-hash feature width
    d_highres: int = 8  # toy stem channel count (intermediate features)
    # Real-mode weight locators (filesystem paths to TorchScript modules).
    text_weights: str | None = None
    patch_weights: str | None = None
    image_weights: str | None = None
    # Freeze flags. Patch and image encoders are always frozen; the text
    # encoder's final projection layer may be unfrozen by a training regime.
    freeze_text: bool = True
    freeze_patch: bool = True
    freeze_image: bool = True

    def __post_init__(self):
        if self.mode not in ("toy", "real"):
            raise ConfigurationError(f"unknown backbone mode: {self.mode!r}")
        for name in ("d_text", "d_visual", "d_embed", "patch_size", "head_count", "image_stride"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if not self.freeze_patch or not self.freeze_image:
            raise ConfigurationError("patch and image encoders are always frozen")

    @staticmethod
    def real_defaults(**overrides) -> "BackboneConfig":
        base = dict(
            mode="real",
            d_text=512,
            d_visual=1024,
            d_embed=256,
            patch_size=REAL_VISUAL_PATCH_SIZE,
            head_count=16,
            image_stride=REAL_DECODER_STRIDE,
        )
        base.update(overrides)
        return BackboneConfig(**base)


def patch_grid_shape(height: int, width: int, patch_size: int) -> tuple[int, int]:
    """Patch-grid dims for an image: floor(H/P) x floor(W/P)."""
    return (height // patch_size, width // patch_size)


def embedding_grid_shape(height: int, width: int, stride: int) -> tuple[int, int]:
    """Decoder-side embedding grid dims for an image at the given stride."""
    return (height // stride, width // stride)


def _prompt_generator(prompt: str, seed: int) -> torch.Generator:
    digest = hashlib.sha256(f"{seed}:{prompt}".encode("utf-8")).digest()
    g = torch.Generator()
    g.manual_seed(int.from_bytes(digest[:8], "big") % (2**63))
    return g


def _normal(shape, std: float, g: torch.Generator) -> Tensor:
    return torch.empty(*shape).normal_(mean=0.0, std=std, generator=g)


def _frozen(t: Tensor) -> nn.Parameter:
    return nn.Parameter(t, requires_grad=False)


class ToyTextEncoder(nn.Module):
    """Deterministic stand-in for a text encoder.

    A prompt is hashed to a fixed pseudo-random raw feature vector, passed
    through a frozen seeded affine + tanh body, then through a final affine
    projection layer. The final projection is the one block partial
    fine-tuning may unfreeze.
    """

    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        self.cfg = cfg
        g = torch.Generator().manual_seed(cfg.seed * 1000 + 11)
        d_raw, d_t = cfg.d_raw_text, cfg.d_text
        self.body_weight = _frozen(_normal((d_raw, d_t), d_raw**-0.5, g))
        self.body_bias = _frozen(_normal((d_t,), 0.1, g))
        self.proj_weight = _frozen(_normal((d_t, d_t), d_t**-0.5, g))
        self.proj_bias = _frozen(torch.zeros(d_t))

    def raw_features(self, prompt: str) -> Tensor:
        gp = _prompt_generator(prompt, self.cfg.seed)
        return torch.empty(self.cfg.d_raw_text).normal_(mean=0.0, std=1.0, generator=gp)

    def forward(self, prompt: str) -> TextEmbedding:
        prompt = check_prompt(prompt)
        raw = self.raw_features(prompt)
        hidden = torch.tanh(raw @ self.body_weight + self.body_bias)
        values = hidden @ self.proj_weight + self.proj_bias
        return TextEmbedding(values=values, source_prompt=prompt)

    def final_projection_parameters(self) -> list[nn.Parameter]:
        return [self.proj_weight, self.proj_bias]


def _patch_statistics(image: Tensor, patch_size: int) -> Tensor:
    """Per-patch pixel statistics with 3x3-cell context, (grid_h, grid_w, 26).

    Channels 0-12 are per-cell: mean R/G/B, gray std, mean |gx|, mean |gy|,
    structure-tensor moments (gxx, gyy, gxy), orientation coherence, gradient
    energy, gray max, gray min. These expose intensity, texture, and
    orientation content, which is what separates thin structures from
    background.

    Channels 13-25 are the same statistics aggregated over the 3x3 cell
    neighbourhood (coherence recomputed from pooled moments, max/min pooled).
    The enlarged receptive field disambiguates locally identical cells — a
    single bar reads differently when its surroundings repeat it.
    """
    h, w, _ = image.shape
    p = patch_size
    gh, gw = h // p, w // p
    img = image[: gh * p, : gw * p, :]
    gray = img.mean(dim=2)

    gx = torch.zeros_like(gray)
    gy = torch.zeros_like(gray)
    gx[:, :-1] = gray[:, 1:] - gray[:, :-1]
    gy[:-1, :] = gray[1:, :] - gray[:-1, :]

    def pool(x: Tensor) -> Tensor:
        return x.reshape(gh, p, gw, p).permute(0, 2, 1, 3).reshape(gh, gw, p * p)

    rgb = img.reshape(gh, p, gw, p, 3).permute(0, 2, 1, 3, 4).reshape(gh, gw, p * p, 3)
    gray_p = pool(gray)
    gx_p = pool(gx)
    gy_p = pool(gy)

    mean_rgb = rgb.mean(dim=2)
    std_gray = gray_p.std(dim=2, unbiased=False)
    abs_gx = gx_p.abs().mean(dim=2)
    abs_gy = gy_p.abs().mean(dim=2)
    jxx = (gx_p * gx_p).mean(dim=2)
    jyy = (gy_p * gy_p).mean(dim=2)
    jxy = (gx_p * gy_p).mean(dim=2)
    energy = jxx + jyy
    coherence = torch.sqrt((jxx - jyy) ** 2 + 4.0 * jxy**2) / (energy + 1e-8)
    gmax = gray_p.max(dim=2).values
    gmin = gray_p.min(dim=2).values

    local = [
        mean_rgb[..., 0],
        mean_rgb[..., 1],
        mean_rgb[..., 2],
        std_gray,
        abs_gx,
        abs_gy,
        jxx,
        jyy,
        jxy,
        coherence,
        energy,
        gmax,
        gmin,
    ]

    def ctx_mean(x: Tensor) -> Tensor:
        return nn.functional.avg_pool2d(
            x[None, None], kernel_size=3, stride=1, padding=1, count_include_pad=False
        )[0, 0]

    def ctx_max(x: Tensor) -> Tensor:
        return nn.functional.max_pool2d(x[None, None], kernel_size=3, stride=1, padding=1)[0, 0]

    jxx_c, jyy_c, jxy_c = ctx_mean(jxx), ctx_mean(jyy), ctx_mean(jxy)
    energy_c = jxx_c + jyy_c
    coherence_c = torch.sqrt((jxx_c - jyy_c) ** 2 + 4.0 * jxy_c**2) / (energy_c + 1e-8)
    context = [
        ctx_mean(mean_rgb[..., 0]),
        ctx_mean(mean_rgb[..., 1]),
        ctx_mean(mean_rgb[..., 2]),
        ctx_mean(std_gray),
        ctx_mean(abs_gx),
        ctx_mean(abs_gy),
        jxx_c,
        jyy_c,
        jxy_c,
        coherence_c,
        energy_c,
        ctx_max(gmax),
        -ctx_max(-gmin),
    ]
    return torch.stack(local + context, dim=-1)


class ToyPatchEncoder(nn.Module):
    """Deterministic stand-in for the dense visual encoder.

    Patch features are a fixed seeded affine+tanh map over per-patch pixel
    statistics; attention-head logit maps are seeded random projections of
    those features, giving N distinct deterministic heads.
    """

    STAT_DIM = 26

    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        self.cfg = cfg
        g = torch.Generator().manual_seed(cfg.seed * 1000 + 23)
        # Gradient statistics are small on [0,1] images; pre-scaling keeps the
        # tanh features away from the dead zone.  Cell channels first, then
        # the 3x3-context channels with the same scaling.
        scale = torch.tensor([1, 1, 1, 4, 8, 8, 24, 24, 24, 1, 12, 1, 1] * 2, dtype=torch.float32)
        self.stat_scale = _frozen(scale)
        self.feat_weight = _frozen(_normal((self.STAT_DIM, cfg.d_visual), self.STAT_DIM**-0.5 * 2.0, g))
        self.feat_bias = _frozen(_normal((cfg.d_visual,), 0.1, g))
        self.head_weight = _frozen(_normal((cfg.head_count, cfg.d_visual), cfg.d_visual**-0.5 * 4.0, g))

    def forward(self, image) -> tuple[PatchFeatureGrid, AttentionHeadMaps]:
        arr = check_image(image)
        h, w, _ = arr.shape
        p = self.cfg.patch_size
        if h < p or w < p:
            raise InvalidInputError(f"image {h}x{w} is smaller than one {p}x{p} patch")
        img = torch.from_numpy(arr)
        stats = _patch_statistics(img, p) * self.stat_scale
        features = torch.tanh(stats @ self.feat_weight + self.feat_bias)
        maps = torch.einsum("hwd,nd->nhw", features, self.head_weight)
        grid = PatchFeatureGrid(features=features, patch_size=p, source_height=h, source_width=w)
        return grid, AttentionHeadMaps(maps=maps, head_count=self.cfg.head_count)


class ToyImageEncoder(nn.Module):
    """Deterministic stand-in for the segmentation-side image encoder.

    A frozen stem keeps a full-resolution feature map (exposed as an
    intermediate feature for high-resolution fusion in the decoder), then
    two stride-2 convs produce the D_e embedding at 1/4 resolution.

    The stem mimics what a pretrained encoder's early layers provide: the
    first three channels are fixed contrast features (center-surround,
    gradient magnitude, centred gray), the rest a seeded random tanh conv.
    """

    # Leading engineered stem channels (the decoder may rely on this count).
    ENGINEERED_CHANNELS = 3

    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        if cfg.image_stride != 4 and cfg.mode == "toy":
            raise ConfigurationError("toy image encoder implements stride 4")
        if cfg.d_highres <= self.ENGINEERED_CHANNELS:
            raise ConfigurationError(
                f"toy image encoder needs d_highres > {self.ENGINEERED_CHANNELS}"
            )
        self.cfg = cfg
        g = torch.Generator().manual_seed(cfg.seed * 1000 + 37)
        c = cfg.d_highres
        c_rand = c - self.ENGINEERED_CHANNELS

        def conv_w(out_c, in_c, k):
            return _frozen(_normal((out_c, in_c, k, k), (in_c * k * k) ** -0.5 * 2.0, g))

        self.stem_weight = conv_w(c_rand, 3, 3)
        self.stem_bias = _frozen(torch.zeros(c_rand))
        self.down1_weight = conv_w(2 * c, c, 3)
        self.down1_bias = _frozen(torch.zeros(2 * c))
        self.down2_weight = conv_w(cfg.d_embed, 2 * c, 3)
        self.down2_bias = _frozen(torch.zeros(cfg.d_embed))

    @staticmethod
    def _contrast_features(x: Tensor) -> Tensor:
        """Center-surround, gradient-magnitude, and centred-gray maps."""
        gray = x.mean(dim=1, keepdim=True)  # (1, 1, H, W)
        blur = nn.functional.avg_pool2d(gray, kernel_size=5, stride=1, padding=2,
                                        count_include_pad=False)
        surround = torch.tanh((gray - blur) * 8.0)
        gx = torch.zeros_like(gray)
        gy = torch.zeros_like(gray)
        gx[..., :, :-1] = gray[..., :, 1:] - gray[..., :, :-1]
        gy[..., :-1, :] = gray[..., 1:, :] - gray[..., :-1, :]
        grad_mag = torch.tanh((gx.abs() + gy.abs()) * 8.0)
        centred = gray * 2.0 - 1.0
        return torch.cat([surround, grad_mag, centred], dim=1)

    def forward(self, image) -> ImageEmbedding:
        arr = check_image(image)
        h, w, _ = arr.shape
        s = self.cfg.image_stride
        if h < s or w < s:
            raise InvalidInputError(f"image {h}x{w} is smaller than the encoder stride {s}")
        x = torch.from_numpy(arr).permute(2, 0, 1)[None]  # (1, 3, H, W)
        rand = torch.tanh(nn.functional.conv2d(x, self.stem_weight, self.stem_bias, padding=1))
        stem = torch.cat([self._contrast_features(x), rand], dim=1)
        d1 = torch.tanh(nn.functional.conv2d(stem, self.down1_weight, self.down1_bias, stride=2, padding=1))
        d2 = nn.functional.conv2d(d1, self.down2_weight, self.down2_bias, stride=2, padding=1)
        return ImageEmbedding(values=d2[0], interm_features=[stem[0]])


class RealEncoderAdapter(nn.Module):
    """Adapter around a user-supplied TorchScript module.

    The locator must point to a ``torch.jit`` archive. Expected signatures:

    - text: ``forward(prompt: str) -> Tensor[D_t]``
    - patch: ``forward(image: Tensor[3,H,W]) -> (Tensor[gh,gw,D_v], Tensor[N,gh,gw])``
    - image: ``forward(image: Tensor[3,H,W]) -> (Tensor[D_e,Eh,Ew], Tensor[C,H',W'])``
    """

    def __init__(self, locator: str | None, role: str):
        super().__init__()
        if not locator:
            raise ConfigurationError(f"real mode requires a weight locator for the {role} encoder")
        try:
            self.module = torch.jit.load(locator, map_location="cpu")
        except (OSError, RuntimeError) as exc:
            raise ConfigurationError(f"cannot load {role} encoder weights from {locator!r}: {exc}") from exc
        self.module.eval()
        for p in self.module.parameters():
            p.requires_grad_(False)


class RealTextEncoder(RealEncoderAdapter):
    def __init__(self, cfg: BackboneConfig):
        super().__init__(cfg.text_weights, "text")
        self.cfg = cfg

    def forward(self, prompt: str) -> TextEmbedding:
        prompt = check_prompt(prompt)
        values = self.module(prompt)
        if values.shape != (self.cfg.d_text,):
            raise ConfigurationError(
                f"text encoder returned shape {tuple(values.shape)}, expected ({self.cfg.d_text},)"
            )
        return TextEmbedding(values=values, source_prompt=prompt)

    def final_projection_parameters(self) -> list[nn.Parameter]:
        params = [p for name, p in self.module.named_parameters() if "proj" in name.lower()]
        if not params:
            raise ConfigurationError("real text encoder exposes no final projection parameters")
        return params


class RealPatchEncoder(RealEncoderAdapter):
    def __init__(self, cfg: BackboneConfig):
        super().__init__(cfg.patch_weights, "patch")
        self.cfg = cfg

    def forward(self, image) -> tuple[PatchFeatureGrid, AttentionHeadMaps]:
        arr = check_image(image)
        h, w, _ = arr.shape
        if h < self.cfg.patch_size or w < self.cfg.patch_size:
            raise InvalidInputError(f"image {h}x{w} is smaller than one patch")
        feats, maps = self.module(torch.from_numpy(arr).permute(2, 0, 1))
        grid = PatchFeatureGrid(
            features=feats, patch_size=self.cfg.patch_size, source_height=h, source_width=w
        )
        return grid, AttentionHeadMaps(maps=maps, head_count=int(maps.shape[0]))


class RealImageEncoder(RealEncoderAdapter):
    def __init__(self, cfg: BackboneConfig):
        super().__init__(cfg.image_weights, "image")
        self.cfg = cfg

    def forward(self, image) -> ImageEmbedding:
        arr = check_image(image)
        emb, interm = self.module(torch.from_numpy(arr).permute(2, 0, 1))
        return ImageEmbedding(values=emb, interm_features=[interm])


class BackboneBundle(nn.Module):
    """The three encoders behind one construction point."""

    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        self.cfg = cfg
        if cfg.mode == "toy":
            self.text = ToyTextEncoder(cfg)
            self.patch = ToyPatchEncoder(cfg)
            self.image = ToyImageEncoder(cfg)
        else:
            self.text = RealTextEncoder(cfg)
            self.patch = RealPatchEncoder(cfg)
            self.image = RealImageEncoder(cfg)

    def encode_text(self, prompt: str) -> TextEmbedding:
        return self.text(prompt)

    def encode_patches(self, image) -> tuple[PatchFeatureGrid, AttentionHeadMaps]:
        return self.patch(image)

    def encode_image_for_decoder(self, image) -> ImageEmbedding:
        return self.image(image)


def encode_text(prompt: str, cfg: BackboneConfig) -> TextEmbedding:
    """One-shot text encoding (constructs the encoder; prefer BackboneBundle)."""
    return BackboneBundle(cfg).encode_text(prompt)


def encode_patches(image, cfg: BackboneConfig) -> tuple[PatchFeatureGrid, AttentionHeadMaps]:
    """One-shot dense visual encoding (constructs the encoder)."""
    return BackboneBundle(cfg).encode_patches(image)


def encode_image_for_decoder(image, cfg: BackboneConfig) -> ImageEmbedding:
    """One-shot segmentation-encoder pass (constructs the encoder)."""
    return BackboneBundle(cfg).encode_image_for_decoder(image)
