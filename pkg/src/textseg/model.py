"""Full pipeline assembly: encoders + projection + prompt conditioning +
decoder behind one object, with resize-at-the-boundary semantics and the
versioned checkpoint container.

Images of any size are accepted; they are bilinearly resized to the model's
native input sizes on the way in and the mask logits are resized back to the
caller's resolution on the way out. Geometric prompts are given in original
image pixel coordinates and scaled alongside.
"""

from __future__ import annotations

import hashlib
import pickle
import zipfile
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from .backbones import (
    REAL_DECODER_INPUT_SIZE,
    REAL_VISUAL_INPUT_SIZE,
    BackboneBundle,
    BackboneConfig,
)
from .conditioning import PROMPT_INPUT_SIZE, GeometricPrompt, PromptConditioner
from .decoder import MaskDecoder, MaskLogits, binarize
from .errors import CheckpointError, ConfigurationError
from .projection import (
    NORMALIZATIONS,
    HeadScores,
    SimilarityMap,
    TextProjection,
    dense_similarity_map,
    score_heads,
)
from .validation import check_box, check_image

Tensor = torch.Tensor

TOY_INPUT_SIZE = 64


@dataclass
class ModelConfig:
    """Geometry and mode of the assembled pipeline."""

    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    d_hidden: int = 256
    normalization: str = "unit_interval"
    visual_input_size: int | None = None
    decoder_input_size: int | None = None
    # Optional path to externally trained projection weights (see
    # projection.save_projection); loaded after construction when set.
    projection_weights: str | None = None

    def __post_init__(self):
        if isinstance(self.backbone, dict):
            self.backbone = BackboneConfig(**self.backbone)
        toy = self.backbone.mode == "toy"
        if self.visual_input_size is None:
            self.visual_input_size = TOY_INPUT_SIZE if toy else REAL_VISUAL_INPUT_SIZE
        if self.decoder_input_size is None:
            self.decoder_input_size = TOY_INPUT_SIZE if toy else REAL_DECODER_INPUT_SIZE
        if self.normalization not in NORMALIZATIONS:
            raise ConfigurationError(
                f"unknown normalization {self.normalization!r}; use one of {NORMALIZATIONS}"
            )
        if self.visual_input_size % self.backbone.patch_size != 0:
            raise ConfigurationError(
                f"visual input size {self.visual_input_size} is not a multiple of "
                f"patch size {self.backbone.patch_size}"
            )
        if self.decoder_input_size % self.backbone.image_stride != 0:
            raise ConfigurationError(
                f"decoder input size {self.decoder_input_size} is not a multiple of "
                f"stride {self.backbone.image_stride}"
            )
        if PROMPT_INPUT_SIZE % self.embed_size != 0:
            raise ConfigurationError(
                f"embedding grid {self.embed_size} must divide {PROMPT_INPUT_SIZE}"
            )

    @property
    def embed_size(self) -> int:
        return self.decoder_input_size // self.backbone.image_stride

    @property
    def similarity_grid_size(self) -> int:
        return self.visual_input_size // self.backbone.patch_size

    @property
    def seed(self) -> int:
        return self.backbone.seed

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        return ModelConfig(**d)


@dataclass
class InferenceResult:
    """Prediction at the caller's image resolution."""

    mask: np.ndarray  # bool (H, W)
    logits: np.ndarray  # float32 (H, W), pre-sigmoid
    similarity: SimilarityMap | None
    head_scores: HeadScores | None
    prompt: str | None


def resize_image(image: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinearly resize an HxWx3 float image (per channel)."""
    from .numerics import bilinear_resample

    if image.shape[:2] == (height, width):
        return image
    channels = [
        bilinear_resample(torch.from_numpy(np.ascontiguousarray(image[..., c])), height, width)
        for c in range(image.shape[2])
    ]
    return torch.stack(channels, dim=-1).numpy().astype(np.float32)


def similarity_to_grayscale(sim: SimilarityMap, height: int, width: int) -> np.ndarray:
    """Render a similarity map as a uint8 grayscale image at the given size.

    unit_interval values map [0, 1] -> [0, 255]; raw values map [-1, 1].
    """
    from .numerics import bilinear_resample

    grid = bilinear_resample(sim.grid.detach(), height, width).numpy()
    if sim.normalization == "raw":
        grid = (grid + 1.0) / 2.0
    return np.clip(np.round(grid * 255.0), 0, 255).astype(np.uint8)


def resize_mask(mask: np.ndarray, height: int, width: int) -> np.ndarray:
    """Resize a boolean mask by bilinear interpolation + 0.5 threshold."""
    from .numerics import bilinear_resample

    mask = np.asarray(mask, dtype=bool)
    if mask.shape == (height, width):
        return mask
    soft = bilinear_resample(torch.from_numpy(mask.astype(np.float32)), height, width)
    return (soft.numpy() >= 0.5)


def _scale_geometric(geom: GeometricPrompt, src_h: int, src_w: int, dst: int) -> GeometricPrompt:
    sx, sy = dst / src_w, dst / src_h
    box = None
    if geom.box is not None:
        x0, y0, x1, y1 = geom.box
        box = (x0 * sx, y0 * sy, x1 * sx, y1 * sy)
    points = [(x * sx, y * sy, label) for (x, y, label) in geom.points]
    return GeometricPrompt(box=box, points=points)


class TextGuidedSegmentationModel(nn.Module):
    """Text- and geometry-promptable segmentation pipeline."""

    def __init__(self, config: ModelConfig | None = None):
        super().__init__()
        cfg = config if config is not None else ModelConfig()
        self.config = cfg
        bb = cfg.backbone
        self.backbones = BackboneBundle(bb)
        self.projection = TextProjection(
            d_text=bb.d_text, d_hidden=cfg.d_hidden, d_visual=bb.d_visual, seed=bb.seed
        )
        if cfg.projection_weights is not None:
            from .projection import load_projection

            loaded = load_projection(cfg.projection_weights)
            if (loaded.d_text, loaded.d_hidden, loaded.d_visual) != (
                bb.d_text,
                cfg.d_hidden,
                bb.d_visual,
            ):
                raise ConfigurationError(
                    f"projection weights at {cfg.projection_weights} have dims "
                    f"({loaded.d_text}, {loaded.d_hidden}, {loaded.d_visual}); the model "
                    f"needs ({bb.d_text}, {cfg.d_hidden}, {bb.d_visual})"
                )
            self.projection = loaded
        self.conditioner = PromptConditioner(cfg.embed_size, bb.d_embed, seed=bb.seed)
        self.decoder = MaskDecoder(
            bb.d_embed, d_highres=bb.d_highres, upsample=bb.image_stride, seed=bb.seed
        )

    # ------------------------------------------------------------------
    # Forward paths
    # ------------------------------------------------------------------

    def compute_logits(
        self,
        image: np.ndarray,
        prompt: str | None = None,
        geometric: GeometricPrompt | None = None,
        with_head_scores: bool = False,
    ) -> tuple[MaskLogits, SimilarityMap | None, HeadScores | None]:
        """Differentiable forward pass at the model's native resolution.

        ``image`` must already be at the native input size; use predict()
        for arbitrary sizes. Returns logits at decoder_input_size.
        """
        cfg = self.config
        arr = check_image(image)
        if arr.shape[:2] != (cfg.decoder_input_size, cfg.decoder_input_size):
            raise ConfigurationError(
                f"compute_logits expects a {cfg.decoder_input_size}x{cfg.decoder_input_size} "
                f"image, got {arr.shape[0]}x{arr.shape[1]}; use predict() for arbitrary sizes"
            )
        visual = resize_image(arr, cfg.visual_input_size, cfg.visual_input_size)

        similarity = None
        scores = None
        dense = None
        sim_input = None
        text = None
        if prompt is not None and str(prompt).strip():
            text_emb = self.backbones.encode_text(prompt)
            psi = self.projection(text_emb.values.to(self.projection.w_a.dtype))
            grid, heads = self.backbones.encode_patches(visual)
            similarity = dense_similarity_map(
                grid, psi, normalization=cfg.normalization, prompt=text_emb.source_prompt
            )
            dense, sim_input = self.conditioner.encode_similarity(similarity)
            if with_head_scores:
                scores = score_heads(grid, heads, psi)
            text = text_emb.source_prompt

        bundle = self.conditioner.build_prompt_bundle(
            geometric,
            dense,
            text=text or "",
            image_height=cfg.decoder_input_size,
            image_width=cfg.decoder_input_size,
            similarity_input=sim_input,
        )
        embedding = self.backbones.encode_image_for_decoder(arr)
        logits = self.decoder(embedding, bundle)
        return logits, similarity, scores

    @torch.no_grad()
    def predict(
        self,
        image: np.ndarray,
        prompt: str | None = None,
        geometric: GeometricPrompt | None = None,
        with_head_scores: bool = True,
    ) -> InferenceResult:
        """Segment an arbitrary-size image; outputs at the input resolution."""
        from .numerics import bilinear_resample

        cfg = self.config
        arr = check_image(image)
        h, w = arr.shape[:2]
        geom = geometric or GeometricPrompt()
        if geom.box is not None:
            check_box(geom.box, h, w)
        scaled = _scale_geometric(geom, h, w, cfg.decoder_input_size)
        native = resize_image(arr, cfg.decoder_input_size, cfg.decoder_input_size)
        logits, similarity, scores = self.compute_logits(
            native, prompt=prompt, geometric=scaled, with_head_scores=with_head_scores
        )
        full = bilinear_resample(logits.values, h, w)
        return InferenceResult(
            mask=binarize(full),
            logits=full.numpy().astype(np.float32),
            similarity=similarity,
            head_scores=scores,
            prompt=similarity.prompt if similarity is not None else None,
        )

    # ------------------------------------------------------------------
    # Parameter accounting and identity
    # ------------------------------------------------------------------

    def parameter_blocks(self) -> dict[str, list[nn.Parameter]]:
        """Named parameter groups for freezing and counting."""
        return {
            "text_encoder": list(self.backbones.text.parameters()),
            "patch_encoder": list(self.backbones.patch.parameters()),
            "image_encoder": list(self.backbones.image.parameters()),
            "projection": list(self.projection.parameters()),
            "prompt_conditioning": list(self.conditioner.parameters()),
            "decoder": list(self.decoder.parameters()),
        }

    def text_final_projection(self) -> list[nn.Parameter]:
        return self.backbones.text.final_projection_parameters()

    def fingerprint(self) -> str:
        """sha256 over all parameter names, shapes, and values."""
        digest = hashlib.sha256()
        for name, p in sorted(self.named_parameters(), key=lambda kv: kv[0]):
            digest.update(name.encode("utf-8"))
            digest.update(str(tuple(p.shape)).encode("utf-8"))
            digest.update(p.detach().cpu().numpy().astype(np.float64).tobytes())
        return digest.hexdigest()


# ---------------------------------------------------------------------------
# Checkpoint container
# ---------------------------------------------------------------------------

CHECKPOINT_FORMAT = "textseg-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(model: TextGuidedSegmentationModel, path, step: int = 0, regime: str = "clip_frozen") -> None:
    """Write trainable weights + config under a version header.

    Frozen encoder weights are not stored; they are rebuilt from the seeded
    config on load. The text encoder's final projection is stored so the
    partially-tuned regime round-trips.
    """
    final_proj = model.text_final_projection()
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "step": int(step),
        "regime": regime,
        "state": {
            "projection": model.projection.state_dict(),
            "conditioner": model.conditioner.state_dict(),
            "decoder": model.decoder.state_dict(),
            "text_final_projection": [p.detach().clone() for p in final_proj],
        },
    }
    torch.save(payload, path)


def load_checkpoint(path) -> TextGuidedSegmentationModel:
    """Rebuild a model from a checkpoint written by save_checkpoint."""
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except (OSError, RuntimeError, ValueError, EOFError,
            pickle.UnpicklingError, zipfile.BadZipFile) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_FORMAT} container")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {payload.get('version')!r} "
            f"(this build reads version {CHECKPOINT_VERSION})"
        )
    try:
        config_dict = dict(payload["config"])
        # The stored state supersedes any external projection file the model
        # was originally built from (which may no longer exist).
        config_dict["projection_weights"] = None
        config = ModelConfig.from_dict(config_dict)
        model = TextGuidedSegmentationModel(config)
        state = payload["state"]
        model.projection.load_state_dict(state["projection"])
        model.conditioner.load_state_dict(state["conditioner"])
        model.decoder.load_state_dict(state["decoder"])
        final = model.text_final_projection()
        saved = state["text_final_projection"]
        if len(final) != len(saved):
            raise CheckpointError("text final-projection layout mismatch")
        with torch.no_grad():
            for p, s in zip(final, saved):
                if p.shape != s.shape:
                    raise CheckpointError(
                        f"text final-projection shape mismatch: {tuple(p.shape)} vs {tuple(s.shape)}"
                    )
                p.copy_(s)
    except (KeyError, RuntimeError, TypeError, ConfigurationError) as exc:
        raise CheckpointError(f"malformed checkpoint {path}: {exc}") from exc
    return model


def checkpoint_step(path) -> int:
    """Read the step counter from a checkpoint header without rebuilding."""
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_FORMAT} container")
    return int(payload.get("step", 0))
