"""Freeze regimes, the SGD loop, parameter accounting, and evaluation.

Freezing is enforced through ``requires_grad`` so "frozen" is checkable
bit-for-bit: the optimizer only ever sees trainable parameters, and a debug
mode additionally asserts per step that no frozen parameter accumulated a
gradient.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .conditioning import GeometricPrompt
from .data import DatasetManifest, SampleRecord, load_image, load_mask, mask_bbox
from .decoder import segmentation_loss
from .errors import ConfigurationError, EmptyDatasetError, TrainingDivergedError
from .metrics import EvalRecord, aggregate, boundary_iou, default_band_radius, iou
from .model import TextGuidedSegmentationModel, resize_image, resize_mask, save_checkpoint

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FreezeRegime:
    """Per-block trainable assignment.

    The patch and image encoders are always frozen; the decoder, the prompt
    conditioning stack, and the text projection always train. The two
    regimes differ only in whether the text encoder's final projection
    layer is tuned.
    """

    name: str
    tune_text_final_projection: bool

    ALWAYS_TRAINABLE = ("projection", "prompt_conditioning", "decoder")
    ALWAYS_FROZEN = ("patch_encoder", "image_encoder")


FREEZE_REGIMES = {
    "clip_frozen": FreezeRegime("clip_frozen", tune_text_final_projection=False),
    "clip_partial": FreezeRegime("clip_partial", tune_text_final_projection=True),
}


def resolve_regime(regime) -> FreezeRegime:
    if isinstance(regime, FreezeRegime):
        return regime
    try:
        return FREEZE_REGIMES[regime]
    except KeyError:
        raise ConfigurationError(
            f"unknown freeze regime {regime!r}; expected one of {sorted(FREEZE_REGIMES)}"
        ) from None


def apply_freeze_regime(model: TextGuidedSegmentationModel, regime) -> TextGuidedSegmentationModel:
    """Set requires_grad so exactly the regime's trainable set receives gradients."""
    regime = resolve_regime(regime)
    blocks = model.parameter_blocks()
    for name in ("text_encoder",) + FreezeRegime.ALWAYS_FROZEN:
        for p in blocks[name]:
            p.requires_grad_(False)
    for name in FreezeRegime.ALWAYS_TRAINABLE:
        for p in blocks[name]:
            p.requires_grad_(True)
    if regime.tune_text_final_projection:
        for p in model.text_final_projection():
            p.requires_grad_(True)
    return model


def trainable_parameters(model: torch.nn.Module) -> list[torch.nn.Parameter]:
    return [p for p in model.parameters() if p.requires_grad]


@dataclass
class ParamReport:
    trainable: int
    total: int
    per_block: dict[str, tuple[int, int]]  # name -> (trainable, total)

    @property
    def fraction(self) -> float:
        return self.trainable / self.total if self.total else 0.0


def count_params(model: TextGuidedSegmentationModel, regime=None) -> ParamReport:
    """Exact integer parameter counts per declared block.

    With a regime, counts reflect that regime's assignment; without one they
    reflect the model's current requires_grad flags.
    """
    regime = resolve_regime(regime) if regime is not None else None
    blocks = model.parameter_blocks()
    final_ids = {id(p) for p in model.text_final_projection()}
    per_block: dict[str, tuple[int, int]] = {}
    trainable = 0
    total = 0
    for name, params in blocks.items():
        block_total = sum(p.numel() for p in params)
        if regime is None:
            block_train = sum(p.numel() for p in params if p.requires_grad)
        elif name in FreezeRegime.ALWAYS_TRAINABLE:
            block_train = block_total
        elif name == "text_encoder" and regime.tune_text_final_projection:
            block_train = sum(p.numel() for p in params if id(p) in final_ids)
        else:
            block_train = 0
        per_block[name] = (block_train, block_total)
        trainable += block_train
        total += block_total
    return ParamReport(trainable=trainable, total=total, per_block=per_block)


@dataclass
class TrainConfig:
    """Optimizer loop settings; defaults match the published recipe."""

    learning_rate: float = 0.001
    batch_size: int = 4
    epochs: int = 30
    steps: int | None = None  # optional hard cap on optimizer steps
    momentum: float = 0.0
    seed: int = 0
    regime: str = "clip_frozen"
    bce_weight: float = 1.0
    dice_weight: float = 1.0
    grad_accumulation: int = 1
    use_gt_box: bool = True  # train with the ground-truth box as geometric prompt
    debug_grad_checks: bool = False

    def __post_init__(self):
        for name in ("learning_rate", "batch_size", "epochs", "grad_accumulation"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.steps is not None and self.steps <= 0:
            raise ConfigurationError("steps must be positive when set")
        if self.momentum < 0:
            raise ConfigurationError("momentum must be >= 0")
        if self.batch_size % self.grad_accumulation != 0:
            raise ConfigurationError("grad_accumulation must divide batch_size")
        resolve_regime(self.regime)


@dataclass
class TrainResult:
    loss_curve: list[tuple[int, float]]  # (step, mean batch loss)
    epoch_losses: list[float]
    steps_run: int
    checkpoint_path: str | None = None


@dataclass
class _Loaded:
    image: np.ndarray
    mask: np.ndarray
    prompt: str
    box: tuple[float, float, float, float]
    name: str


def _load_for_training(records: list[SampleRecord], size: int) -> list[_Loaded]:
    loaded = []
    for r in records:
        image = resize_image(load_image(r.image_path), size, size)
        mask = resize_mask(load_mask(r.mask_path), size, size)
        loaded.append(
            _Loaded(
                image=image,
                mask=mask,
                prompt=r.prompt,
                box=mask_bbox(mask),
                name=Path(r.image_path).stem,
            )
        )
    return loaded


def _training_records(manifest) -> list[SampleRecord]:
    records = manifest.records if isinstance(manifest, DatasetManifest) else list(manifest)
    train = [r for r in records if r.split == "train"]
    return train if train else records


def _assert_frozen_clean(model: torch.nn.Module) -> None:
    for name, p in model.named_parameters():
        if not p.requires_grad and p.grad is not None and p.grad.abs().max().item() != 0.0:
            raise AssertionError(f"gradient reached frozen parameter {name}")


def train(
    config: TrainConfig,
    manifest,
    model: TextGuidedSegmentationModel,
    out_dir=None,
) -> TrainResult:
    """SGD over the segmentation loss; deterministic for a fixed seed.

    Samples are shuffled per epoch with a seeded generator and consumed in
    batches of ``batch_size`` (the last batch of an epoch may be short). The
    optimizer steps once per batch; with ``grad_accumulation`` > 1 the batch
    is split into that many forward/backward chunks first. Aborts with the
    offending step and sample names on a non-finite loss.
    """
    records = _training_records(manifest)
    if not records:
        raise EmptyDatasetError("training manifest holds no samples")
    apply_freeze_regime(model, config.regime)
    size = model.config.decoder_input_size
    samples = _load_for_training(records, size)

    optimizer = torch.optim.SGD(
        trainable_parameters(model), lr=config.learning_rate, momentum=config.momentum
    )
    rng = np.random.default_rng(config.seed)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    loss_curve: list[tuple[int, float]] = []
    epoch_losses: list[float] = []
    step = 0
    done = False
    checkpoint_path = None
    for epoch in range(config.epochs):
        order = rng.permutation(len(samples))
        epoch_total = 0.0
        epoch_batches = 0
        for start in range(0, len(order), config.batch_size):
            batch = [samples[i] for i in order[start : start + config.batch_size]]
            optimizer.zero_grad()
            chunk_size = max(1, len(batch) // config.grad_accumulation)
            batch_loss = 0.0
            for c0 in range(0, len(batch), chunk_size):
                chunk = batch[c0 : c0 + chunk_size]
                chunk_loss = 0.0
                for s in chunk:
                    geom = GeometricPrompt(box=s.box) if config.use_gt_box else None
                    logits, _, _ = model.compute_logits(s.image, prompt=s.prompt, geometric=geom)
                    chunk_loss = chunk_loss + segmentation_loss(
                        logits, s.mask, bce_weight=config.bce_weight, dice_weight=config.dice_weight
                    )
                scaled = chunk_loss / len(batch)
                scaled.backward()
                batch_loss += float(scaled.detach())
            if not np.isfinite(batch_loss):
                names = ", ".join(s.name for s in batch)
                raise TrainingDivergedError(
                    f"non-finite loss {batch_loss} at step {step} (samples: {names})"
                )
            optimizer.step()
            if config.debug_grad_checks:
                _assert_frozen_clean(model)
            step += 1
            loss_curve.append((step, batch_loss))
            epoch_total += batch_loss
            epoch_batches += 1
            if config.steps is not None and step >= config.steps:
                done = True
                break
        if epoch_batches:
            mean_loss = epoch_total / epoch_batches
            epoch_losses.append(mean_loss)
            logger.info("epoch %d: mean loss %.6f (%d steps)", epoch, mean_loss, step)
        if out_dir is not None:
            checkpoint_path = str(out_dir / f"epoch_{epoch:04d}.pt")
            save_checkpoint(model, checkpoint_path, step=step, regime=config.regime)
        if done:
            break
    if out_dir is not None:
        checkpoint_path = str(out_dir / "final.pt")
        save_checkpoint(model, checkpoint_path, step=step, regime=config.regime)
        write_loss_csv(loss_curve, out_dir / "loss.csv")
    return TrainResult(
        loss_curve=loss_curve,
        epoch_losses=epoch_losses,
        steps_run=step,
        checkpoint_path=checkpoint_path,
    )


def write_loss_csv(curve: list[tuple[int, float]], path) -> None:
    lines = ["step,loss"] + [f"{s},{v:.10f}" for s, v in curve]
    Path(path).write_text("\n".join(lines) + "\n")


def read_loss_csv(path) -> list[tuple[int, float]]:
    rows = Path(path).read_text().splitlines()[1:]
    return [(int(r.split(",")[0]), float(r.split(",")[1])) for r in rows if r.strip()]


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def evaluate(
    model: TextGuidedSegmentationModel,
    records: list[SampleRecord],
    use_gt_box: bool = True,
    band_radius: int | None = None,
) -> tuple[list[EvalRecord], dict[str, float]]:
    """Per-image IoU/boundary-IoU with wall-clock timing (reported only).

    The geometric prompt defaults to the ground-truth bounding box; pass
    ``use_gt_box=False`` for text-only evaluation. The summary dict holds
    miou, mbiou, mean_time_ms, and count.
    """
    if not records:
        raise EmptyDatasetError("evaluation requires at least one record")
    results = []
    model.eval()
    for r in records:
        image = load_image(r.image_path)
        gt = load_mask(r.mask_path)
        geom = GeometricPrompt(box=mask_bbox(gt)) if use_gt_box and gt.any() else None
        t0 = time.perf_counter()
        pred = model.predict(image, prompt=r.prompt, geometric=geom, with_head_scores=False)
        elapsed_ms = (time.perf_counter() - t0) * 1000.0
        d = band_radius if band_radius is not None else default_band_radius(*gt.shape)
        results.append(
            EvalRecord(
                image_id=Path(r.image_path).stem,
                iou=iou(pred.mask, gt),
                biou=boundary_iou(pred.mask, gt, d),
                prompt=r.prompt,
                time_ms=elapsed_ms,
            )
        )
    m_iou, m_biou = aggregate(results)
    summary = {
        "miou": m_iou,
        "mbiou": m_biou,
        "mean_time_ms": float(np.mean([x.time_ms for x in results])),
        "count": float(len(results)),
    }
    return results, summary
