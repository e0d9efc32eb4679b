"""Command-line workflow: train, eval, infer.

Every failure exits nonzero with a single ``error: <reason>`` line on
stderr, so callers can match on output without parsing tracebacks.
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click
import numpy as np
from PIL import Image

from .config import RunConfig, dump_effective, load_config
from .conditioning import GeometricPrompt
from .data import build_manifest, generate_synthetic_dataset, load_image, load_manifest
from .errors import TextsegError
from .metrics import render_report, write_records_jsonl
from .model import TextGuidedSegmentationModel, load_checkpoint, similarity_to_grayscale
from .training import evaluate, train


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _parse_box(text: str | None):
    if text is None:
        return None
    parts = text.split(",")
    if len(parts) != 4:
        raise TextsegError(f"--box expects x0,y0,x1,y1 (got {text!r})")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise TextsegError(f"--box values must be numbers (got {text!r})") from None


def _ensure_dataset(config: RunConfig):
    root = Path(config.data.root)
    if config.data.kind == "synthetic" and config.data.generate and not root.is_dir():
        n = config.data.num_samples
        generate_synthetic_dataset(config.seed, n, config.data.image_size, root, split="train")
        generate_synthetic_dataset(
            config.seed + 1, max(2, n // 5), config.data.image_size, root, split="val"
        )
    return build_manifest(root, config.data.kind, exclusions=config.data.exclusions)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress at INFO level.")
def main(verbose: bool):
    """Text-guided segmentation workflow."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command("train")
@click.option("--config", "config_path", required=True, type=click.Path(), help="Run config YAML.")
def cmd_train(config_path: str):
    """Train on the configured dataset; write checkpoints and the loss curve."""
    try:
        config = load_config(config_path)
        out_dir = Path(config.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        dump_effective(config, out_dir / "effective_config.yaml")
        manifest = _ensure_dataset(config)
        model = TextGuidedSegmentationModel(config.model_config())
        result = train(config.train, manifest, model, out_dir=out_dir)
        click.echo(
            f"trained {result.steps_run} steps; final loss "
            f"{result.loss_curve[-1][1]:.6f}; checkpoint {result.checkpoint_path}"
        )
    except (TextsegError, OSError) as exc:
        _fail(str(exc))


@main.command("eval")
@click.option("--config", "config_path", type=click.Path(), default=None, help="Run config YAML.")
@click.option("--checkpoint", required=True, type=click.Path(), help="Checkpoint to evaluate.")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(), help="Manifest JSONL.")
@click.option("--out", "out_dir", type=click.Path(), default=None, help="Directory for records/report.")
def cmd_eval(config_path, checkpoint, manifest_path, out_dir):
    """Per-image metrics (JSONL) plus an aggregate mIoU/mBIoU/time table."""
    try:
        settings = load_config(config_path).eval if config_path else None
        model = load_checkpoint(checkpoint)
        manifest = load_manifest(manifest_path)
        records = manifest.split("val") or manifest.records
        results, summary = evaluate(
            model,
            records,
            use_gt_box=settings.use_gt_box if settings else True,
            band_radius=settings.band_radius if settings else None,
        )
        table = render_report(
            [
                {
                    "method": f"textseg-{model.config.backbone.mode}",
                    "miou": summary["miou"],
                    "mbiou": summary["mbiou"],
                    "time_ms": summary["mean_time_ms"],
                }
            ]
        )
        click.echo(table)
        if out_dir:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            write_records_jsonl(results, out / "records.jsonl")
            (out / "report.txt").write_text(table + "\n")
    except (TextsegError, OSError) as exc:
        _fail(str(exc))


@main.command("infer")
@click.option("--image", "image_path", required=True, type=click.Path(), help="Input PNG/JPEG.")
@click.option("--prompt", required=True, help="Text category prompt.")
@click.option("--box", "box_text", default=None, help="Optional box x0,y0,x1,y1 in pixels.")
@click.option("--checkpoint", type=click.Path(), default=None, help="Checkpoint (seeded init if omitted).")
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Output directory.")
def cmd_infer(image_path, prompt, box_text, checkpoint, out_dir):
    """Write mask.png (binary) and similarity.png (grayscale) for one image."""
    try:
        box = _parse_box(box_text)
        model = load_checkpoint(checkpoint) if checkpoint else TextGuidedSegmentationModel()
        image = load_image(image_path)
        geometric = GeometricPrompt(box=box) if box is not None else None
        result = model.predict(image, prompt=prompt, geometric=geometric)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        Image.fromarray(np.where(result.mask, 255, 0).astype(np.uint8)).save(out / "mask.png")
        gray = similarity_to_grayscale(result.similarity, image.shape[0], image.shape[1])
        Image.fromarray(gray).save(out / "similarity.png")
        score = result.head_scores.best if result.head_scores else float("nan")
        click.echo(f"wrote {out / 'mask.png'} and {out / 'similarity.png'} (best head score {score:.4f})")
    except (TextsegError, OSError) as exc:
        _fail(str(exc))


if __name__ == "__main__":
    main()
