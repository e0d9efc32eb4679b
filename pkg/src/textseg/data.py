"""Dataset manifests, filename-to-prompt extraction, the curated-split
protocol for the boundary-precision dataset, and synthetic desk-scale data.

The synthetic generator draws seeded thin structures (lines, rings, grids)
on textured backgrounds. Every image carries the named structure plus one
distractor structure of a different category in the other image half, with
the ground-truth mask covering the named structure only, so the text prompt
is the only signal that disambiguates them.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import EmptyDatasetError, ManifestError, UnextractablePromptError
from .numerics import bilinear_resample

logger = logging.getLogger(__name__)

DATASET_KINDS = ("thinobject5k", "dis5k", "big", "synthetic")
SPLITS = ("train", "val")

# Published sizes of the full boundary-precision source and of the curated
# filtered split the protocol must reproduce when given that source.
DIS5K_SOURCE_COUNTS = {"train": 3000, "val": 470}
DIS5K_FILTERED_COUNTS = {"train": 2777, "val": 457}

DEFAULT_EXCLUSION_FILE = Path(__file__).parent / "data_files" / "dis5k_exclusions.txt"

MASK_THRESHOLD = 128

SYNTHETIC_CATEGORIES = ("line", "ring", "grid")
# Distractor placed alongside each named structure (never the same category).
DISTRACTOR_FOR = {"line": "grid", "ring": "grid", "grid": "line"}


@dataclass
class SampleRecord:
    """One image/mask pair with its extracted text prompt."""

    image_path: str
    mask_path: str
    prompt: str
    split: str
    dataset: str


@dataclass
class DatasetManifest:
    records: list[SampleRecord]
    counts: dict[str, int]
    provenance: list[str] = field(default_factory=list)

    def split(self, name: str) -> list[SampleRecord]:
        return [r for r in self.records if r.split == name]


def prompt_from_filename(path) -> str:
    """Extract the category prompt from a filename stem.

    The stem is split on underscores, hyphens, and whitespace; alphabetic
    tokens are collected (lowercased) up to the first numeric token. Digits
    glued to a word ("bike12") end the category after that word's alphabetic
    prefix. Multi-word categories join with single spaces.
    """
    stem = Path(str(path)).stem
    words: list[str] = []
    for token in re.split(r"[_\-\s]+", stem):
        if not token:
            continue
        match = re.match(r"[A-Za-z]+", token)
        if match is None:
            break
        words.append(match.group(0).lower())
        if match.end() < len(token):
            break
    if not words:
        raise UnextractablePromptError(f"no alphabetic category token in filename stem {stem!r}")
    return " ".join(words)


def load_exclusions(path=None) -> tuple[set[str], set[str]]:
    """Parse an exclusion list: one filename stem per line.

    Lines starting with ``category:`` exclude every sample whose extracted
    prompt equals the given category (the shipped list is a best-effort
    reconstruction, so category-level entries are supported alongside exact
    stems). ``#`` starts a comment.
    """
    stems: set[str] = set()
    categories: set[str] = set()
    source = Path(path) if path is not None else DEFAULT_EXCLUSION_FILE
    for raw in source.read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.lower().startswith("category:"):
            categories.add(line.split(":", 1)[1].strip().lower())
        else:
            stems.add(line)
    return stems, categories


def _split_dirs(root: Path, kind: str, split: str) -> tuple[Path, Path]:
    candidates = [(root / split / "images", root / split / "masks")]
    if kind == "dis5k":
        source_dir = "DIS-TR" if split == "train" else "DIS-VD"
        candidates.insert(0, (root / source_dir / "im", root / source_dir / "gt"))
    for images, masks in candidates:
        if images.is_dir():
            return images, masks
    return candidates[-1]


def build_manifest(root, kind: str, exclusions=None) -> DatasetManifest:
    """Scan a dataset root into a manifest with deterministic ordering.

    Samples without a mask or without an extractable prompt are excluded
    with a logged reason. For the ``dis5k`` kind the exclusion list is
    applied, and when the scan finds the full published source (3000 train /
    470 val images) the filtered counts must land exactly on 2777/457,
    otherwise the build fails loudly so the shipped list can be reviewed.
    """
    root = Path(root)
    if kind not in DATASET_KINDS:
        raise ManifestError(f"unknown dataset kind {kind!r}; expected one of {DATASET_KINDS}")
    if not root.is_dir():
        raise ManifestError(f"dataset root not found: {root}")
    excl_stems: set[str] = set()
    excl_categories: set[str] = set()
    if kind == "dis5k":
        excl_stems, excl_categories = load_exclusions(exclusions)

    records: list[SampleRecord] = []
    counts: dict[str, int] = {}
    source_counts: dict[str, int] = {}
    provenance: list[str] = [f"kind={kind}", f"root={root}"]

    for split in SPLITS:
        image_dir, mask_dir = _split_dirs(root, kind, split)
        if not image_dir.is_dir():
            counts[split] = 0
            source_counts[split] = 0
            continue
        image_files = sorted(
            p for p in image_dir.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg")
        )
        source_counts[split] = len(image_files)
        kept = 0
        for image_path in image_files:
            stem = image_path.stem
            mask_path = None
            for ext in (".png", ".jpg", ".jpeg"):
                candidate = mask_dir / (stem + ext)
                if candidate.is_file():
                    mask_path = candidate
                    break
            if mask_path is None:
                logger.warning("excluding %s: no mask found in %s", image_path.name, mask_dir)
                continue
            try:
                prompt = prompt_from_filename(image_path)
            except UnextractablePromptError as exc:
                logger.warning("excluding %s: %s", image_path.name, exc)
                continue
            if stem in excl_stems or prompt in excl_categories:
                logger.info("excluding %s: on the exclusion list", image_path.name)
                continue
            records.append(
                SampleRecord(
                    image_path=image_path.as_posix(),
                    mask_path=mask_path.as_posix(),
                    prompt=prompt,
                    split=split,
                    dataset=kind,
                )
            )
            kept += 1
        counts[split] = kept

    if not records:
        raise EmptyDatasetError(f"empty manifest: no usable samples under {root}")
    provenance.append(f"source_counts={source_counts}")
    provenance.append(f"kept_counts={counts}")
    if kind == "dis5k":
        provenance.append("exclusion_list=applied")
        if source_counts == DIS5K_SOURCE_COUNTS and counts != DIS5K_FILTERED_COUNTS:
            raise ManifestError(
                f"full source detected but filtered counts {counts} != published "
                f"{DIS5K_FILTERED_COUNTS}; review the exclusion list"
            )
    return DatasetManifest(records=records, counts=counts, provenance=provenance)


def save_manifest(manifest: DatasetManifest, path, relative_to=None) -> None:
    """Write a manifest as JSON-lines, one SampleRecord per line.

    Paths are stored POSIX-normalized; pass ``relative_to`` to make them
    portable across machines.
    """
    base = Path(relative_to) if relative_to is not None else None
    lines = []
    for r in manifest.records:
        row = {
            "image_path": _portable(r.image_path, base),
            "mask_path": _portable(r.mask_path, base),
            "prompt": r.prompt,
            "split": r.split,
            "dataset": r.dataset,
        }
        lines.append(json.dumps(row, sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n")


def _portable(p: str, base: Path | None) -> str:
    path = Path(p)
    if base is not None:
        try:
            path = path.relative_to(base)
        except ValueError:
            pass
    return path.as_posix()


def load_manifest(path, root=None) -> DatasetManifest:
    """Read a JSON-lines manifest; relative paths resolve against ``root``
    (default: the manifest's own directory)."""
    path = Path(path)
    base = Path(root) if root is not None else path.parent
    records = []
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        for key in ("image_path", "mask_path"):
            p = Path(row[key])
            if not p.is_absolute():
                p = base / p
            if not p.is_file():
                raise ManifestError(f"manifest references a missing file: {p}")
            row[key] = p.as_posix()
        records.append(SampleRecord(**row))
    if not records:
        raise EmptyDatasetError(f"empty manifest file: {path}")
    counts = {s: sum(1 for r in records if r.split == s) for s in SPLITS}
    return DatasetManifest(records=records, counts=counts, provenance=[f"loaded={path}"])


# ---------------------------------------------------------------------------
# Image / mask IO
# ---------------------------------------------------------------------------


def load_image(path) -> np.ndarray:
    """Load an image file as float32 HxWx3 in [0, 1]."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return arr


def save_image(image: np.ndarray, path) -> None:
    arr = np.clip(np.asarray(image), 0.0, 1.0)
    Image.fromarray((arr * 255.0).round().astype(np.uint8)).save(path)


def load_mask(path) -> np.ndarray:
    """Load a mask PNG as boolean (single channel, threshold 128)."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"))
    return arr >= MASK_THRESHOLD


def save_mask(mask: np.ndarray, path) -> None:
    Image.fromarray(np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)).save(path)


def mask_bbox(mask: np.ndarray) -> tuple[float, float, float, float]:
    """Tight (x_min, y_min, x_max, y_max) box around a non-empty mask,
    max edges exclusive (pixel-edge convention)."""
    mask = np.asarray(mask, dtype=bool)
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        raise ValueError("cannot take the bounding box of an empty mask")
    return (float(xs.min()), float(ys.min()), float(xs.max() + 1), float(ys.max() + 1))


# ---------------------------------------------------------------------------
# Synthetic thin-structure scenes
# ---------------------------------------------------------------------------


def _pixel_grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    yy, xx = np.mgrid[0:size, 0:size]
    return yy.astype(np.float64), xx.astype(np.float64)


def _line_mask(size: int, p0, p1, half_width: float = 1.5) -> np.ndarray:
    yy, xx = _pixel_grid(size)
    x0, y0 = p0
    x1, y1 = p1
    dx, dy = x1 - x0, y1 - y0
    length_sq = max(dx * dx + dy * dy, 1e-9)
    t = np.clip(((xx - x0) * dx + (yy - y0) * dy) / length_sq, 0.0, 1.0)
    dist = np.hypot(xx - (x0 + t * dx), yy - (y0 + t * dy))
    return dist <= half_width


def _ring_mask(size: int, center, radius: float, half_width: float = 1.5) -> np.ndarray:
    yy, xx = _pixel_grid(size)
    dist = np.hypot(xx - center[0], yy - center[1])
    return np.abs(dist - radius) <= half_width


def _grid_mask(size: int, rect, spacing: int, bar: int = 2) -> np.ndarray:
    yy, xx = _pixel_grid(size)
    x0, y0, x1, y1 = rect
    inside = (xx >= x0) & (xx < x1) & (yy >= y0) & (yy < y1)
    bars = (((xx - x0) % spacing) < bar) | (((yy - y0) % spacing) < bar)
    return inside & bars


def _region_boxes(size: int, rng: np.random.Generator) -> tuple[tuple, tuple]:
    """Two non-overlapping half regions (named, distractor), random split axis."""
    margin = 2
    if rng.random() < 0.5:
        a = (margin, margin, size // 2 - margin, size - margin)
        b = (size // 2 + margin, margin, size - margin, size - margin)
    else:
        a = (margin, margin, size - margin, size // 2 - margin)
        b = (margin, size // 2 + margin, size - margin, size - margin)
    if rng.random() < 0.5:
        return a, b
    return b, a


def _structure_mask(category: str, size: int, region, rng: np.random.Generator) -> np.ndarray:
    x0, y0, x1, y1 = region
    if category == "line":
        if (x1 - x0) >= (y1 - y0):
            p0 = (x0 + rng.uniform(0, 2), rng.uniform(y0 + 2, y1 - 2))
            p1 = (x1 - rng.uniform(0, 2), rng.uniform(y0 + 2, y1 - 2))
        else:
            p0 = (rng.uniform(x0 + 2, x1 - 2), y0 + rng.uniform(0, 2))
            p1 = (rng.uniform(x0 + 2, x1 - 2), y1 - rng.uniform(0, 2))
        return _line_mask(size, p0, p1)
    if category == "ring":
        cx = (x0 + x1) / 2 + rng.uniform(-2, 2)
        cy = (y0 + y1) / 2 + rng.uniform(-2, 2)
        radius = rng.uniform(0.25, 0.4) * min(x1 - x0, y1 - y0)
        return _ring_mask(size, (cx, cy), radius)
    if category == "grid":
        gx0 = x0 + rng.uniform(0, 3)
        gy0 = y0 + rng.uniform(0, 3)
        rect = (gx0, gy0, x1 - rng.uniform(0, 3), y1 - rng.uniform(0, 3))
        spacing = int(rng.integers(6, 9))
        return _grid_mask(size, rect, spacing)
    raise ValueError(f"unknown synthetic category {category!r}")


def _textured_background(size: int, rng: np.random.Generator) -> np.ndarray:
    coarse = rng.uniform(0.15, 0.5, size=(8, 8))
    smooth = bilinear_resample(coarse, size, size).numpy()
    noise = rng.normal(0.0, 0.02, size=(size, size))
    return np.clip(smooth + noise, 0.0, 1.0)


def _render_scene(size: int, structures: list[np.ndarray], rng: np.random.Generator) -> np.ndarray:
    bg = _textured_background(size, rng)
    img = np.stack([bg] * 3, axis=-1)
    for mask in structures:
        intensity = rng.uniform(0.85, 1.0)
        img[mask] = intensity
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def generate_sample(seed: int, index: int, size: int) -> tuple[np.ndarray, np.ndarray, str]:
    """One deterministic (image, mask, category) sample.

    The named structure lands in one half, a distractor of a different
    category in the other; the mask covers the named structure only.
    """
    category = SYNTHETIC_CATEGORIES[index % len(SYNTHETIC_CATEGORIES)]
    rng = np.random.default_rng([seed, index])
    named_region, other_region = _region_boxes(size, rng)
    named = _structure_mask(category, size, named_region, rng)
    distractor = _structure_mask(DISTRACTOR_FOR[category], size, other_region, rng)
    image = _render_scene(size, [named, distractor], rng)
    return image, named, category


def generate_synthetic_dataset(seed: int, n: int, size: int, root, split: str = "train") -> DatasetManifest:
    """Write n synthetic samples (images, masks, manifest) under root."""
    if n < 1:
        raise ValueError("n must be >= 1")
    root = Path(root)
    image_dir = root / split / "images"
    mask_dir = root / split / "masks"
    image_dir.mkdir(parents=True, exist_ok=True)
    mask_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(n):
        image, mask, category = generate_sample(seed, i, size)
        name = f"{category}_{i}.png"
        save_image(image, image_dir / name)
        save_mask(mask, mask_dir / name)
        records.append(
            SampleRecord(
                image_path=(image_dir / name).as_posix(),
                mask_path=(mask_dir / name).as_posix(),
                prompt=category,
                split=split,
                dataset="synthetic",
            )
        )
    manifest = DatasetManifest(
        records=records,
        counts={split: n, **{s: 0 for s in SPLITS if s != split}},
        provenance=[f"kind=synthetic seed={seed} n={n} size={size}"],
    )
    save_manifest(manifest, root / f"manifest_{split}.jsonl")
    return manifest


def generate_pair_scene(seed: int, size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, tuple]:
    """A line and a grid inside one shared box.

    Returns (image, line_mask, grid_mask, box) where the box covers both
    structures; used for prompt-steering checks.
    """
    rng = np.random.default_rng([seed, 7919])
    region_a, region_b = _region_boxes(size, rng)
    line = _structure_mask("line", size, region_a, rng)
    grid = _structure_mask("grid", size, region_b, rng)
    image = _render_scene(size, [line, grid], rng)
    both = line | grid
    x0, y0, x1, y1 = mask_bbox(both)
    box = (max(0.0, x0 - 1), max(0.0, y0 - 1), min(float(size), x1 + 1), min(float(size), y1 + 1))
    return image, line, grid, box
