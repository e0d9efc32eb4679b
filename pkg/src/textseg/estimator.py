"""scikit-learn style wrapper: fit on a manifest, predict masks from images.

Hyperparameters are plain constructor arguments, so ``get_params`` /
``set_params`` and clone-based grid search work out of the box. Fitted state
lives in trailing-underscore attributes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .backbones import BackboneConfig
from .conditioning import GeometricPrompt
from .data import DatasetManifest, load_manifest
from .metrics import iou
from .model import ModelConfig, TextGuidedSegmentationModel
from .training import TrainConfig, evaluate, train


class TextGuidedSegmenter(BaseEstimator):
    """Text-promptable segmentation as an estimator.

    fit(manifest) trains the trainable blocks on the manifest's training
    split; predict(images, prompts) returns boolean masks; transform(images,
    prompts) returns the dense similarity maps (the semantic features the
    decoder consumes).
    """

    def __init__(
        self,
        mode: str = "toy",
        seed: int = 0,
        d_hidden: int = 256,
        normalization: str = "unit_interval",
        learning_rate: float = 0.001,
        batch_size: int = 4,
        epochs: int = 30,
        steps: int | None = None,
        momentum: float = 0.0,
        regime: str = "clip_frozen",
        use_gt_box: bool = True,
    ):
        self.mode = mode
        self.seed = seed
        self.d_hidden = d_hidden
        self.normalization = normalization
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.steps = steps
        self.momentum = momentum
        self.regime = regime
        self.use_gt_box = use_gt_box

    def _build_model(self) -> TextGuidedSegmentationModel:
        backbone = BackboneConfig(mode=self.mode, seed=self.seed)
        return TextGuidedSegmentationModel(
            ModelConfig(backbone=backbone, d_hidden=self.d_hidden, normalization=self.normalization)
        )

    def fit(self, X, y=None):
        """Train on a DatasetManifest, record list, or manifest file path."""
        manifest = load_manifest(X) if isinstance(X, (str, bytes)) or hasattr(X, "__fspath__") else X
        config = TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            steps=self.steps,
            momentum=self.momentum,
            seed=self.seed,
            regime=self.regime,
            use_gt_box=self.use_gt_box,
        )
        self.model_ = self._build_model()
        self.train_result_ = train(config, manifest, self.model_)
        self.n_steps_ = self.train_result_.steps_run
        return self

    def _fitted_model(self) -> TextGuidedSegmentationModel:
        if not hasattr(self, "model_"):
            raise NotFittedError(
                "This TextGuidedSegmenter instance is not fitted yet; call fit first."
            )
        return self.model_

    @staticmethod
    def _per_item(images, prompts, boxes):
        single = isinstance(images, np.ndarray) and getattr(images, "ndim", 0) == 3
        items = [images] if single else list(images)
        n = len(items)
        if isinstance(prompts, str) or prompts is None:
            prompts = [prompts] * n
        if boxes is None or (isinstance(boxes, tuple) and len(boxes) == 4):
            boxes = [boxes] * n
        return single, items, list(prompts), list(boxes)

    def predict(self, X, prompts=None, boxes=None):
        """Boolean masks for images under text and/or box prompts.

        X is one HxWx3 image or a sequence of them; prompts/boxes broadcast
        when given as a single value.
        """
        model = self._fitted_model()
        single, items, prompt_list, box_list = self._per_item(X, prompts, boxes)
        masks = []
        for image, prompt, box in zip(items, prompt_list, box_list):
            geom = GeometricPrompt(box=box) if box is not None else None
            masks.append(model.predict(image, prompt=prompt, geometric=geom, with_head_scores=False).mask)
        return masks[0] if single else masks

    def transform(self, X, prompts=None):
        """Dense similarity maps (one 2-D float array per image)."""
        model = self._fitted_model()
        single, items, prompt_list, _ = self._per_item(X, prompts, None)
        maps = []
        for image, prompt in zip(items, prompt_list):
            if prompt is None or not str(prompt).strip():
                raise ValueError("transform requires a text prompt per image")
            result = model.predict(image, prompt=prompt, with_head_scores=False)
            maps.append(result.similarity.grid.detach().numpy())
        return maps[0] if single else maps

    def score(self, X, y=None) -> float:
        """Mean IoU over a manifest/record list (geometry per use_gt_box)."""
        model = self._fitted_model()
        records = X.records if isinstance(X, DatasetManifest) else list(X)
        _, summary = evaluate(model, records, use_gt_box=self.use_gt_box)
        return summary["miou"]

    def score_masks(self, masks_pred, masks_true) -> float:
        """Mean IoU between two equal-length mask sequences."""
        pairs = list(zip(masks_pred, masks_true))
        if not pairs:
            raise ValueError("score_masks needs at least one mask pair")
        return float(np.mean([iou(p, t) for p, t in pairs]))
