"""textseg: text-guided segmentation with dense similarity-map prompts.

A text category is projected into a visual patch-feature space, compared
against dense patch features to form a similarity map, and that map — after
a trainable convolutional prompt encoder — conditions a promptable mask
decoder alongside optional boxes and points.
"""

__version__ = "0.1.0"

from .backbones import BackboneBundle, BackboneConfig
from .conditioning import GeometricPrompt, PromptBundle, build_prompt_bundle
from .data import (
    DatasetManifest,
    SampleRecord,
    build_manifest,
    generate_synthetic_dataset,
    load_manifest,
    prompt_from_filename,
    save_manifest,
)
from .decoder import MaskDecoder, MaskLogits, binarize, dice_loss, segmentation_loss
from .errors import (
    CheckpointError,
    ConfigurationError,
    DegenerateVectorError,
    EmptyDatasetError,
    EmptyPromptError,
    InvalidBoxError,
    InvalidInputError,
    InvalidPromptError,
    ManifestError,
    TextsegError,
    TrainingDivergedError,
    UnextractablePromptError,
)
from .estimator import TextGuidedSegmenter
from .metrics import EvalRecord, aggregate, boundary_iou, default_band_radius, iou
from .model import (
    InferenceResult,
    ModelConfig,
    TextGuidedSegmentationModel,
    load_checkpoint,
    save_checkpoint,
)
from .numerics import bilinear_resample, cosine_similarity, spatial_softmax
from .projection import (
    HeadScores,
    SimilarityMap,
    TextProjection,
    attention_pool,
    dense_similarity_map,
    load_projection,
    save_projection,
    score_heads,
)
from .rle import decode_mask, encode_mask
from .training import (
    FREEZE_REGIMES,
    FreezeRegime,
    ParamReport,
    TrainConfig,
    TrainResult,
    apply_freeze_regime,
    count_params,
    evaluate,
    train,
)

__all__ = [
    "__version__",
    "BackboneBundle",
    "BackboneConfig",
    "GeometricPrompt",
    "PromptBundle",
    "build_prompt_bundle",
    "DatasetManifest",
    "SampleRecord",
    "build_manifest",
    "generate_synthetic_dataset",
    "load_manifest",
    "prompt_from_filename",
    "save_manifest",
    "MaskDecoder",
    "MaskLogits",
    "binarize",
    "dice_loss",
    "segmentation_loss",
    "CheckpointError",
    "ConfigurationError",
    "DegenerateVectorError",
    "EmptyDatasetError",
    "EmptyPromptError",
    "InvalidBoxError",
    "InvalidInputError",
    "InvalidPromptError",
    "ManifestError",
    "TextsegError",
    "TrainingDivergedError",
    "UnextractablePromptError",
    "TextGuidedSegmenter",
    "EvalRecord",
    "aggregate",
    "boundary_iou",
    "default_band_radius",
    "iou",
    "InferenceResult",
    "ModelConfig",
    "TextGuidedSegmentationModel",
    "load_checkpoint",
    "save_checkpoint",
    "bilinear_resample",
    "cosine_similarity",
    "spatial_softmax",
    "HeadScores",
    "SimilarityMap",
    "TextProjection",
    "attention_pool",
    "dense_similarity_map",
    "load_projection",
    "save_projection",
    "score_heads",
    "decode_mask",
    "encode_mask",
    "FREEZE_REGIMES",
    "FreezeRegime",
    "ParamReport",
    "TrainConfig",
    "TrainResult",
    "apply_freeze_regime",
    "count_params",
    "evaluate",
    "train",
]
