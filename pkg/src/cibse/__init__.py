"""cibse: a from-scratch single-shot helmet-detection engine and evaluation toolkit.

Four model variants of the YOLOv8n family (baseline, SE attention, compact
inverted blocks, both), a pure-numpy inference engine with oracle-verified
kernels, the full image-to-detections pipeline, and detection metrics
(precision, recall, mAP50, mAP50-95, PR curves).
"""

from .checkpoint import load_checkpoint, save_checkpoint, synth_weights
from .dataset import load_dataset, split_dataset
from .errors import (
    BadMagicError,
    BindingError,
    CheckpointError,
    CibseError,
    DataError,
    DuplicateNameError,
    ShapeError,
    TruncatedError,
    VersionError,
)
from .metrics import (
    EvalReport,
    GroundTruth,
    average_precision,
    early_stop,
    evaluate,
    export_pr_curve,
    iou,
    match_detections,
    precision_recall,
)
from .model import (
    Model,
    ModelGraph,
    VARIANTS,
    build_variant,
    count_parameters,
    estimate_flops,
    forward,
    summarize,
    weight_manifest,
)
from .pipeline import (
    Detection,
    LetterboxTransform,
    decode_predictions,
    mirror_letterbox,
    nms,
    unletterbox,
)
from .ppm import read_image, write_image
from .tensor_ops import (
    BnParams,
    ConvParams,
    concat_channels,
    conv2d,
    fold_batchnorm,
    global_avg_pool,
    maxpool2d,
    silu,
    upsample_nearest2x,
)

__version__ = "0.1.0"
