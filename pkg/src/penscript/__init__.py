"""Online handwriting recognition from multichannel pen sensor time-series.

The package covers the full pipeline: recording ingestion and label
encoding (dataio), resampling and stochastic augmentation (preprocess),
force-based stroke segmentation (segment), edit-distance metrics
(metrics), classification and sequence losses with decoding (losses),
a small numpy autodiff stack with the recognition models (netcore), and
a command line front end (cli).
"""

from penscript.dataio import (
    Alphabet,
    FoldPlan,
    RecordingFormatError,
    Sample,
    build_alphabet,
    equations_alphabet,
    make_splits,
    parse_recording,
    write_recording,
)
from penscript.preprocess import AugmentConfig, augment, bezier, interpolate
from penscript.segment import (
    SegmentationError,
    SplitResult,
    default_constraints,
    detect_strokes,
    split_equation,
)
from penscript.metrics import (
    EditScript,
    cer,
    confusion_matrix,
    crr,
    edit_distance,
    error_positions,
    wer,
)
from penscript.losses import (
    CTCInfeasibleError,
    LossOutput,
    LossParams,
    beam_decode,
    boot_hard,
    boot_soft,
    cce,
    ctc_loss,
    focal,
    gce,
    greedy_decode,
    joint_opt,
    log_softmax,
    lsr,
    sce,
)

__version__ = "0.1.0"

__all__ = [
    "Alphabet", "FoldPlan", "RecordingFormatError", "Sample",
    "build_alphabet", "equations_alphabet", "make_splits",
    "parse_recording", "write_recording",
    "AugmentConfig", "augment", "bezier", "interpolate",
    "SegmentationError", "SplitResult", "default_constraints",
    "detect_strokes", "split_equation",
    "EditScript", "cer", "confusion_matrix", "crr", "edit_distance",
    "error_positions", "wer",
    "CTCInfeasibleError", "LossOutput", "LossParams", "beam_decode",
    "boot_hard", "boot_soft", "cce", "ctc_loss", "focal", "gce",
    "greedy_decode", "joint_opt", "log_softmax", "lsr", "sce",
    "__version__",
]
