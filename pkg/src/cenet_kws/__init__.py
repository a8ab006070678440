"""Small-footprint keyword spotting toolkit.

End-to-end pieces for 12-way spoken-command classification on
one-second 16 kHz clips: an MFCC/log-mel front-end, a compact
bottleneck-residual network family (CENet-6/24/40) with an optional
non-local graph-convolutional context module, footprint accounting,
an SGD trainer, and FAR/FRR ROC evaluation.
"""

from .audio import (AudioClip, FeatureMatrix, FrontendConfig, augment_noise,
                    compute_fbank, compute_features, compute_mfcc, load_wav, time_shift)
from .data import (KEYWORDS, LABEL_NAMES, N_CLASSES, SILENCE_LABEL, UNKNOWN_LABEL,
                   SampleRecord, assign_split, make_silence, scan)
from .estimator import AudioFeaturizer, CENetClassifier
from .evaluate import (RocCurve, accuracy, export_stage_feature_map, roc_for_keyword,
                       vertical_average)
from .footprint import FootprintReport, count_macs, count_params
from .gcn import NonLocalGCN, affinity, augment, gaussian_affinity, insert_gcn, message_pass
from .model import BlockSpec, CENetModel, ModelConfig, VARIANTS, build, table_specs
from .tensor import NonFiniteError, Tensor
from .train import SGD, TrainConfig, load_checkpoint, poly_lr, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "AudioClip", "AudioFeaturizer", "BlockSpec", "CENetClassifier", "CENetModel",
    "FeatureMatrix", "FootprintReport", "FrontendConfig", "KEYWORDS", "LABEL_NAMES",
    "ModelConfig", "N_CLASSES", "NonFiniteError", "NonLocalGCN", "RocCurve", "SGD",
    "SILENCE_LABEL", "SampleRecord", "Tensor", "TrainConfig", "UNKNOWN_LABEL", "VARIANTS",
    "accuracy", "affinity", "assign_split", "augment", "augment_noise", "build",
    "compute_fbank", "compute_features", "compute_mfcc", "count_macs", "count_params",
    "export_stage_feature_map", "gaussian_affinity", "insert_gcn", "load_checkpoint",
    "load_wav", "make_silence", "message_pass", "poly_lr", "roc_for_keyword",
    "save_checkpoint", "scan", "table_specs", "time_shift", "train", "vertical_average",
]
