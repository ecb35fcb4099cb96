"""Multi-item image recognition toolkit.

Recognizes several food items in one image by segmenting the deepest
feature map of a small block-structured CNN, proposing candidate regions
per segment, classifying each region, and fusing the predictions. The CNN
can be compressed by similarity-guided whole-block pruning. Heavy
convolution kernels run through a compiled extension when it is available
and through a NumPy fallback otherwise (see foodrec.backend).
"""

from .backend import ACTIVE as kernel_backend
from .backend import available_backends
from .decision import fuse_consensus, fuse_pooled, merge_segment_results
from .evaluation import (classification_report, confusion, set_metrics,
                         multilabel_report, subset_mean_recall)
from .localization import locate_regions, sliding_windows
from .pipeline import RecognizeConfig, baseline_recognize, recognize_image
from .pruning import (PruneConfig, PruningExhausted, block_similarity,
                      channel_sum_map, flops_estimate, prune_loop,
                      select_prune_pair, similarity_matrix, ssim)
from .refnet import (Model, TrainConfig, build_reference_model,
                     classify_image, forward, load_model, param_count,
                     remove_block, save_model, train)
from .segmentation import kmeans, segment_image

__version__ = "0.1.0"

__all__ = [
    "available_backends", "kernel_backend",
    "fuse_consensus", "fuse_pooled", "merge_segment_results",
    "classification_report", "confusion", "set_metrics",
    "multilabel_report", "subset_mean_recall",
    "locate_regions", "sliding_windows",
    "RecognizeConfig", "baseline_recognize", "recognize_image",
    "PruneConfig", "PruningExhausted", "block_similarity",
    "channel_sum_map", "flops_estimate", "prune_loop", "select_prune_pair",
    "similarity_matrix", "ssim",
    "Model", "TrainConfig", "build_reference_model", "classify_image",
    "forward", "load_model", "param_count", "remove_block", "save_model",
    "train",
    "kmeans", "segment_image",
    "__version__",
]
