"""Region-sensitivity metamorphic testing for image classifiers.

The pipeline, end to end: load a model and its correctly-classified
seeds, compute per-class activation heat maps, fuse them into sensitive
masks, enumerate candidate rectangles, apply region transforms, and
judge whether the predicted class survives. Reports compare each
selection method's failure-detection rate against a random-region
baseline and correlate the center-pixel response with the failure rate.
"""

from .analysis import correlation, fdr, pearson
from .campaign import CampaignConfig, TrialRecord, run_campaign
from .errors import SrmtError
from .gradcam import all_class_heatmaps, class_heatmap
from .model import LayerSpec, ModelSpec, load_model, write_model
from .nn import Prediction, forward, forward_batch, grad_wrt_feature_maps
from .seeds import SeedImage, load_seed_set
from .sensitivity import (Rect, avg_selection, best_selection, enumerate_rectangles,
                          max_selection)
from .transforms import TRANSFORM_NAMES, apply_transform, random_rectangles

__version__ = "0.1.0"

__all__ = [
    "CampaignConfig", "LayerSpec", "ModelSpec", "Prediction", "Rect", "SeedImage",
    "SrmtError", "TRANSFORM_NAMES", "TrialRecord", "all_class_heatmaps",
    "apply_transform", "avg_selection", "best_selection", "class_heatmap",
    "correlation", "enumerate_rectangles", "fdr", "forward", "forward_batch",
    "grad_wrt_feature_maps", "load_model", "load_seed_set", "max_selection",
    "pearson", "random_rectangles", "run_campaign", "write_model",
]
