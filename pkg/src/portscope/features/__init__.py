from .extract import FeatureConfig, extract_features, feature_names
from .statistical import STAT_NAMES, StatFeatures, stat_features

__all__ = [
    "FeatureConfig",
    "STAT_NAMES",
    "StatFeatures",
    "extract_features",
    "feature_names",
    "stat_features",
]
