"""Multi-channel kernel CCA person re-identification."""
from .bank import KccaConfig, ModelBank, ProfileLayout, train_bank
from .descriptor import (ALL_CHANNELS, ChannelDescriptor, ChannelId, DescriptorConfig, PersonImage,
                         extract_all, normalize_image)
from .evaluation import (Catalog, CmcCurve, SplitKind, SplitProtocol, average_trials, compute_cmc,
                         make_splits)
from .fusion import FusionWeights, fit_filtered, fit_logistic, match_probability, rank_gallery
from .kcca import KccaModel, cosine_distances, project, train_kcca
from .kernels import KernelKind, KernelParams, bandwidth_heuristic, gram

__all__ = [
    "ALL_CHANNELS", "Catalog", "ChannelDescriptor", "ChannelId", "CmcCurve", "DescriptorConfig",
    "FusionWeights", "KccaConfig", "KccaModel", "KernelKind", "KernelParams", "ModelBank",
    "PersonImage", "ProfileLayout", "SplitKind", "SplitProtocol", "average_trials",
    "bandwidth_heuristic", "compute_cmc", "cosine_distances", "extract_all", "fit_filtered",
    "fit_logistic", "gram", "make_splits", "match_probability", "normalize_image", "project",
    "rank_gallery", "train_bank", "train_kcca",
]
