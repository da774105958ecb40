"""Mutual connectivity analysis: cross-prediction affinity, communities and causal direction."""

__version__ = "0.1.0"

from .affinity import AffinityMatrix, PredictorConfig, compute_affinity  # noqa: E402
from .causality import CcmConfig, ccm_run, global_causality, influence_scores  # noqa: E402
from .community import cluster_affinity, louvain, merge_to_maximize_dice  # noqa: E402
from .ensemble import Ensemble, PreprocessConfig, RegionMask, load_ensemble, preprocess  # noqa: E402

__all__ = [
    "AffinityMatrix", "CcmConfig", "Ensemble", "PredictorConfig", "PreprocessConfig", "RegionMask",
    "ccm_run", "cluster_affinity", "compute_affinity", "global_causality", "influence_scores",
    "load_ensemble", "louvain", "merge_to_maximize_dice", "preprocess",
]
