"""Feature ingestion: domain types, interchange files, sampling, and synthetic scenes."""

from .interchange import load_interchange, save_interchange
from .sampling import l2_normalize, project_raw, sample_semantic
from .synthetic import GeneratorConfig, generate_synthetic_pair, oracle_semantic_descriptors
from .types import (
    DenseSemanticMap,
    GroundTruthMatches,
    ImageFeatures,
    KeypointSet,
    RawDescriptors,
    RefinedFeatures,
    SyntheticScenePair,
)

__all__ = [
    "DenseSemanticMap",
    "GeneratorConfig",
    "GroundTruthMatches",
    "ImageFeatures",
    "KeypointSet",
    "RawDescriptors",
    "RefinedFeatures",
    "SyntheticScenePair",
    "generate_synthetic_pair",
    "l2_normalize",
    "load_interchange",
    "oracle_semantic_descriptors",
    "project_raw",
    "sample_semantic",
    "save_interchange",
]
