"""spectral_forge: augmentation, geometric-OOD synthesis, and evaluation for
spectral semantic segmentation, plus a desk-scale context-reliance experiment."""

from .augment import (
    AugmentationConfig,
    AugmentationRecord,
    GeometricParams,
    SWEEP_P_GRID,
    apply_augmentation,
    cutmix,
    cutpas,
    geometric_baseline,
    hide_and_seek,
    jigsaw,
    organ_transplantation,
    random_erasing,
)
from .labels import IGNORE_LABEL, LabelSet, surgical_label_set
from .metrics import (
    ClassImageScore,
    MetricReport,
    NsdThresholds,
    aggregate,
    aggregate_removal,
    dsc,
    nsd,
    removal_impact_matrix,
    score_pair,
)
from .ood import SynthesisSpec, isolate, remove, synthesize_dataset
from .preprocess import (
    CalibrationPair,
    RgbBands,
    calibrate,
    l1_normalize,
    reconstruct_rgb,
)
from .ranking import AlgorithmScores, RankingReport, bootstrap_rank, overall_ranking
from .scene import Batch, LabeledScene, SemanticMask, SpectralCube
from .storage import (
    DatasetManifest,
    SceneRef,
    check_disjoint_subjects,
    load_manifest,
    load_scene,
    save_manifest,
    save_scene,
)
from .toy import ToyModel, TrainConfig, init_toy_model, predict, sweep_p, train
from .world import SyntheticWorldConfig, generate_world, load_world

__version__ = "0.1.0"

__all__ = [
    "AugmentationConfig", "AugmentationRecord", "GeometricParams", "SWEEP_P_GRID",
    "apply_augmentation", "cutmix", "cutpas", "geometric_baseline", "hide_and_seek",
    "jigsaw", "organ_transplantation", "random_erasing",
    "IGNORE_LABEL", "LabelSet", "surgical_label_set",
    "ClassImageScore", "MetricReport", "NsdThresholds", "aggregate",
    "aggregate_removal", "dsc", "nsd", "removal_impact_matrix", "score_pair",
    "SynthesisSpec", "isolate", "remove", "synthesize_dataset",
    "CalibrationPair", "RgbBands", "calibrate", "l1_normalize", "reconstruct_rgb",
    "AlgorithmScores", "RankingReport", "bootstrap_rank", "overall_ranking",
    "Batch", "LabeledScene", "SemanticMask", "SpectralCube",
    "DatasetManifest", "SceneRef", "check_disjoint_subjects", "load_manifest",
    "load_scene", "save_manifest", "save_scene",
    "ToyModel", "TrainConfig", "init_toy_model", "predict", "sweep_p", "train",
    "SyntheticWorldConfig", "generate_world", "load_world",
    "__version__",
]
