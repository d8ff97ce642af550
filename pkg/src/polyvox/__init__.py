"""polyvox: desk-scale workbench for multilingual multi-speaker
acoustic-model experiments and MUSHRA listening-test evaluation."""

__version__ = "0.1.0"

from .acoustic import AcousticModel, ModelConfig
from .corpus import (CorpusManifest, Phoneset, Utterance, chunk_for_pretraining,
                     encode_phonemes, load_manifest)
from .mushra import MushraDesign, build_report, filter_anomalies, generate_panels
from .stats import holm_bonferroni, wilcoxon_signed_rank
from .strategies import StrategySpec, builtin_specs, materialize
from .tensor import Tensor, backward, record
from .training import TrainPlan, finetune, pretrain
from .weighting import ClassCounts, build_table, compute_raw_weights, normalize_weights

__all__ = [
    "AcousticModel", "ModelConfig", "CorpusManifest", "Phoneset", "Utterance",
    "chunk_for_pretraining", "encode_phonemes", "load_manifest", "MushraDesign",
    "build_report", "filter_anomalies", "generate_panels", "holm_bonferroni",
    "wilcoxon_signed_rank", "StrategySpec", "builtin_specs", "materialize",
    "Tensor", "backward", "record", "TrainPlan", "finetune", "pretrain",
    "ClassCounts", "build_table", "compute_raw_weights", "normalize_weights",
]
