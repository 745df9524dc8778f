"""Detecting low rapport in small-group interactions from multimodal behaviour."""
from .dtw import dtw_distance
from .evaluation import EvalReport, face_ablation, run_experiment
from .features import FeatureCache, FeatureConfig, assemble_features, feature_names
from .io import load_corpus
from .labels import corpus_labels, label_low_rapport
from .metrics import average_precision
from .model import RatingsRecord, SessionRecord
from .svm import LearnerConfig, TrainedEnsemble, ensemble_prob, train_ensemble
from .synth import GenConfig, PlantedEffect, generate, generate_corpus

__version__ = "0.1.0"
