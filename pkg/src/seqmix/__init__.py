"""Sequence mixup regularizers for recurrent taggers and classifiers, in NumPy."""

from .crf import crf_nll, log_partition, mixed_sequence_score, sequence_score, viterbi
from .data import Dataset, generate_halfmoons, generate_tagging, load_conll, load_embeddings
from .estimators import SequenceClassifier, SequenceTagger
from .exceptions import FeasibilityError, NumericError, ParameterError, ParseError, SeqmixError, ShapeError
from .lambda_process import LambdaConfig, LambdaTrajectory, sample_trajectory
from .metrics import f1_metrics
from .mixup import MixedPair, make_pairs, step_input_mixup, step_pom, step_ttm
from .recurrent import Model, Sample, init_model, load_model, save_model
from .training import ModelSpec, TrainConfig, evaluate, sweep_rho, train

__version__ = "0.1.0"

__all__ = [
    "Dataset", "FeasibilityError", "LambdaConfig", "LambdaTrajectory", "MixedPair", "Model",
    "ModelSpec", "NumericError", "ParameterError", "ParseError", "Sample", "SeqmixError",
    "SequenceClassifier", "SequenceTagger", "ShapeError", "TrainConfig", "crf_nll", "evaluate",
    "f1_metrics", "generate_halfmoons", "generate_tagging", "init_model", "load_conll",
    "load_embeddings", "load_model", "log_partition", "make_pairs", "mixed_sequence_score",
    "sample_trajectory", "save_model", "sequence_score", "step_input_mixup", "step_pom",
    "step_ttm", "sweep_rho", "train", "viterbi",
]
