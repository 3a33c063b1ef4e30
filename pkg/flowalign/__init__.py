"""
FlowAlign - video-to-audio flow matching on synthetic spectrograms

Rectified-flow training of a joint-attention transformer with onset-aware
conditioning and timestep-weighted representation alignment, plus samplers,
evaluation metrics and the experiment tooling around them.
"""

__version__ = "0.1.0"

# Core Classes
from flowalign.alignment import AlignmentHead, MatcherKind, TeacherEncoder, TeacherKind
from flowalign.config import AblationSwitches, DataKind, RunConfig, TrainingConfig
from flowalign.errors import (
    AlignmentError,
    CheckpointError,
    ConfigError,
    DataError,
    EvalError,
    FlowAlignError,
    InterpolantError,
    NetworkError,
    ObjectiveError,
    SamplerError,
)
from flowalign.interpolant import InterpolantSchedule, ScheduleKind
from flowalign.network import ConditionInputs, FlowTransformer, ModelConfig
from flowalign.objective import FlowAlignModel, TrainBatch, total_loss, train_step
from flowalign.sampler import SamplerKind, SamplerSpec, cfg_velocity, sample
from flowalign.synthdata import GaussianOracle, ToyConfig, ToyDataset, gen_toy_dataset
from flowalign.training import Trainer, run_ablation

# Convenience functions
from flowalign.evaluation import detect_onsets, evaluate_samples, frechet_distance, onset_f1
from flowalign.checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    # Core Classes
    "InterpolantSchedule",
    "ScheduleKind",
    "ModelConfig",
    "ConditionInputs",
    "FlowTransformer",
    "TeacherEncoder",
    "TeacherKind",
    "AlignmentHead",
    "MatcherKind",
    "FlowAlignModel",
    "TrainBatch",
    "SamplerSpec",
    "SamplerKind",
    "ToyConfig",
    "ToyDataset",
    "GaussianOracle",
    "RunConfig",
    "TrainingConfig",
    "AblationSwitches",
    "DataKind",
    "Trainer",
    "FlowAlignError",
    "InterpolantError",
    "NetworkError",
    "AlignmentError",
    "ObjectiveError",
    "SamplerError",
    "DataError",
    "EvalError",
    "ConfigError",
    "CheckpointError",
    # Functions
    "total_loss",
    "train_step",
    "cfg_velocity",
    "sample",
    "gen_toy_dataset",
    "frechet_distance",
    "detect_onsets",
    "onset_f1",
    "evaluate_samples",
    "save_checkpoint",
    "load_checkpoint",
    "run_ablation",
]
