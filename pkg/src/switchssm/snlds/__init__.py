"""Switching linear dynamics with an SSM encoder, variational fitting and segmentation."""

from .checkpoint import CheckpointError, dumps, loads
from .encoder import Encoder, encode, init_encoder, pinv_encoder
from .inference import (ImpossibleObservationError, PosteriorMarginals, forward_backward,
                        forward_log)
from .model import (SnldsModel, generate, local_evidence, mode_transition_matrix,
                    random_model, rotation_model, transition_matrices)
from .objective import LossReport, UnsupportedModelError, ce_regularizer, elbo, elbo_gradient
from .train import FitConfig, FitResult, fit, init_from_data, segment

__all__ = [
    "CheckpointError", "dumps", "loads",
    "Encoder", "encode", "init_encoder", "pinv_encoder",
    "ImpossibleObservationError", "PosteriorMarginals", "forward_backward", "forward_log",
    "SnldsModel", "generate", "local_evidence", "mode_transition_matrix", "random_model",
    "rotation_model", "transition_matrices",
    "LossReport", "UnsupportedModelError", "ce_regularizer", "elbo", "elbo_gradient",
    "FitConfig", "FitResult", "fit", "init_from_data", "segment",
]
