"""causalmix: Granger causal structure learning for marketing mix
time series, built on a small numpy reverse-mode autodiff core."""

from .checkpoint import load_checkpoint, save_checkpoint
from .datagen import SimConfig, generate_dataset
from .dataio import Dataset, load_dataset, save_dataset
from .decoder import Forecast, nll, rollout, step
from .encoder import (EdgeLogits, EdgeSample, encode, gumbel_sample,
                      infer_graph)
from .errors import (CausalmixError, ContractError, DataError, DimensionError,
                     DomainError, GenerationError, NumericError)
from .evalkit import (BaselineConfig, auroc, forecast_mse, linear_granger,
                      persistence_mse, score_structure, structural_accuracy)
from .nets import ModelConfig, init_params
from .training import TrainConfig, elbo_loss, fit, kl_term, split_shops

__version__ = "0.1.0"

__all__ = [
    "BaselineConfig", "CausalmixError", "ContractError", "DataError",
    "Dataset", "DimensionError", "DomainError", "EdgeLogits", "EdgeSample",
    "Forecast", "GenerationError", "ModelConfig", "NumericError",
    "SimConfig", "TrainConfig", "auroc", "elbo_loss", "encode", "fit",
    "forecast_mse", "generate_dataset", "gumbel_sample", "infer_graph",
    "init_params", "kl_term", "linear_granger", "load_checkpoint",
    "load_dataset", "nll", "persistence_mse", "rollout", "save_checkpoint",
    "save_dataset", "score_structure", "split_shops", "step",
    "structural_accuracy",
]
