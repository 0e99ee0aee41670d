"""Multi-horizon forecasting with shifted future covariates and a parallel CNN/RNN model."""
from .data import (ColumnRole, Instance, NormStats, SeriesFrame, WindowConfig, build_instances,
                   denormalize_targets, fit_normalizer, load_frame, normalize, split_train_test,
                   synth_generate)
from .evaluation import EvalResult, evaluate, mae, rmse
from .explain import SaliencyMap, TargetSelector, grad_cam
from .network import (ModelConfig, ParamStore, SkipStrategy, build_model, forward, load_params,
                      save_params)
from .training import TrainConfig, TrainReport, regularization_penalty, train

__version__ = "0.1.0"
