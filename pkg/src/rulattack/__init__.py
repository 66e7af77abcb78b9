"""Universal adversarial perturbations against recurrent RUL regressors.

A self-contained stack: a small reverse-mode autodiff engine (`ndgrad`),
LSTM/GRU sequence regressors (`models`), C-MAPSS-format data handling with
a synthetic generator (`data`), gradient attacks including the universal
perturbation search (`attacks`), and metric / report emission
(`reporting`). The `rulattack` CLI wires them into pipelines.
"""

from .attacks import AttackConfig, Perturbation, check_fool, fgsm, project_linf, uap_compute
from .data import EngineSeries, NormStats, Window, fit_norm, load_cmapss, make_windows, synth_generate
from .models import ModelParams, RulPredictor, TrainConfig, forward, init_params, predict, train
from .ndgrad import Tape, Tensor, backward, finite_diff_check
from .reporting import AttackReport, SweepResult, epsilon_sweep, evaluate, fooling_percentage, mape, transfer_matrix

__version__ = "0.1.0"

__all__ = [
    "AttackConfig",
    "AttackReport",
    "EngineSeries",
    "ModelParams",
    "NormStats",
    "Perturbation",
    "RulPredictor",
    "SweepResult",
    "Tape",
    "Tensor",
    "TrainConfig",
    "Window",
    "backward",
    "check_fool",
    "epsilon_sweep",
    "evaluate",
    "fgsm",
    "finite_diff_check",
    "fit_norm",
    "fooling_percentage",
    "forward",
    "init_params",
    "load_cmapss",
    "make_windows",
    "mape",
    "predict",
    "project_linf",
    "synth_generate",
    "train",
    "transfer_matrix",
    "uap_compute",
    "__version__",
]
