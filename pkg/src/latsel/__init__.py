"""Latency prediction for DNN modules: measure, learn, select."""
from .dataset import SampleRecord, generate_dataset, load_dataset, save_dataset, split_dataset
from .kernels import build_module, forward, make_input, measure_latency
from .kinds import ALL_KINDS, ModuleKind
from .load import LoadProfile, start_load_generator, stop_load_generator
from .metrics import EvalResult, evaluate, pk_accuracy, r_squared, time_per_sample
from .params import ParamSetVariant, SamplingConfig, compute_inferables, sample_config
from .probe import DeviceProbe, probe_device
from .regressors import RegressorId, TrainConfig, fit_regressor, load_model, save_model
from .select import Objective, SelectionConfig, auto_select, explain_selection

__version__ = "0.1.0"

__all__ = [
    "ALL_KINDS",
    "DeviceProbe",
    "EvalResult",
    "LoadProfile",
    "ModuleKind",
    "Objective",
    "ParamSetVariant",
    "RegressorId",
    "SampleRecord",
    "SamplingConfig",
    "SelectionConfig",
    "TrainConfig",
    "auto_select",
    "build_module",
    "compute_inferables",
    "evaluate",
    "explain_selection",
    "fit_regressor",
    "forward",
    "generate_dataset",
    "load_dataset",
    "load_model",
    "make_input",
    "measure_latency",
    "pk_accuracy",
    "probe_device",
    "r_squared",
    "sample_config",
    "save_dataset",
    "save_model",
    "split_dataset",
    "start_load_generator",
    "stop_load_generator",
    "time_per_sample",
]
