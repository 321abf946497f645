from .forest import Forest, ForestConfig, Tree, fit_tree
from .ids import MEDN_ABLATIONS, DEFAULT_ROSTER, Family, MednVariant, RegressorId
from .io import load_model, model_path, model_size_kb, save_model
from .linear import LinearModel
from .losses import smooth_l1, smooth_l1_grad
from .model import Regressor
from .nets import MEDNNet, MednConfig, MLPNet, default_medn_config, halving_dims
from .train import TrainConfig, fit_forest, fit_regressor, train_net

__all__ = [
    "Family",
    "Forest",
    "ForestConfig",
    "LinearModel",
    "MEDNNet",
    "MEDN_ABLATIONS",
    "MLPNet",
    "MednConfig",
    "MednVariant",
    "DEFAULT_ROSTER",
    "Regressor",
    "RegressorId",
    "TrainConfig",
    "Tree",
    "default_medn_config",
    "fit_forest",
    "fit_regressor",
    "fit_tree",
    "halving_dims",
    "load_model",
    "model_path",
    "model_size_kb",
    "save_model",
    "smooth_l1",
    "smooth_l1_grad",
    "train_net",
]
