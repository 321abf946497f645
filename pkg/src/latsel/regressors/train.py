"""Fitting entry points for every regressor family."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..dataset import DatasetSplit
from ..errors import EmptyDataset, NonFiniteLoss
from ..params import build_schema, vectorize_many
from .forest import Forest, ForestConfig
from .ids import Family, MednVariant, RegressorId
from .linear import LinearModel
from .losses import DEFAULT_BETA
from .model import Regressor
from .nets import Adam, MEDNNet, MednConfig, MLPNet, default_medn_config

log = logging.getLogger(__name__)

DEFAULT_MLP_HIDDEN = (128, 64, 32)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    learning_rate: float = 0.005
    batch_size: int = 64
    beta: float = DEFAULT_BETA
    seed: int = 0
    # keep the epoch with the lowest validation prediction loss instead of the last one
    restore_best: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "beta": self.beta,
            "seed": self.seed,
            "restore_best": self.restore_best,
        }


def train_net(net, X, y, cfg: TrainConfig, X_val=None, y_val=None) -> dict:
    """Mini-batch Adam on ``net`` in place; returns per-epoch full-set losses.

    ``history["train"][0]`` is the loss before the first update. With a
    validation set and ``cfg.restore_best`` the parameters of the epoch with
    the lowest validation prediction loss are restored at the end, and
    ``history["best_epoch"]`` names that epoch.
    """
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(lr=cfg.learning_rate)
    params = net.params()
    history = {"train": [net.loss(X, y)], "validation": []}
    has_val = X_val is not None and len(X_val) > 0
    best_epoch, best_loss, best_params = cfg.epochs, np.inf, None
    if has_val:
        history["validation"].append(net.loss(X_val, y_val))
    n = len(y)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            b = order[start : start + cfg.batch_size]
            loss, grads = net.loss_and_grads(X[b], y[b])
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"non-finite loss at epoch {epoch}")
            opt.step(params, grads)
        epoch_loss = net.loss(X, y)
        if not np.isfinite(epoch_loss):
            raise NonFiniteLoss(f"non-finite training loss after epoch {epoch}")
        history["train"].append(epoch_loss)
        if has_val:
            history["validation"].append(net.loss(X_val, y_val))
            if cfg.restore_best:
                v = net.prediction_loss(X_val, y_val)
                if v < best_loss:
                    best_epoch, best_loss, best_params = epoch, v, [p.copy() for p in params]
    if best_params is not None:
        net.set_params(best_params)
    history["best_epoch"] = best_epoch
    return history


def fit_regressor(
    rid: RegressorId,
    split: DatasetSplit,
    train_cfg: TrainConfig = TrainConfig(),
    *,
    forest_cfg: ForestConfig | None = None,
    mlp_hidden: tuple[int, ...] = DEFAULT_MLP_HIDDEN,
    medn_cfg: MednConfig | None = None,
) -> Regressor:
    if not split.train:
        raise EmptyDataset("training split is empty")
    kind = split.train[0].kind
    schema = build_schema(kind, rid.param_set, split.train)
    X = vectorize_many(split.train, schema)
    y_raw = np.array([r.latency_ms for r in split.train])
    tmin, tmax = float(y_raw.min()), float(y_raw.max())
    model = Regressor(rid, schema, tmin, tmax, core=None)
    y = model.scale_target(y_raw)
    X_val = vectorize_many(split.validation, schema) if split.validation else None
    y_val = model.scale_target([r.latency_ms for r in split.validation]) if split.validation else None

    if rid.family is Family.LR:
        core = LinearModel.fit(X, y)
    elif rid.family is Family.RF:
        core = Forest.fit(X, y, forest_cfg or ForestConfig(seed=train_cfg.seed))
    else:
        if rid.family is Family.MLP:
            core = MLPNet(schema.width, mlp_hidden, seed=train_cfg.seed, beta=train_cfg.beta)
        else:
            core = MEDNNet(
                schema.width,
                medn_cfg or default_medn_config(kind),
                reconstruct=rid.variant is not MednVariant.DIRECT,
                seed=train_cfg.seed,
                beta=train_cfg.beta,
            )
        model.history = train_net(core, X, y, train_cfg, X_val, y_val)
        log.info("%s/%s: train loss %.4g -> %.4g", kind, rid, model.history["train"][0], model.history["train"][-1])
    if hasattr(core, "round_to_float32"):
        core.round_to_float32()
    model.core = core
    return model


def fit_forest(cfg: ForestConfig, split: DatasetSplit) -> Regressor:
    return fit_regressor(RegressorId(Family.RF), split, TrainConfig(seed=cfg.seed), forest_cfg=cfg)
