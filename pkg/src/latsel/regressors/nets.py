"""Dense networks in plain numpy: the MLP baseline and the multi-task encoder-decoder.

Both train on min-max scaled features and targets and compute everything in
float64; :meth:`round_to_float32` snaps weights to the on-disk precision once
training ends.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatch
from ..kinds import ModuleKind
from .losses import DEFAULT_BETA, smooth_l1, smooth_l1_grad


def rowwise_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product whose rows do not depend on the batch size.

    BLAS switches kernels between one row and many, which changes rounding;
    einsum's own loops keep ``f(X)[i] == f(X[i:i+1])[0]`` bit for bit.
    """
    return np.einsum("ij,jk->ik", a, b)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class DenseStack:
    """Fully connected layers with ReLU between them.

    ``relu_last`` also rectifies the final layer (used for the encoder, whose
    output is a hidden representation rather than a head).
    """

    def __init__(self, dims: list[int], rng: np.random.Generator | None = None, relu_last: bool = False):
        if len(dims) < 2:
            raise ValueError("a dense stack needs at least input and output dims")
        self.dims = list(dims)
        self.relu_last = relu_last
        rng = rng or np.random.default_rng(0)
        self.weights = [glorot_uniform(rng, a, b) for a, b in zip(dims[:-1], dims[1:])]
        self.biases = [np.zeros(b) for b in dims[1:]]

    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def _rectified(self, i: int) -> bool:
        return i < len(self.weights) - 1 or self.relu_last

    def forward(self, x: np.ndarray, stable: bool = False) -> tuple[np.ndarray, list]:
        acts = [x]
        a = x
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = (rowwise_matmul(a, W) if stable else a @ W) + b
            a = np.maximum(z, 0.0) if self._rectified(i) else z
            acts.append(a)
        return a, acts

    def backward(self, acts: list, dout: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        grads: list[np.ndarray] = [None] * (2 * len(self.weights))
        d = dout
        for i in reversed(range(len(self.weights))):
            if self._rectified(i):
                d = d * (acts[i + 1] > 0)
            grads[2 * i] = acts[i].T @ d
            grads[2 * i + 1] = d.sum(axis=0)
            d = d @ self.weights[i].T
        return grads, d


def halving_dims(latent: int) -> list[int]:
    dims = [latent]
    while dims[-1] > 2:
        dims.append(max(dims[-1] // 2, 2))
    return dims + [1]


@dataclass(frozen=True)
class MednConfig:
    encoder_hidden: tuple[int, ...]
    weight_ratio: float

    @property
    def latent(self) -> int:
        return self.encoder_hidden[-1]

    def to_dict(self) -> dict:
        return {"encoder_hidden": list(self.encoder_hidden), "weight_ratio": self.weight_ratio}


# per-kind encoder hidden dims and reconstruction:prediction loss weight
_MEDN_TABLE = {
    ModuleKind.AVGPOOL: MednConfig((64, 32, 16), 0.001),
    ModuleKind.BN: MednConfig((32, 16, 8), 1.0),
    ModuleKind.CONV: MednConfig((128, 64, 32), 100.0),
    ModuleKind.LINEAR: MednConfig((64, 32, 16), 0.01),
    ModuleKind.MAXPOOL: MednConfig((64, 32, 16), 0.01),
}


def default_medn_config(kind: ModuleKind) -> MednConfig:
    return _MEDN_TABLE[kind.base]


class _Net:
    input_dim: int
    beta: float

    def stacks(self) -> list[DenseStack]:
        raise NotImplementedError

    def params(self) -> list[np.ndarray]:
        return [p for s in self.stacks() for p in s.params()]

    def set_params(self, values: list[np.ndarray]) -> None:
        it = iter(values)
        for s in self.stacks():
            for i in range(len(s.weights)):
                s.weights[i] = np.asarray(next(it), dtype=np.float64).reshape(s.weights[i].shape)
                s.biases[i] = np.asarray(next(it), dtype=np.float64).reshape(s.biases[i].shape)

    def round_to_float32(self) -> None:
        self.set_params([p.astype(np.float32).astype(np.float64) for p in self.params()])

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.input_dim:
            raise DimensionMismatch(f"expected {self.input_dim} features, got {X.shape[1]}")
        return X

    def predict(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def loss_and_grads(self, X: np.ndarray, y: np.ndarray) -> tuple[float, list[np.ndarray]]:
        raise NotImplementedError

    def loss(self, X: np.ndarray, y: np.ndarray) -> float:
        return self.loss_and_grads(X, y)[0]

    def prediction_loss(self, X: np.ndarray, y: np.ndarray) -> float:
        """Latency term of the loss alone; used to pick the checkpoint."""
        return self.loss(X, y)


class MLPNet(_Net):
    def __init__(self, input_dim: int, hidden: tuple[int, ...] = (128, 64, 32), seed: int = 0, beta: float = DEFAULT_BETA):
        self.input_dim = input_dim
        self.hidden = tuple(hidden)
        self.beta = beta
        self.body = DenseStack([input_dim, *self.hidden, 1], np.random.default_rng(seed))

    def stacks(self) -> list[DenseStack]:
        return [self.body]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.body.forward(self._check(X), stable=True)[0][:, 0]

    def loss_and_grads(self, X, y):
        X = self._check(X)
        y = np.asarray(y, dtype=np.float64)
        out, acts = self.body.forward(X)
        r = out[:, 0] - y
        loss = float(np.mean(smooth_l1(r, self.beta)))
        dout = (smooth_l1_grad(r, self.beta) / len(y))[:, None]
        grads, _ = self.body.backward(acts, dout)
        return loss, grads


class MEDNNet(_Net):
    """Shared encoder feeding a latency head and an input-reconstruction head.

    Loss per sample: ``weight_ratio * mean_i smoothL1(x_hat_i - x_i) + smoothL1(y_hat - y)``.
    With ``reconstruct=False`` the reconstruction head does not exist.
    """

    def __init__(self, input_dim: int, cfg: MednConfig, reconstruct: bool = True, seed: int = 0, beta: float = DEFAULT_BETA):
        self.input_dim = input_dim
        self.cfg = cfg
        self.reconstruct = reconstruct
        self.beta = beta
        rng = np.random.default_rng(seed)
        hidden = list(cfg.encoder_hidden)
        self.encoder = DenseStack([input_dim, *hidden], rng, relu_last=True)
        self.predictor = DenseStack(halving_dims(cfg.latent), rng)
        self.reconstructor = (
            DenseStack([*reversed(hidden), input_dim], rng) if reconstruct else None
        )

    @property
    def weight_ratio(self) -> float:
        return self.cfg.weight_ratio

    def stacks(self) -> list[DenseStack]:
        out = [self.encoder, self.predictor]
        if self.reconstructor is not None:
            out.append(self.reconstructor)
        return out

    def forward(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
        X = self._check(X)
        h, _ = self.encoder.forward(X)
        y_hat = self.predictor.forward(h)[0][:, 0]
        x_hat = self.reconstructor.forward(h)[0] if self.reconstructor is not None else None
        return y_hat, x_hat

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = self._check(X)
        h, _ = self.encoder.forward(X, stable=True)
        return self.predictor.forward(h, stable=True)[0][:, 0]

    def loss_parts(self, X: np.ndarray, y: np.ndarray) -> dict[str, float | None]:
        """Batch-mean prediction and reconstruction terms, before weighting."""
        y_hat, x_hat = self.forward(X)
        pred = float(np.mean(smooth_l1(y_hat - np.asarray(y, dtype=np.float64), self.beta)))
        recon = None
        if x_hat is not None:
            recon = float(np.mean(smooth_l1(x_hat - self._check(X), self.beta)))
        return {"pred": pred, "recon": recon}

    def prediction_loss(self, X: np.ndarray, y: np.ndarray) -> float:
        return self.loss_parts(X, y)["pred"]

    def loss_and_grads(self, X, y):
        X = self._check(X)
        y = np.asarray(y, dtype=np.float64)
        n = len(y)
        h, enc_acts = self.encoder.forward(X)
        y_hat, pred_acts = self.predictor.forward(h)
        r = y_hat[:, 0] - y
        loss = float(np.mean(smooth_l1(r, self.beta)))
        pred_grads, dh = self.predictor.backward(pred_acts, (smooth_l1_grad(r, self.beta) / n)[:, None])
        rec_grads: list[np.ndarray] = []
        if self.reconstructor is not None:
            x_hat, rec_acts = self.reconstructor.forward(h)
            rr = x_hat - X
            w = self.weight_ratio
            loss += w * float(np.mean(smooth_l1(rr, self.beta)))
            rec_grads, dh_rec = self.reconstructor.backward(rec_acts, w * smooth_l1_grad(rr, self.beta) / rr.size)
            dh = dh + dh_rec
        enc_grads, _ = self.encoder.backward(enc_acts, dh)
        return loss, enc_grads + pred_grads + rec_grads


@dataclass
class Adam:
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
