"""Softplus MLPs for the contact force and moment, trained with Adam.

Both networks map the 19 kinematic features (headrest frame) to a 3-vector.
Inputs are standardised with statistics fitted on the training split only;
outputs are left in physical units.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import SampleTable, fmt
from .kinematics import N_FEATURES, RelativeKinematics, encode_features
from .model import Wrench

FORCE_DIMS = (19, 6, 6, 4, 3)
MOMENT_DIMS = (19, 6, 6, 6, 4, 3)
STD_FLOOR = 1e-12


def softplus(x):
    x = np.asarray(x, dtype=float)
    lo, hi = np.minimum(x, 30.0), np.maximum(x, 30.0)
    # x + log(1 + e^-x) above 30 avoids overflow
    return np.where(x > 30.0, hi + np.log1p(np.exp(-hi)), np.log1p(np.exp(lo)))


def softplus_grad(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -700.0, 700.0)))


@dataclass
class MlpModel:
    layer_dims: tuple
    weights: list
    biases: list
    norm_mean: np.ndarray = field(default_factory=lambda: np.zeros(N_FEATURES))
    norm_std: np.ndarray = field(default_factory=lambda: np.ones(N_FEATURES))
    seed: int | None = None
    hidden_activation: str = "softplus"
    output_activation: str = "identity"

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        self.weights = [np.asarray(W, dtype=float) for W in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        self.norm_mean = np.asarray(self.norm_mean, dtype=float)
        self.norm_std = np.asarray(self.norm_std, dtype=float)
        dims = self.layer_dims
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("layer count does not match layer_dims")
        for W, b, n_in, n_out in zip(self.weights, self.biases, dims[:-1], dims[1:]):
            if W.shape != (n_out, n_in) or b.shape != (n_out,):
                raise ValueError(f"layer shape {W.shape} does not match dims ({n_out}, {n_in})")
        if self.norm_mean.shape != (dims[0],) or self.norm_std.shape != (dims[0],):
            raise ValueError("normalizer size does not match the input width")
        if np.any(self.norm_std <= 0):
            raise ValueError("norm_std entries must be positive")
        if (self.hidden_activation, self.output_activation) != ("softplus", "identity"):
            raise ValueError("only softplus hidden / identity output layers are supported")

    @classmethod
    def initialize(cls, layer_dims, seed: int) -> "MlpModel":
        """Scaled-uniform (Glorot) weights, zero biases."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for n_in, n_out in zip(layer_dims[:-1], layer_dims[1:]):
            lim = np.sqrt(6.0 / (n_in + n_out))
            weights.append(rng.uniform(-lim, lim, size=(n_out, n_in)))
            biases.append(np.zeros(n_out))
        return cls(tuple(layer_dims), weights, biases, np.zeros(layer_dims[0]), np.ones(layer_dims[0]), seed)

    @classmethod
    def zeros(cls, layer_dims) -> "MlpModel":
        return cls(tuple(layer_dims),
                   [np.zeros((o, i)) for i, o in zip(layer_dims[:-1], layer_dims[1:])],
                   [np.zeros(o) for o in layer_dims[1:]],
                   np.zeros(layer_dims[0]), np.ones(layer_dims[0]))

    def copy(self) -> "MlpModel":
        return MlpModel(self.layer_dims, [W.copy() for W in self.weights], [b.copy() for b in self.biases],
                        self.norm_mean.copy(), self.norm_std.copy(), self.seed)

    @property
    def n_in(self) -> int:
        return self.layer_dims[0]

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.n_in:
            raise ValueError(f"expected {self.n_in} features, got {X.shape[-1]}")
        return X

    def _activations(self, Z):
        pre, post = [], [Z]
        a = Z
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            u = a @ W.T + b
            pre.append(u)
            a = u if i == last else softplus(u)
            post.append(a)
        return pre, post

    def predict(self, X) -> np.ndarray:
        """Batched forward pass, ``(n, 19) -> (n, 3)``."""
        X = np.atleast_2d(self._check(X))
        Z = (X - self.norm_mean) / self.norm_std
        return self._activations(Z)[1][-1]

    def jacobian(self, X) -> np.ndarray:
        """Batched input Jacobian, ``(n, 19) -> (n, 3, 19)``."""
        return self.predict_and_jacobian(X)[1]

    def predict_and_jacobian(self, X):
        """Outputs and input Jacobian from a single forward pass."""
        X = np.atleast_2d(self._check(X))
        Z = (X - self.norm_mean) / self.norm_std
        pre, post = self._activations(Z)
        J = np.broadcast_to(self.weights[-1], (X.shape[0],) + self.weights[-1].shape)
        for k in range(len(self.weights) - 2, -1, -1):
            J = (J * softplus_grad(pre[k])[:, None, :]) @ self.weights[k]
        return post[-1], J / self.norm_std

    # -- serialization -------------------------------------------------------------

    def to_dict(self) -> dict:
        def num(a):
            return [float(fmt(x)) for x in np.ravel(a)]

        return {
            "layer_dims": list(self.layer_dims),
            "activations": {"hidden": self.hidden_activation, "output": self.output_activation},
            "weights": [[num(row) for row in W] for W in self.weights],
            "biases": [num(b) for b in self.biases],
            "norm_mean": num(self.norm_mean),
            "norm_std": num(self.norm_std),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        act = d.get("activations", {})
        return cls(tuple(d["layer_dims"]), [np.array(W, dtype=float) for W in d["weights"]],
                   [np.array(b, dtype=float) for b in d["biases"]], np.array(d["norm_mean"]),
                   np.array(d["norm_std"]), d.get("seed"), act.get("hidden", "softplus"),
                   act.get("output", "identity"))


def forward(model: MlpModel, features) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    if features.shape != (model.n_in,):
        raise ValueError(f"expected a {model.n_in}-vector, got shape {features.shape}")
    return model.predict(features[None, :])[0]


def input_jacobian(model: MlpModel, features) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    if features.shape != (model.n_in,):
        raise ValueError(f"expected a {model.n_in}-vector, got shape {features.shape}")
    return model.jacobian(features[None, :])[0]


def save_model(path, model: MlpModel) -> None:
    # repr of a float round-trips exactly, so json keeps every bit
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(model.to_dict(), fh, indent=1)
    os.replace(tmp, path)


def load_model(path) -> MlpModel:
    with open(path) as fh:
        return MlpModel.from_dict(json.load(fh))


def fit_normalizer(X) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean and population std; near-constant columns get std 1."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a non-empty 2-D sample array")
    if X.shape[0] < 2:
        raise ValueError("need at least two samples to fit a normalizer")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std < STD_FLOOR, 1.0, std)
    return mean, std


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.30
    val_fraction: float = 0.20
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.test_fraction < 1 and 0 < self.val_fraction < 1):
            raise ValueError("split fractions must lie in (0, 1)")


@dataclass(frozen=True)
class Split:
    train: SampleTable
    val: SampleTable
    test: SampleTable
    train_ids: list
    test_ids: list


def split(pool: SampleTable, spec: SplitSpec) -> Split:
    """Whole trajectories go to train or test; training samples split again into train/val."""
    ids = pool.trajectory_ids()
    if len(ids) < 2:
        raise ValueError("split needs at least two trajectories to hold one out")
    rng = np.random.default_rng(spec.seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    n_train = int(np.floor(len(ids) * (1.0 - spec.test_fraction) + 1e-9))
    n_train = min(max(n_train, 1), len(ids) - 1)
    train_ids, test_ids = order[:n_train], order[n_train:]
    in_train = np.isin(pool.traj_id, np.array(train_ids, dtype=object))
    train_rows = np.flatnonzero(in_train)
    test_rows = np.flatnonzero(~in_train)
    train_rows = train_rows[rng.permutation(len(train_rows))]
    n_val = int(np.floor(len(train_rows) * spec.val_fraction + 1e-9))
    if len(train_rows) >= 2:
        n_val = min(max(n_val, 1), len(train_rows) - 1)
    else:
        n_val = 0
    val_rows, fit_rows = train_rows[:n_val], train_rows[n_val:]
    return Split(pool.take(fit_rows), pool.take(val_rows), pool.take(test_rows), train_ids, test_ids)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 1024
    patience: int = 6
    max_epochs: int = 500
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not (self.learning_rate > 0 and self.batch_size > 0 and self.patience > 0 and self.max_epochs > 0):
            raise ValueError("training hyperparameters must be positive")


@dataclass
class TrainResult:
    model: MlpModel
    epochs_run: int
    best_val_loss: float
    best_epoch: int
    train_losses: list
    val_losses: list


def _mse(model: MlpModel, X, Y) -> float:
    if len(X) == 0:
        return float("nan")
    d = model.predict(X) - Y
    return float(np.mean(d * d))


def _gradients(model: MlpModel, X, Y):
    Z = (X - model.norm_mean) / model.norm_std
    pre, post = model._activations(Z)
    delta = 2.0 * (post[-1] - Y) / Y.size
    gW, gb = [None] * len(model.weights), [None] * len(model.weights)
    for k in range(len(model.weights) - 1, -1, -1):
        gW[k] = delta.T @ post[k]
        gb[k] = delta.sum(axis=0)
        if k:
            delta = (delta @ model.weights[k]) * softplus_grad(pre[k - 1])
    return gW, gb


def train(model_init: MlpModel, train_X, train_Y, val_X, val_Y, cfg: TrainConfig) -> TrainResult:
    """Adam on mean squared error with early stopping on validation loss.

    ``model_init`` must already carry the normalizer fitted on ``train_X``.
    The returned model holds the parameters of the best validation epoch;
    with an empty validation set the training loss is monitored instead.
    """
    train_X = np.asarray(train_X, dtype=float)
    train_Y = np.asarray(train_Y, dtype=float)
    if len(train_X) == 0:
        raise ValueError("empty training set")
    val_X = np.asarray(val_X, dtype=float).reshape(-1, model_init.n_in)
    val_Y = np.asarray(val_Y, dtype=float).reshape(-1, train_Y.shape[1])
    monitor = (val_X, val_Y) if len(val_X) else (train_X, train_Y)

    model = model_init.copy()
    params = model.weights + model.biases
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    rng = np.random.default_rng(cfg.seed)
    b1, b2 = cfg.beta1, cfg.beta2
    step = 0
    best = model.copy()
    best_loss = _mse(model, *monitor)
    best_epoch = 0
    train_losses, val_losses = [], []
    epoch = 0
    n = len(train_X)
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            gW, gb = _gradients(model, train_X[idx], train_Y[idx])
            step += 1
            lr_t = cfg.learning_rate * np.sqrt(1.0 - b2**step) / (1.0 - b1**step)
            for p, g, mi, vi in zip(params, gW + gb, m, v):
                mi *= b1
                mi += (1.0 - b1) * g
                vi *= b2
                vi += (1.0 - b2) * g * g
                p -= lr_t * mi / (np.sqrt(vi) + cfg.eps * np.sqrt(1.0 - b2**step))
        train_losses.append(_mse(model, train_X, train_Y))
        loss = _mse(model, *monitor)
        val_losses.append(loss)
        if loss < best_loss:
            best_loss, best_epoch, best = loss, epoch, model.copy()
        elif epoch - best_epoch >= cfg.patience:
            break
    best.seed = model_init.seed
    return TrainResult(best, epoch, best_loss, best_epoch, train_losses, val_losses)


def fit_wrench_model(layer_dims, fit: SampleTable, val: SampleTable, target: str, cfg: TrainConfig,
                     init_seed: int) -> TrainResult:
    """Fresh init, normalizer from ``fit`` only, then :func:`train` on ``target`` ('force'/'moment')."""
    X = fit.features()
    model = MlpModel.initialize(layer_dims, init_seed)
    model.norm_mean, model.norm_std = fit_normalizer(X)
    return train(model, X, getattr(fit, target), val.features(), getattr(val, target), cfg)


def predict_wrench(force_model: MlpModel, moment_model: MlpModel, rk: RelativeKinematics) -> Wrench:
    x = encode_features(rk)
    return Wrench(forward(force_model, x), forward(moment_model, x))


class SurrogateContact:
    """Generalized contact force ``f_cm(q, qdot)`` of the 1-DOF model from the two nets."""

    def __init__(self, force_model: MlpModel, moment_model: MlpModel, params):
        self.force_model = force_model
        self.moment_model = moment_model
        self.params = params

    def wrench(self, q, qdot):
        from .model import features_batch

        X = features_batch(q, qdot, self.params)
        return self.force_model.predict(X), self.moment_model.predict(X)

    def value(self, q, qdot):
        """Return ``f_cm`` alone, skipping all derivative work."""
        from .model import generalized_contact_force

        F, M = self.wrench(q, qdot)
        return generalized_contact_force(q, F, M, self.params)[0]

    def __call__(self, q, qdot):
        """Return ``(f_cm, df_dq, df_dqdot)`` as arrays over the inputs."""
        from .model import features_and_derivatives, generalized_contact_force

        X, dX_dq, dX_dqd = features_and_derivatives(q, qdot, self.params)
        F, JF = self.force_model.predict_and_jacobian(X)
        M, JM = self.moment_model.predict_and_jacobian(X)
        f, df_dq_explicit, dF, dM = generalized_contact_force(q, F, M, self.params)
        dF_dq = np.einsum("nij,nj->ni", JF, dX_dq)
        dF_dqd = np.einsum("nij,nj->ni", JF, dX_dqd)
        dM_dq = np.einsum("nij,nj->ni", JM, dX_dq)
        dM_dqd = np.einsum("nij,nj->ni", JM, dX_dqd)
        df_dq = df_dq_explicit + np.einsum("ni,ni->n", dF, dF_dq) + np.einsum("ni,ni->n", dM, dM_dq)
        df_dqd = np.einsum("ni,ni->n", dF, dF_dqd) + np.einsum("ni,ni->n", dM, dM_dqd)
        return f, df_dq, df_dqd
