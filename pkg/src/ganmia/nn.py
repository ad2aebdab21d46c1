"""Minimal dense-network engine: forward, backprop, Adam, early-stopped training.

Everything is plain numpy and deterministic per seed. The engine covers
exactly what the package needs: sigmoid-output binary classifiers and the
two players of a small GAN. Model files use the binary layout below
(all integers and floats little-endian):

    magic   8 bytes  b"GMIA-MLP"
    version u32      currently 1
    seed    u64      rng_seed recorded on the model
    n       u32      number of layers
    per layer: out u32, in u32, activation u8 (0=relu, 1=sigmoid, 2=identity)
    per layer: weight float64[out*in] row-major, then bias float64[out]
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .bitmatrix import atomic_write_bytes
from .rng import derive_seed, make_rng
from .validation import check_both_classes, check_real_matrix

ACTIVATIONS = ("relu", "sigmoid", "identity")
BCE_CLIP = 1e-7

_MAGIC = b"GMIA-MLP"
_FORMAT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    """Raised when a loss or parameter becomes non-finite during training."""


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError("layer weight/bias shapes inconsistent")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class MlpModel:
    layers: list[Layer]
    rng_seed: int = 0

    def __post_init__(self):
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.weight.shape[1] != prev.weight.shape[0]:
                raise ValueError("consecutive layer dimensions do not chain")

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    def copy(self) -> "MlpModel":
        return MlpModel(
            [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers],
            self.rng_seed,
        )


def init_mlp(dims: list[int], activations: list[str] | None = None, seed: int = 0) -> MlpModel:
    """Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases.

    Default activations: relu on hidden layers, sigmoid on the output.
    """
    if len(dims) < 2:
        raise ValueError("need at least input and output dims")
    if activations is None:
        activations = ["relu"] * (len(dims) - 2) + ["sigmoid"]
    if len(activations) != len(dims) - 1:
        raise ValueError("one activation per layer required")
    rng = make_rng(seed)
    layers = []
    for fan_in, fan_out, act in zip(dims[:-1], dims[1:], activations):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weight = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        layers.append(Layer(weight, np.zeros(fan_out), act))
    return MlpModel(layers, rng_seed=seed)


def _apply_activation(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "sigmoid":
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    return z


def _forward_cached(model: MlpModel, batch: np.ndarray):
    """Returns (per-layer post-activations incl. input, pre-activations)."""
    acts = [batch]
    pres = []
    a = batch
    for layer in model.layers:
        z = a @ layer.weight.T + layer.bias
        pres.append(z)
        a = _apply_activation(z, layer.activation)
        acts.append(a)
    return acts, pres


def mlp_forward(model: MlpModel, batch) -> np.ndarray:
    """Final-layer activations for a batch, shape (n, output_dim)."""
    batch = check_real_matrix(batch, "batch")
    if batch.shape[1] != model.input_dim:
        raise ValueError(
            f"batch has {batch.shape[1]} columns, model expects {model.input_dim}"
        )
    acts, _ = _forward_cached(model, batch)
    return acts[-1]


def bce_loss(predictions, labels) -> float:
    """Mean binary cross-entropy with predictions clipped to [1e-7, 1-1e-7]."""
    predictions = np.asarray(predictions, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if predictions.size == 0:
        raise ValueError("empty predictions")
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels differ in length")
    p = np.clip(predictions, BCE_CLIP, 1.0 - BCE_CLIP)
    return float(-np.mean(labels * np.log(p) + (1.0 - labels) * np.log1p(-p)))


def backprop(model: MlpModel, batch, labels) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradients of mean BCE w.r.t. every weight and bias.

    Requires a sigmoid, single-output final layer; the fused
    sigmoid-cross-entropy gradient (p - y)/n keeps the backward pass
    stable at saturated logits.
    """
    batch = check_real_matrix(batch, "batch")
    labels = np.asarray(labels, dtype=np.float64).reshape(-1, 1)
    final = model.layers[-1]
    if final.activation != "sigmoid" or final.weight.shape[0] != 1:
        raise ValueError("backprop expects a sigmoid scalar-output classifier")
    acts, pres = _forward_cached(model, batch)
    n = batch.shape[0]
    delta = (acts[-1] - labels) / n
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(model.layers)
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        grad_w = delta.T @ acts[i]
        grad_b = delta.sum(axis=0)
        if not (np.all(np.isfinite(grad_w)) and np.all(np.isfinite(grad_b))):
            raise TrainingDivergedError(f"non-finite gradient at layer {i}")
        grads[i] = (grad_w, grad_b)
        if i > 0:
            delta = delta @ layer.weight
            prev = model.layers[i - 1]
            if prev.activation == "relu":
                delta = delta * (pres[i - 1] > 0)
            elif prev.activation == "sigmoid":
                s = acts[i]
                delta = delta * s * (1.0 - s)
    return grads


@dataclass
class AdamState:
    m: list[tuple[np.ndarray, np.ndarray]]
    v: list[tuple[np.ndarray, np.ndarray]]
    t: int = 0

    @classmethod
    def zeros_like(cls, model: MlpModel) -> "AdamState":
        m = [(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in model.layers]
        v = [(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in model.layers]
        return cls(m, v, 0)


def adam_step(
    model: MlpModel,
    grads,
    state: AdamState,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> MlpModel:
    """One bias-corrected Adam update, in place; returns the model."""
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for i, layer in enumerate(model.layers):
        for j, (param, grad) in enumerate(
            ((layer.weight, grads[i][0]), (layer.bias, grads[i][1]))
        ):
            if grad.shape != param.shape:
                raise ValueError(f"gradient shape mismatch at layer {i}")
            mom = state.m[i][j]
            vel = state.v[i][j]
            mom *= beta1
            mom += (1.0 - beta1) * grad
            vel *= beta2
            vel += (1.0 - beta2) * grad * grad
            param -= learning_rate * (mom / c1) / (np.sqrt(vel / c2) + eps)
            if not np.all(np.isfinite(param)):
                raise TrainingDivergedError(f"non-finite parameter at layer {i}")
    return model


@dataclass
class TrainConfig:
    epochs: int = 150
    batch_size: int = 100
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 10
    lr_decay_factor: float = 0.5  # 1.0 disables plateau decay
    resample_period: int = 3
    val_fraction: float = 0.2

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in (0, 1)")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")
        if self.resample_period < 1:
            raise ValueError("resample_period must be >= 1")
        if not 0.0 < self.lr_decay_factor <= 1.0:
            raise ValueError("lr_decay_factor must be in (0, 1]")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False


def train_classifier(
    features,
    labels,
    config: TrainConfig,
    hidden: tuple[int, ...] = (64, 32),
    resample_hook=None,
    seed: int = 0,
) -> tuple[MlpModel, TrainHistory]:
    """Minibatch-Adam BCE training with early stopping and plateau LR decay.

    When ``resample_hook`` is given, the positive class is replaced by
    ``hook(n_positives, hook_seed)`` and the train/validation split is
    redrawn every ``resample_period`` epochs (including epoch 0). The
    model with the best recorded validation loss is restored on return.
    """
    features = check_real_matrix(features, "features")
    labels = check_both_classes(labels, "labels")
    if features.shape[0] != labels.size:
        raise ValueError("features and labels differ in length")

    pos = features[labels == 1.0]
    neg = features[labels == 0.0]
    d = features.shape[1]
    rng = make_rng(derive_seed(seed, "train"))
    model = init_mlp([d, *hidden, 1], seed=derive_seed(seed, "init"))
    state = AdamState.zeros_like(model)
    history = TrainHistory()

    lr = config.learning_rate
    best_val = np.inf
    best_weights = model.copy()
    since_best = 0
    since_decay = 0
    decay_wait = max(1, config.patience // 2)

    x_train = y_train = x_val = y_val = None

    def resplit():
        nonlocal x_train, y_train, x_val, y_val
        x_all = np.vstack([pos, neg])
        y_all = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
        order = rng.permutation(len(y_all))
        n_val = max(1, int(round(config.val_fraction * len(y_all))))
        val_idx, train_idx = order[:n_val], order[n_val:]
        x_train, y_train = x_all[train_idx], y_all[train_idx]
        x_val, y_val = x_all[val_idx], y_all[val_idx]
        if len(y_train) == 0:
            raise ValueError("validation split leaves no training rows")

    for epoch in range(config.epochs):
        if resample_hook is not None and epoch % config.resample_period == 0:
            pos = check_real_matrix(
                resample_hook(len(pos), derive_seed(seed, "resample", epoch)), "hook rows"
            )
            if pos.shape[1] != d:
                raise ValueError("resample_hook returned rows of wrong dimension")
            resplit()
        elif epoch == 0:
            resplit()

        order = rng.permutation(len(y_train))
        batch_losses = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            preds = mlp_forward(model, xb).ravel()
            batch_losses.append(bce_loss(preds, yb))
            grads = backprop(model, xb, yb)
            adam_step(model, grads, state, lr, config.beta1, config.beta2, config.adam_eps)

        val_pred = mlp_forward(model, x_val).ravel()
        vloss = bce_loss(val_pred, y_val)
        history.train_loss.append(float(np.mean(batch_losses)))
        history.val_loss.append(vloss)
        history.val_accuracy.append(float(np.mean((val_pred >= 0.5) == (y_val == 1.0))))

        if vloss < best_val:
            best_val = vloss
            best_weights = model.copy()
            history.best_epoch = epoch
            since_best = 0
            since_decay = 0
        else:
            since_best += 1
            since_decay += 1
            if config.lr_decay_factor < 1.0 and since_decay >= decay_wait:
                lr *= config.lr_decay_factor
                since_decay = 0
            if since_best > config.patience:
                history.stopped_early = True
                break

    return best_weights, history


def save_model(model: MlpModel, path: str) -> None:
    parts = [
        _MAGIC,
        struct.pack("<IQI", _FORMAT_VERSION, model.rng_seed % 2**64, len(model.layers)),
    ]
    for layer in model.layers:
        out_dim, in_dim = layer.weight.shape
        parts.append(struct.pack("<IIB", out_dim, in_dim, ACTIVATIONS.index(layer.activation)))
    for layer in model.layers:
        parts.append(layer.weight.astype("<f8").tobytes())
        parts.append(layer.bias.astype("<f8").tobytes())
    atomic_write_bytes(path, b"".join(parts))


def load_model(path: str) -> MlpModel:
    with open(path, "rb") as handle:
        blob = handle.read()
    if blob[:8] != _MAGIC:
        raise ValueError(f"{path}: not a model file")
    version, seed, n_layers = struct.unpack_from("<IQI", blob, 8)
    if version != _FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    offset = 8 + struct.calcsize("<IQI")
    shapes = []
    for _ in range(n_layers):
        out_dim, in_dim, act = struct.unpack_from("<IIB", blob, offset)
        offset += struct.calcsize("<IIB")
        shapes.append((out_dim, in_dim, ACTIVATIONS[act]))
    layers = []
    for out_dim, in_dim, act in shapes:
        w = np.frombuffer(blob, dtype="<f8", count=out_dim * in_dim, offset=offset)
        offset += out_dim * in_dim * 8
        b = np.frombuffer(blob, dtype="<f8", count=out_dim, offset=offset)
        offset += out_dim * 8
        layers.append(Layer(w.reshape(out_dim, in_dim).copy(), b.copy(), act))
    return MlpModel(layers, rng_seed=seed)


class MlpClassifier(BaseEstimator, ClassifierMixin):
    """Estimator face of train_classifier: fit / predict_proba / get_params."""

    def __init__(
        self,
        hidden: tuple[int, ...] = (64, 32),
        epochs: int = 150,
        batch_size: int = 100,
        learning_rate: float = 1e-3,
        patience: int = 10,
        lr_decay_factor: float = 0.5,
        resample_period: int = 3,
        val_fraction: float = 0.2,
        random_state: int = 0,
    ):
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.patience = patience
        self.lr_decay_factor = lr_decay_factor
        self.resample_period = resample_period
        self.val_fraction = val_fraction
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            patience=self.patience,
            lr_decay_factor=self.lr_decay_factor,
            resample_period=self.resample_period,
            val_fraction=self.val_fraction,
        )

    def fit(self, X, y, resample_hook=None):
        self.model_, self.history_ = train_classifier(
            X,
            y,
            self._config(),
            hidden=tuple(self.hidden),
            resample_hook=resample_hook,
            seed=self.random_state,
        )
        return self

    def decision_function(self, X) -> np.ndarray:
        return mlp_forward(self.model_, X).ravel()

    def predict_proba(self, X) -> np.ndarray:
        p = self.decision_function(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) >= 0.5).astype(np.int64)
