"""Dense feed-forward network trained with Adam on softmax cross-entropy.

Everything is plain float64 numpy so analytic gradients can be verified
against central finite differences. Dropout is the inverted variant
(surviving units scaled by 1/(1-p)) and is applied after each hidden ReLU,
never on the logits layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .rng import derive_rng

N_CLASSES = 2


# ---------------------------------------------------------------------------
# parameters


@dataclass
class Layer:
    """One dense layer: weight is (out, in), bias is (out,)."""

    weight: np.ndarray
    bias: np.ndarray

    def copy(self) -> "Layer":
        return Layer(self.weight.copy(), self.bias.copy())

    @property
    def n_in(self) -> int:
        return self.weight.shape[1]

    @property
    def n_out(self) -> int:
        return self.weight.shape[0]


@dataclass
class MlpParams:
    """Ordered layers; ReLU after every layer except the last (logits)."""

    layers: list[Layer]

    def __post_init__(self) -> None:
        for i in range(1, len(self.layers)):
            if self.layers[i].n_in != self.layers[i - 1].n_out:
                raise ValueError(
                    f"layer {i}: expects {self.layers[i].n_in} inputs but "
                    f"layer {i - 1} produces {self.layers[i - 1].n_out}"
                )

    @property
    def n_inputs(self) -> int:
        return self.layers[0].n_in

    @property
    def n_outputs(self) -> int:
        return self.layers[-1].n_out

    def copy(self) -> "MlpParams":
        return MlpParams([lay.copy() for lay in self.layers])

    def to_jsonable(self) -> dict:
        return {
            "layers": [
                {"weight": lay.weight.tolist(), "bias": lay.bias.tolist()}
                for lay in self.layers
            ]
        }

    @classmethod
    def from_jsonable(cls, obj: dict) -> "MlpParams":
        return cls(
            [
                Layer(
                    np.asarray(lay["weight"], dtype=float),
                    np.asarray(lay["bias"], dtype=float),
                )
                for lay in obj["layers"]
            ]
        )


def init_layer(n_out: int, n_in: int, rng: np.random.Generator) -> Layer:
    # scaled-uniform init, range +/- sqrt(6 / (fan_in + fan_out))
    bound = math.sqrt(6.0 / (n_in + n_out))
    weight = rng.uniform(-bound, bound, size=(n_out, n_in))
    bias = np.zeros(n_out)
    return Layer(weight, bias)


def init_mlp(layer_sizes: list[int], rng: np.random.Generator) -> MlpParams:
    """Initialise a network with the given unit counts, e.g. [20, 30, 10, 2]."""
    layers = [
        init_layer(layer_sizes[i + 1], layer_sizes[i], rng)
        for i in range(len(layer_sizes) - 1)
    ]
    return MlpParams(layers)


# ---------------------------------------------------------------------------
# training configuration and optimizer state


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    dropout_rate: float = 0.0
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # "pre_update": per-sample losses recorded as each training batch is
    # consumed, before the parameter update. "post_epoch": an extra
    # inference pass over the full training set at the end of each epoch.
    trace_mode: str = "pre_update"

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.trace_mode not in ("pre_update", "post_epoch"):
            raise ValueError(f"unknown trace_mode {self.trace_mode!r}")


@dataclass
class AdamState:
    """First/second moments per layer, plus the step counter."""

    m: list[Layer]
    v: list[Layer]
    t: int = 0

    @classmethod
    def zeros_like(cls, layers: list[Layer]) -> "AdamState":
        return cls(
            m=[Layer(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in layers],
            v=[Layer(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in layers],
        )

    def copy(self) -> "AdamState":
        return AdamState(
            [l.copy() for l in self.m], [l.copy() for l in self.v], self.t
        )


@dataclass
class EpochTrace:
    """Per-sample training losses for one epoch, keyed (participant, row index)."""

    epoch: int
    sample_losses: dict[tuple[str, int], float]
    mean_loss: float


@dataclass
class ParamSnapshot:
    epoch: int
    params: MlpParams
    adam: AdamState


@dataclass
class TrainResult:
    params: MlpParams
    traces: list[EpochTrace]
    snapshots: list[ParamSnapshot]


# ---------------------------------------------------------------------------
# forward / loss / backward


def forward(
    params: MlpParams,
    batch: np.ndarray,
    mode: str = "infer",
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, list]:
    """Run the network on an (n, d) batch. Returns (logits, cache).

    The cache holds, per layer, (layer input, pre-activation, dropout mask
    or None, weight); it is what `backward` consumes.
    """
    batch = np.asarray(batch, dtype=float)
    if batch.ndim != 2 or batch.shape[1] != params.n_inputs:
        raise ValueError(
            f"layer 0: expected input with {params.n_inputs} columns, "
            f"got shape {batch.shape}"
        )
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown mode {mode!r}")
    use_dropout = mode == "train" and dropout_rate > 0.0
    if use_dropout and rng is None:
        raise ValueError("train-mode dropout requires an rng")

    cache = []
    a = batch
    last = len(params.layers) - 1
    for i, lay in enumerate(params.layers):
        z = a @ lay.weight.T + lay.bias
        if i < last:
            h = np.maximum(z, 0.0)
            if use_dropout:
                mask = (rng.random(h.shape) >= dropout_rate) / (1.0 - dropout_rate)
            else:
                mask = None
            cache.append((a, z, mask, lay.weight))
            a = h if mask is None else h * mask
        else:
            cache.append((a, z, None, lay.weight))
            a = z
    return a, cache


def softmax_cross_entropy(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample cross-entropy loss and softmax probabilities."""
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ValueError(f"logits must be 2-D, got shape {logits.shape}")
    if labels.shape != (logits.shape[0],):
        raise ValueError("labels length must match logits rows")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    labels = labels.astype(int)
    shifted = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - logsumexp
    probs = np.exp(log_probs)
    losses = -log_probs[np.arange(len(labels)), labels]
    return losses, probs


def backward(
    cache: list,
    probs: np.ndarray,
    labels: np.ndarray,
    return_input_grad: bool = False,
):
    """Gradients of the mean per-sample loss, shaped like the layer list.

    With `return_input_grad` also returns dLoss/dInput, needed when part of
    the input (e.g. an embedding lookup) is itself trainable.
    """
    labels = np.asarray(labels, dtype=int)
    n = probs.shape[0]
    if cache[-1][1].shape != probs.shape:
        raise ValueError("cache does not match probs; rerun forward in train mode")
    delta = probs.copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n

    grads: list[Layer | None] = [None] * len(cache)
    for i in range(len(cache) - 1, -1, -1):
        a_in, _z, _mask, weight = cache[i]
        grads[i] = Layer(delta.T @ a_in, delta.sum(axis=0))
        if i > 0:
            da = delta @ weight
            _, prev_z, prev_mask, _ = cache[i - 1]
            if prev_mask is not None:
                da = da * prev_mask
            delta = da * (prev_z > 0.0)
    if return_input_grad:
        return grads, delta @ cache[0][3]
    return grads  # type: ignore[return-value]


def finite_diff_grad(
    params: MlpParams,
    batch: np.ndarray,
    labels: np.ndarray,
    h: float = 1e-4,
) -> list[Layer]:
    """Central-difference gradients of the mean loss; dropout disabled."""
    if h <= 0:
        raise ValueError("h must be > 0")

    def loss_at(p: MlpParams) -> float:
        logits, _ = forward(p, batch, mode="infer")
        losses, _ = softmax_cross_entropy(logits, labels)
        return float(losses.mean())

    work = params.copy()
    grads = []
    for lay in work.layers:
        g = Layer(np.zeros_like(lay.weight), np.zeros_like(lay.bias))
        for arr, out in ((lay.weight, g.weight), (lay.bias, g.bias)):
            flat = arr.ravel()
            gflat = out.ravel()
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + h
                lp = loss_at(work)
                flat[j] = orig - h
                lm = loss_at(work)
                flat[j] = orig
                gflat[j] = (lp - lm) / (2.0 * h)
        grads.append(g)
    return grads


def adam_step_layers(
    layers: list[Layer],
    grads: list[Layer],
    state: AdamState,
    config: TrainConfig,
) -> None:
    """One bias-corrected Adam update, applied in place to `layers`."""
    state.t += 1
    t = state.t
    b1, b2, eps, lr = config.beta1, config.beta2, config.eps, config.learning_rate
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for i, (lay, g) in enumerate(zip(layers, grads)):
        for name in ("weight", "bias"):
            gv = getattr(g, name)
            if not np.isfinite(gv).all():
                raise FloatingPointError(f"non-finite gradient at layer {i} {name}")
            m = getattr(state.m[i], name)
            v = getattr(state.v[i], name)
            m *= b1
            m += (1.0 - b1) * gv
            v *= b2
            v += (1.0 - b2) * gv * gv
            theta = getattr(lay, name)
            theta -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def adam_step(
    params: MlpParams,
    grads: list[Layer],
    state: AdamState,
    config: TrainConfig,
) -> tuple[MlpParams, AdamState]:
    adam_step_layers(params.layers, grads, state, config)
    return params, state


def predict(params: MlpParams, inputs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Argmax class per row (ties toward class 0) and softmax probabilities."""
    logits, _ = forward(params, inputs, mode="infer")
    _, probs = softmax_cross_entropy(logits, np.zeros(len(logits), dtype=int))
    labels = np.argmax(logits, axis=1)  # argmax returns the first max: tie -> 0
    return labels, probs


# ---------------------------------------------------------------------------
# training loop


def train(
    params: MlpParams,
    X: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
    snapshot_epochs: set[int] | frozenset[int] = frozenset(),
    participant_ids: np.ndarray | None = None,
) -> TrainResult:
    """Train a single network; deterministic for a fixed config seed.

    Per-sample losses are keyed (participant_id, global row index); rows
    without participant ids are keyed ("", index). Epochs are 1-based and
    snapshots are deep copies taken at the end of the named epochs.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    n = len(X)
    if n == 0:
        raise ValueError("training data must be non-empty")
    if participant_ids is None:
        participant_ids = np.array([""] * n, dtype=object)
    bad = [e for e in snapshot_epochs if not 1 <= e <= config.epochs]
    if bad:
        raise ValueError(f"snapshot epochs {bad} outside [1, {config.epochs}]")

    state = AdamState.zeros_like(params.layers)
    shuffle_rng = derive_rng(config.seed, "shuffle")
    dropout_rng = derive_rng(config.seed, "dropout")

    traces: list[EpochTrace] = []
    snapshots: list[ParamSnapshot] = []
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        sample_losses: dict[tuple[str, int], float] = {}
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            logits, cache = forward(
                params, X[idx], mode="train",
                dropout_rate=config.dropout_rate, rng=dropout_rng,
            )
            losses, probs = softmax_cross_entropy(logits, y[idx])
            if config.trace_mode == "pre_update":
                for j, row in enumerate(idx):
                    sample_losses[(participant_ids[row], int(row))] = float(losses[j])
            grads = backward(cache, probs, y[idx])
            adam_step_layers(params.layers, grads, state, config)
        if config.trace_mode == "post_epoch":
            logits, _ = forward(params, X, mode="infer")
            losses, _ = softmax_cross_entropy(logits, y)
            sample_losses = {
                (participant_ids[i], i): float(losses[i]) for i in range(n)
            }
        mean_loss = float(np.mean(list(sample_losses.values())))
        traces.append(EpochTrace(epoch, sample_losses, mean_loss))
        if epoch in snapshot_epochs:
            snapshots.append(ParamSnapshot(epoch, params.copy(), state.copy()))
    return TrainResult(params, traces, snapshots)


def per_sample_losses(
    params: MlpParams, X: np.ndarray, y: np.ndarray
) -> np.ndarray:
    """Inference-mode cross-entropy loss per row."""
    logits, _ = forward(params, X, mode="infer")
    losses, _ = softmax_cross_entropy(logits, y)
    return losses


class MlpClassifier(BaseEstimator, ClassifierMixin):
    """sklearn-style wrapper around the functional training loop.

    Parameters mirror TrainConfig; `hidden_layer_sizes` defaults to the
    (30, 10) architecture used throughout the package.
    """

    def __init__(
        self,
        hidden_layer_sizes: tuple[int, ...] = (30, 10),
        learning_rate: float = 0.001,
        dropout_rate: float = 0.0,
        epochs: int = 30,
        batch_size: int = 32,
        seed: int = 0,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.learning_rate = learning_rate
        self.dropout_rate = dropout_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            dropout_rate=self.dropout_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
        )

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        sizes = [X.shape[1], *self.hidden_layer_sizes, N_CLASSES]
        params = init_mlp(sizes, derive_rng(self.seed, "init"))
        result = train(params, X, y, self._config())
        self.params_ = result.params
        self.traces_ = result.traces
        return self

    def predict(self, X):
        labels, _ = predict(self.params_, np.asarray(X, dtype=float))
        return labels

    def predict_proba(self, X):
        _, probs = predict(self.params_, np.asarray(X, dtype=float))
        return probs
