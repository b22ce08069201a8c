"""Small trainable MLP classifier used as the model under test.

The network is deliberately tiny: a fully-connected stack with a logit
layer whose width equals the class count.  It produces everything the
metric modules need — logit-layer traces, per-layer activations for
coverage, and a training loop that the mutation operators can perturb
(batch size, learning rate, optimizer, zero-grad handling, scheduler
call, activation function, layer sizes, biases, dropout).

Training is single-threaded and fully determined by (seed, configs, data).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from . import traces as traces_mod
from .errors import AdequacyLabError, DimensionMismatchError, DivergenceError, DomainError


# ---------------------------------------------------------------------------
# activations

def _relu(z):
    return np.maximum(0.0, z)


def _relu_grad(z, a):
    return (z > 0.0).astype(np.float64)


def _tanh(z):
    return np.tanh(z)


def _tanh_grad(z, a):
    return 1.0 - a * a


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _sigmoid_grad(z, a):
    return a * (1.0 - a)


def _log_sigmoid(z):
    # -softplus(-z), numerically stable
    return np.where(z >= 0, -np.log1p(np.exp(-z)), z - np.log1p(np.exp(z)))


def _log_sigmoid_grad(z, a):
    return _sigmoid(-z)


def _leaky_relu(z):
    return np.where(z > 0.0, z, 0.01 * z)


def _leaky_relu_grad(z, a):
    return np.where(z > 0.0, 1.0, 0.01)


ACTIVATIONS = {
    "relu": (_relu, _relu_grad),
    "tanh": (_tanh, _tanh_grad),
    "sigmoid": (_sigmoid, _sigmoid_grad),
    "log_sigmoid": (_log_sigmoid, _log_sigmoid_grad),
    "leaky_relu": (_leaky_relu, _leaky_relu_grad),
}


# ---------------------------------------------------------------------------
# configs and data

@dataclass
class ModelConfig:
    layer_sizes: list[int]
    activation: str = "relu"
    dropout_rate: float = 0.0
    use_bias_per_layer: list[bool] | None = None
    seed: int = 0

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise DomainError("layer_sizes needs at least input and logit sizes")
        if any(s <= 0 for s in self.layer_sizes):
            raise DomainError(f"layer sizes must be positive: {self.layer_sizes}")
        if self.activation not in ACTIVATIONS:
            raise DomainError(f"unknown activation {self.activation!r}")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise DomainError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        n_layers = len(self.layer_sizes) - 1
        if self.use_bias_per_layer is None:
            self.use_bias_per_layer = [True] * n_layers
        if len(self.use_bias_per_layer) != n_layers:
            raise DomainError("use_bias_per_layer length must equal layer count")


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 0.01
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    skip_zero_grad: bool = False
    use_scheduler: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in ("adam", "adagrad", "sgd"):
            raise DomainError(f"unknown optimizer {self.optimizer!r}")
        if not (0.0 < self.adam_beta1 < 1.0 and 0.0 < self.adam_beta2 < 1.0):
            raise DomainError("adam betas must lie in (0, 1)")
        if self.adam_epsilon <= 0:
            raise DomainError("adam_epsilon must be positive")
        if self.epochs < 0 or self.batch_size <= 0 or self.learning_rate <= 0:
            raise DomainError("epochs >= 0, batch_size > 0, learning_rate > 0 required")


@dataclass
class LabeledDataset:
    inputs: np.ndarray  # (n, d) float64 in [0, 1]
    labels: np.ndarray  # (n,) int64
    class_count: int

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.shape[0] == 0:
            raise DomainError("dataset is empty")
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise DimensionMismatchError(self.inputs.shape[0], self.labels.shape[0],
                                         "inputs vs labels")
        if self.labels.min() < 0 or self.labels.max() >= self.class_count:
            raise DomainError("labels out of range for class_count")

    def __len__(self):
        return self.inputs.shape[0]


@dataclass
class DatasetSplits:
    train: LabeledDataset
    validation: LabeledDataset
    test: LabeledDataset


@dataclass
class TrainedModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    config: ModelConfig
    train_config: TrainConfig
    history: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# initialization and forward pass

def init_model(model_cfg: ModelConfig, train_cfg: TrainConfig) -> TrainedModel:
    """Seeded Glorot-uniform initialization; biases start at zero."""
    rng = np.random.default_rng(model_cfg.seed)
    weights, biases = [], []
    sizes = model_cfg.layer_sizes
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return TrainedModel(weights, biases, model_cfg, train_cfg)


def _forward(model: TrainedModel, x: np.ndarray, *, training=False, rng=None):
    """Forward pass; returns (per-layer post-activations incl. logits, pre-activations).

    Dropout applies to hidden activations only, and only while training.
    """
    act_fn, _ = ACTIVATIONS[model.config.activation]
    rate = model.config.dropout_rate
    a = x
    post, pre, masks = [], [], []
    n_layers = len(model.weights)
    for li, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        pre.append(z)
        if li < n_layers - 1:
            a = act_fn(z)
            if training and rate > 0.0:
                mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
                a = a * mask
                masks.append(mask)
            else:
                masks.append(None)
        else:
            a = z  # logits
            masks.append(None)
        post.append(a)
    return post, pre, masks


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grads(model: TrainedModel, x: np.ndarray, y: np.ndarray, *,
                   training=False, rng=None):
    """Mean softmax cross-entropy loss and gradients w.r.t. every weight/bias."""
    post, pre, masks = _forward(model, x, training=training, rng=rng)
    logits = post[-1]
    probs = _softmax(logits)
    n = x.shape[0]
    eps = 1e-300
    loss = -np.mean(np.log(probs[np.arange(n), y] + eps))

    _, act_grad = ACTIVATIONS[model.config.activation]
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n

    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    for li in range(len(model.weights) - 1, -1, -1):
        a_prev = x if li == 0 else post[li - 1]
        grads_w[li] = a_prev.T @ delta
        grads_b[li] = delta.sum(axis=0)
        if li > 0:
            delta = delta @ model.weights[li].T
            if masks[li - 1] is not None:
                delta = delta * masks[li - 1]
            delta = delta * act_grad(pre[li - 1], post[li - 1])
    return loss, grads_w, grads_b


# ---------------------------------------------------------------------------
# optimizers

class _Optimizer:
    """Adam / Adagrad / SGD over the flat list of parameter arrays."""

    def __init__(self, cfg: TrainConfig, shapes):
        self.cfg = cfg
        self.t = 0
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]

    def step(self, params, grads, lr):
        cfg = self.cfg
        self.t += 1
        if cfg.optimizer == "sgd":
            for p, g in zip(params, grads):
                p -= lr * g
        elif cfg.optimizer == "adagrad":
            for p, g, v in zip(params, grads, self.v):
                v += g * g
                p -= lr * g / (np.sqrt(v) + cfg.adam_epsilon)
        else:  # adam
            b1, b2 = cfg.adam_beta1, cfg.adam_beta2
            bc1 = 1.0 - b1 ** self.t
            bc2 = 1.0 - b2 ** self.t
            for p, g, m, v in zip(params, grads, self.m, self.v):
                m *= b1
                m += (1.0 - b1) * g
                v *= b2
                v += (1.0 - b2) * g * g
                p -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_epsilon)


def adam_step(params, grads, state, *, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update over a list of arrays; reusable by other trainers.

    `state` is a dict carrying t/m/v, initialized empty.
    """
    if not state:
        state["t"] = 0
        state["m"] = [np.zeros_like(p) for p in params]
        state["v"] = [np.zeros_like(p) for p in params]
    state["t"] += 1
    t = state["t"]
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


# ---------------------------------------------------------------------------
# training

def train(data: LabeledDataset, model_cfg: ModelConfig, train_cfg: TrainConfig,
          validation: LabeledDataset | None = None) -> TrainedModel:
    """Train the MLP; deterministic given (seeds, configs, data).

    Scheduler policy: halve the learning rate when the monitored loss
    (validation if provided, else training) fails to improve for 3
    consecutive epochs; stop after 6 non-improving epochs.  Disabled when
    train_cfg.use_scheduler is False.
    """
    if data.inputs.shape[1] != model_cfg.layer_sizes[0]:
        raise DimensionMismatchError(model_cfg.layer_sizes[0], data.inputs.shape[1],
                                     "input dim vs first layer")
    if model_cfg.layer_sizes[-1] != data.class_count:
        raise DomainError(
            f"logit width {model_cfg.layer_sizes[-1]} != class_count {data.class_count}")

    model = init_model(model_cfg, train_cfg)
    if train_cfg.epochs == 0:
        model.history = {"train_loss": [], "val_loss": [], "lr": []}
        return model

    rng = np.random.default_rng(train_cfg.seed)
    n = len(data)
    params = model.weights + model.biases
    opt = _Optimizer(train_cfg, [p.shape for p in params])
    bias_mask = model.config.use_bias_per_layer

    lr = train_cfg.learning_rate
    best = np.inf
    stale = 0
    accum = None  # gradient accumulation buffers for the zero-grad fault
    history = {"train_loss": [], "val_loss": [], "lr": []}

    for epoch in range(train_cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        batches = 0
        for start in range(0, n, train_cfg.batch_size):
            idx = order[start:start + train_cfg.batch_size]
            loss, gw, gb = loss_and_grads(model, data.inputs[idx], data.labels[idx],
                                          training=True, rng=rng)
            if not np.isfinite(loss):
                raise DivergenceError(epoch)
            for li, use_bias in enumerate(bias_mask):
                if not use_bias:
                    gb[li][:] = 0.0
            grads = gw + gb
            if train_cfg.skip_zero_grad:
                # faulty framework usage: gradients accumulate across batches
                if accum is None:
                    accum = [g.copy() for g in grads]
                else:
                    for a, g in zip(accum, grads):
                        a += g
                grads = accum
            opt.step(params, grads, lr)
            epoch_loss += loss
            batches += 1
        train_loss = epoch_loss / batches
        if validation is not None:
            monitored = evaluate_loss(model, validation)
        else:
            monitored = train_loss
        if not np.isfinite(monitored):
            raise DivergenceError(epoch)
        history["train_loss"].append(train_loss)
        history["val_loss"].append(monitored if validation is not None else None)
        history["lr"].append(lr)

        if train_cfg.use_scheduler:
            if monitored < best - 1e-12:
                best = monitored
                stale = 0
            else:
                stale += 1
                if stale >= 6:
                    break
                if stale % 3 == 0:
                    lr *= 0.5

    model.history = history
    return model


def evaluate_loss(model: TrainedModel, data: LabeledDataset) -> float:
    loss, _, _ = loss_and_grads(model, data.inputs, data.labels)
    return loss


def logits(model: TrainedModel, inputs: np.ndarray) -> np.ndarray:
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if inputs.shape[1] != model.config.layer_sizes[0]:
        raise DimensionMismatchError(model.config.layer_sizes[0], inputs.shape[1],
                                     "predict input dim")
    post, _, _ = _forward(model, inputs)
    return post[-1]


def predict(model: TrainedModel, inputs: np.ndarray) -> np.ndarray:
    """Argmax over logits; ties broken by lowest class index."""
    return np.argmax(logits(model, inputs), axis=1)


def accuracy(model: TrainedModel, data: LabeledDataset) -> float:
    return float(np.mean(predict(model, data.inputs) == data.labels))


def extract_traces(model: TrainedModel, data: LabeledDataset, split_tag: str):
    """One latent trace per input: logit-layer pre-softmax activations + argmax."""
    z = logits(model, data.inputs)
    preds = np.argmax(z, axis=1)
    return traces_mod.from_arrays(split_tag, data.class_count, z, data.labels, preds)


def layer_activations(model: TrainedModel, x) -> list[np.ndarray]:
    """Post-activation vectors for every hidden layer plus the logits."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.config.layer_sizes[0]:
        raise DimensionMismatchError(model.config.layer_sizes[0], x.shape,
                                     "layer_activations input")
    post, _, _ = _forward(model, x.reshape(1, -1))
    return [a[0] for a in post]


# ---------------------------------------------------------------------------
# persistence ("LMDL" format)

MODEL_MAGIC = b"LMDL"
MODEL_VERSION = 1


def save_model(model: TrainedModel) -> bytes:
    cfg = {"model": asdict(model.config), "train": asdict(model.train_config)}
    cfg_bytes = json.dumps(cfg, sort_keys=True).encode("utf-8")
    out = [MODEL_MAGIC, struct.pack("<B", MODEL_VERSION),
           struct.pack("<I", len(cfg_bytes)), cfg_bytes]
    for w, b in zip(model.weights, model.biases):
        out.append(w.astype("<f8").tobytes())
        out.append(b.astype("<f8").tobytes())
    return b"".join(out)


def load_model(data: bytes) -> TrainedModel:
    if data[:4] != MODEL_MAGIC:
        raise AdequacyLabError(f"bad model magic {data[:4]!r}")
    if data[4] != MODEL_VERSION:
        raise AdequacyLabError(f"unsupported model version {data[4]}")
    (cfg_len,) = struct.unpack_from("<I", data, 5)
    cfg = json.loads(data[9:9 + cfg_len].decode("utf-8"))
    model_cfg = ModelConfig(**cfg["model"])
    train_cfg = TrainConfig(**cfg["train"])
    off = 9 + cfg_len
    weights, biases = [], []
    sizes = model_cfg.layer_sizes
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(data, dtype="<f8", count=fan_in * fan_out,
                          offset=off).reshape(fan_in, fan_out).copy()
        off += 8 * fan_in * fan_out
        b = np.frombuffer(data, dtype="<f8", count=fan_out, offset=off).copy()
        off += 8 * fan_out
        weights.append(w)
        biases.append(b)
    return TrainedModel(weights, biases, model_cfg, train_cfg)


# ---------------------------------------------------------------------------
# synthetic datasets

def make_dataset(kind: str, params: dict | None = None, seed: int = 0) -> DatasetSplits:
    """Deterministic desk-scale dataset generator with a 70/10/20 stratified split.

    kinds:
      blobs       gaussian clusters, params: classes, samples, dim, spread
      rings       concentric 2-D rings (not linearly separable), params: classes,
                  samples, noise
      digits_file CSV file of `label,p0,...,p{d-1}` rows, params: path
    """
    params = dict(params or {})
    if kind == "blobs":
        inputs, labels, cc = _make_blobs(params, seed)
    elif kind == "rings":
        inputs, labels, cc = _make_rings(params, seed)
    elif kind == "digits_file":
        inputs, labels, cc = _load_digits_file(params)
    else:
        raise DomainError(f"unknown dataset kind {kind!r}")
    return _stratified_split(inputs, labels, cc, seed,
                             params.get("split", (0.7, 0.1, 0.2)))


def _make_blobs(params, seed):
    classes = int(params.get("classes", 3))
    samples = int(params.get("samples", 300))
    dim = int(params.get("dim", 2))
    spread = float(params.get("spread", 0.06))
    if classes < 2 or samples < 10 * classes:
        raise DomainError("need >= 2 classes and >= 10 samples per class")
    rng = np.random.default_rng(seed)
    # class centers spaced on a circle in the first two dims, jittered in the rest
    centers = np.full((classes, dim), 0.5)
    angles = 2.0 * np.pi * np.arange(classes) / classes
    centers[:, 0] = 0.5 + 0.35 * np.cos(angles)
    centers[:, 1 % dim] = 0.5 + 0.35 * np.sin(angles)
    if dim > 2:
        centers[:, 2:] = rng.uniform(0.2, 0.8, size=(classes, dim - 2))
    per = samples // classes
    xs, ys = [], []
    for c in range(classes):
        pts = centers[c] + rng.normal(0.0, spread, size=(per, dim))
        xs.append(pts)
        ys.append(np.full(per, c, dtype=np.int64))
    inputs = np.clip(np.vstack(xs), 0.0, 1.0)
    labels = np.concatenate(ys)
    return inputs, labels, classes


def _make_rings(params, seed):
    classes = int(params.get("classes", 2))
    samples = int(params.get("samples", 400))
    noise = float(params.get("noise", 0.02))
    if classes < 2 or samples < 10 * classes:
        raise DomainError("need >= 2 classes and >= 10 samples per class")
    rng = np.random.default_rng(seed)
    per = samples // classes
    xs, ys = [], []
    for c in range(classes):
        radius = 0.12 + 0.32 * c / max(1, classes - 1)
        theta = rng.uniform(0.0, 2.0 * np.pi, size=per)
        r = radius + rng.normal(0.0, noise, size=per)
        pts = np.stack([0.5 + r * np.cos(theta), 0.5 + r * np.sin(theta)], axis=1)
        xs.append(pts)
        ys.append(np.full(per, c, dtype=np.int64))
    inputs = np.clip(np.vstack(xs), 0.0, 1.0)
    labels = np.concatenate(ys)
    return inputs, labels, classes


def _load_digits_file(params):
    path = params.get("path")
    if path is None:
        raise DomainError("digits_file requires a 'path' parameter")
    try:
        raw = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except OSError as exc:
        raise DomainError(f"digits file unreadable: {exc}") from None
    except ValueError as exc:
        raise DomainError(f"digits file corrupt: {exc}") from None
    if raw.shape[1] < 2:
        raise DomainError("digits file needs a label column plus pixels")
    labels = raw[:, 0].astype(np.int64)
    inputs = raw[:, 1:]
    lo, hi = inputs.min(), inputs.max()
    if hi > lo:
        inputs = (inputs - lo) / (hi - lo)
    return inputs, labels, int(labels.max()) + 1


def _stratified_split(inputs, labels, class_count, seed, fractions):
    f_train, f_val, _ = fractions
    rng = np.random.default_rng(seed + 1)
    tr, va, te = [], [], []
    for c in range(class_count):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        n = len(idx)
        n_tr = int(round(n * f_train))
        n_va = int(round(n * f_val))
        tr.extend(idx[:n_tr])
        va.extend(idx[n_tr:n_tr + n_va])
        te.extend(idx[n_tr + n_va:])
    tr, va, te = (np.array(sorted(s), dtype=np.int64) for s in (tr, va, te))
    return DatasetSplits(
        LabeledDataset(inputs[tr], labels[tr], class_count),
        LabeledDataset(inputs[va], labels[va], class_count),
        LabeledDataset(inputs[te], labels[te], class_count),
    )
