"""Pre-training mutation operators, mutant training, and mutation score.

Each operator perturbs exactly one aspect of the base training setup:
hyperparameters (batch size, learning rate, optimizer), framework API
usage (zero-grad reset, scheduler call), training data (noise, sample
removal, class overlap, label flips), or model structure (activation,
layer sizes, biases, dropout).  Mutants are obtained by retraining from
scratch under the perturbed setup.

The mutation score of a mutant is the fraction of evaluation inputs on
which its predictions disagree with the original model's; scores are kept
per mutant, never aggregated across the catalogue.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import AdequacyLabError, DivergenceError, DomainError, EmptyInputError
from .refmodel import (
    ACTIVATIONS,
    LabeledDataset,
    ModelConfig,
    TrainConfig,
    TrainedModel,
    accuracy,
    predict,
    train,
)

OPERATORS = (
    "increase_batch", "decrease_batch", "decrease_lr", "increase_lr",
    "change_optimizer", "remove_zero_grad", "remove_call",
    "add_training_noise", "remove_samples", "make_classes_overlap",
    "change_labels", "change_activation", "layer_size", "remove_bias",
    "add_dropout",
)

_DATA_OPERATORS = {"add_training_noise", "remove_samples", "make_classes_overlap",
                   "change_labels"}


@dataclass
class MutantSpec:
    operator: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.operator not in OPERATORS:
            raise DomainError(f"unknown mutation operator {self.operator!r}")
        _validate_params(self.operator, self.params)

    @property
    def mutant_id(self) -> str:
        parts = [self.operator] + [f"{k}={v}" for k, v in sorted(self.params.items())]
        return "_".join(str(p) for p in parts) + f"_s{self.seed}"


def _validate_params(op, params):
    if op in ("add_training_noise", "remove_samples", "make_classes_overlap"):
        f = params.get("fraction")
        if f is None or not (0.0 < f < 1.0):
            raise DomainError(f"{op} requires 'fraction' in (0, 1), got {f}")
    elif op == "change_labels":
        p = params.get("percent")
        if p is None or not (0.0 < p < 100.0):
            raise DomainError(f"change_labels requires 'percent' in (0, 100), got {p}")
    elif op == "change_activation":
        a = params.get("activation")
        if a not in ACTIVATIONS:
            raise DomainError(f"change_activation requires a known activation, got {a!r}")
    elif op == "layer_size":
        s = params.get("scale")
        if s is None or s <= 0:
            raise DomainError(f"layer_size requires positive 'scale', got {s}")
    elif op == "add_dropout":
        r = params.get("rate")
        if r is None or not (0.0 <= r < 1.0):
            raise DomainError(f"add_dropout requires 'rate' in [0, 1), got {r}")
    elif op in ("increase_batch", "decrease_batch"):
        b = params.get("batch_size")
        if b is not None and b <= 0:
            raise DomainError(f"{op} batch_size must be positive, got {b}")
    elif op in ("increase_lr", "decrease_lr"):
        lr = params.get("learning_rate")
        if lr is not None and lr <= 0:
            raise DomainError(f"{op} learning_rate must be positive, got {lr}")


@dataclass
class MutantResult:
    spec: MutantSpec
    model: TrainedModel | None
    mutation_score: float | None = None
    accuracy: float | None = None
    lscd: float | None = None
    dsc: float | None = None
    dsc_by_k: dict[int, float] | None = None
    skipped_reason: str | None = None


def apply_operator(base_model_cfg: ModelConfig, base_train_cfg: TrainConfig,
                   base_data: LabeledDataset, spec: MutantSpec):
    """Return (model_cfg, train_cfg, data) with exactly one aspect perturbed.

    Desk-scale default magnitudes: batch sizes {4, 256}, learning rates
    {1e-5, 0.05, 0.5}; explicit values in spec.params override them.
    """
    model_cfg = copy.deepcopy(base_model_cfg)
    train_cfg = copy.deepcopy(base_train_cfg)
    data = base_data
    op = spec.operator
    p = spec.params

    if op == "increase_batch":
        train_cfg.batch_size = int(p.get("batch_size", 256))
    elif op == "decrease_batch":
        train_cfg.batch_size = int(p.get("batch_size", 4))
    elif op == "decrease_lr":
        train_cfg.learning_rate = float(p.get("learning_rate", 1e-5))
    elif op == "increase_lr":
        train_cfg.learning_rate = float(p.get("learning_rate", 0.5))
    elif op == "change_optimizer":
        train_cfg.optimizer = p.get("optimizer", "adagrad")
    elif op == "remove_zero_grad":
        train_cfg.skip_zero_grad = True
    elif op == "remove_call":
        train_cfg.use_scheduler = False
    elif op in _DATA_OPERATORS:
        data = _mutate_data(base_data, spec)
    elif op == "change_activation":
        model_cfg.activation = p["activation"]
    elif op == "layer_size":
        scale = float(p["scale"])
        sizes = model_cfg.layer_sizes
        model_cfg.layer_sizes = (
            [sizes[0]] + [max(1, int(round(h * scale))) for h in sizes[1:-1]] + [sizes[-1]])
    elif op == "remove_bias":
        model_cfg.use_bias_per_layer = [False] * (len(model_cfg.layer_sizes) - 1)
    elif op == "add_dropout":
        model_cfg.dropout_rate = float(p["rate"])
    return model_cfg, train_cfg, data


def _mutate_data(base: LabeledDataset, spec: MutantSpec) -> LabeledDataset:
    rng = np.random.default_rng(spec.seed)
    op = spec.operator
    p = spec.params
    inputs = base.inputs.copy()
    labels = base.labels.copy()

    if op == "add_training_noise":
        sigma = float(p["fraction"])
        inputs = np.clip(inputs + rng.normal(0.0, sigma, size=inputs.shape), 0.0, 1.0)
    elif op == "remove_samples":
        frac = float(p["fraction"])
        keep: list[int] = []
        for c in range(base.class_count):
            idx = np.flatnonzero(labels == c)
            idx = idx[rng.permutation(len(idx))]
            n_keep = len(idx) - int(round(len(idx) * frac))
            keep.extend(idx[:max(1, n_keep)])
        keep_arr = np.array(sorted(keep), dtype=np.int64)
        inputs = inputs[keep_arr]
        labels = labels[keep_arr]
    elif op == "make_classes_overlap":
        frac = float(p["fraction"])
        target = int(p.get("class_index", 0)) % base.class_count
        source = (target + 1) % base.class_count
        idx = np.flatnonzero(labels == source)
        idx = idx[rng.permutation(len(idx))]
        n_flip = int(round(len(idx) * frac))
        labels[idx[:n_flip]] = target
    elif op == "change_labels":
        frac = float(p["percent"]) / 100.0
        n_flip = int(len(labels) * frac)
        idx = rng.permutation(len(labels))[:n_flip]
        offsets = rng.integers(1, base.class_count, size=n_flip)
        labels[idx] = (labels[idx] + offsets) % base.class_count
    return LabeledDataset(inputs, labels, base.class_count)


def build_mutants(catalogue: list[MutantSpec], base_model_cfg: ModelConfig,
                  base_train_cfg: TrainConfig, base_data: LabeledDataset,
                  validation: LabeledDataset | None = None) -> list[MutantResult]:
    """Train one mutant per spec; divergent trainings become skip records."""
    if not catalogue:
        raise EmptyInputError("empty mutant catalogue")
    results = []
    for spec in catalogue:
        model_cfg, train_cfg, data = apply_operator(
            base_model_cfg, base_train_cfg, base_data, spec)
        # independent seeds per mutant, derived from the spec seed
        model_cfg.seed = spec.seed
        train_cfg.seed = spec.seed + 1
        try:
            model = train(data, model_cfg, train_cfg, validation)
            results.append(MutantResult(spec, model))
        except DivergenceError as exc:
            results.append(MutantResult(spec, None, skipped_reason=str(exc)))
    if all(r.model is None for r in results):
        raise AdequacyLabError("all mutant trainings failed")
    return results


def prediction_disagreement(preds_a: np.ndarray, preds_b: np.ndarray) -> float:
    """Fraction of positions where two prediction vectors differ."""
    preds_a = np.asarray(preds_a)
    preds_b = np.asarray(preds_b)
    if preds_a.shape != preds_b.shape:
        raise DomainError(f"prediction shapes differ: {preds_a.shape} vs {preds_b.shape}")
    if preds_a.size == 0:
        raise EmptyInputError("empty prediction vectors")
    return float(np.mean(preds_a != preds_b))


def mutation_score(original: TrainedModel, mutant: TrainedModel,
                   tests: LabeledDataset) -> float:
    """Disagreement rate between original and mutant on the test inputs."""
    return prediction_disagreement(predict(original, tests.inputs),
                                   predict(mutant, tests.inputs))


def catalogue_from_json(text: str) -> list[MutantSpec]:
    """Parse a JSON array of {operator, params, seed} objects."""
    raw = json.loads(text)
    if not isinstance(raw, list):
        raise DomainError("mutant catalogue must be a JSON array")
    return [MutantSpec(item["operator"], item.get("params", {}), item.get("seed", 0))
            for item in raw]


def default_catalogue(base_seed: int = 100) -> list[MutantSpec]:
    """Desk-scale catalogue covering all fifteen operators, plus stronger
    variants of the data corruptions so mutant severity spans a wide range."""
    specs = [
        MutantSpec("increase_batch", {"batch_size": 256}),
        MutantSpec("decrease_batch", {"batch_size": 4}),
        MutantSpec("decrease_lr", {"learning_rate": 1e-5}),
        MutantSpec("increase_lr", {"learning_rate": 0.5}),
        MutantSpec("change_optimizer", {"optimizer": "adagrad"}),
        MutantSpec("remove_zero_grad"),
        MutantSpec("remove_call"),
        MutantSpec("add_training_noise", {"fraction": 0.25}),
        MutantSpec("add_training_noise", {"fraction": 0.75}),
        MutantSpec("add_training_noise", {"fraction": 0.9}),
        MutantSpec("remove_samples", {"fraction": 0.25}),
        MutantSpec("remove_samples", {"fraction": 0.9}),
        MutantSpec("make_classes_overlap", {"fraction": 0.25}),
        MutantSpec("make_classes_overlap", {"fraction": 0.9}),
        MutantSpec("change_labels", {"percent": 25}),
        MutantSpec("change_labels", {"percent": 60}),
        MutantSpec("change_activation", {"activation": "sigmoid"}),
        MutantSpec("change_activation", {"activation": "tanh"}),
        MutantSpec("layer_size", {"scale": 0.25}),
        MutantSpec("remove_bias"),
        MutantSpec("add_dropout", {"rate": 0.25}),
        MutantSpec("add_dropout", {"rate": 0.8}),
    ]
    for i, spec in enumerate(specs):
        spec.seed = base_seed + 7 * i
    return specs
