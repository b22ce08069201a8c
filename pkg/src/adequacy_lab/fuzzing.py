"""Coverage-guided fuzzing for corner-case harvesting.

The loop starts from correctly-classified seed inputs, repeatedly applies
a randomly chosen input mutator, and keeps a mutated input (appends it to
the FIFO queue) only when it increases the active coverage criterion.
Mutated inputs the model mispredicts among those kept become corner
cases.  Three criteria are supported over per-neuron activations:

  nc    neuron covered when its per-layer min-max-scaled activation
        exceeds a threshold
  kmnc  per-neuron activation range (profiled on training data) split
        into k sections; a section is covered when hit
  nbc   neuron boundary coverage: activation beyond the profiled
        min/max by a margin of profiled std deviations

Corpus format: a JSON manifest (seed id, mutator chain, labels) plus a
binary matrix file of mutated inputs — magic "LCRP", u32 n, u32 d,
then n*d little-endian f32 values.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import refmodel
from .errors import DimensionMismatchError, DomainError, EmptyInputError, TraceFormatError
from .refmodel import LabeledDataset, TrainedModel
from .traces import TraceSet

CRITERIA = ("nc", "kmnc", "nbc")

MUTATORS = ("brightness_shift", "contrast_scale", "gaussian_noise",
            "box_blur", "occlusion", "pixel_shift")

_GRID_MUTATORS = {"box_blur", "occlusion", "pixel_shift"}


@dataclass
class CoverageConfig:
    criterion: str = "nc"
    nc_threshold: float = 0.75
    kmnc_sections: int = 100  # 1500 matches the large-model setting
    nbc_margin_multiplier: float = 10.0

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise DomainError(f"unknown coverage criterion {self.criterion!r}")
        if not (0.0 < self.nc_threshold < 1.0):
            raise DomainError(f"nc_threshold must be in (0, 1), got {self.nc_threshold}")
        if self.kmnc_sections < 2:
            raise DomainError(f"kmnc_sections must be >= 2, got {self.kmnc_sections}")
        if self.nbc_margin_multiplier < 0:
            raise DomainError("nbc_margin_multiplier must be non-negative")


@dataclass
class FuzzConfig:
    max_iterations: int = 2000  # 15000 matches the large-model setting
    mutator_set: list[str] | None = None
    rng_seed: int = 0
    per_seed_mutation_budget: int = 1

    def __post_init__(self):
        if self.max_iterations < 0:
            raise DomainError("max_iterations must be >= 0")
        if self.per_seed_mutation_budget < 1:
            raise DomainError("per_seed_mutation_budget must be >= 1")
        if self.mutator_set is not None:
            for m in self.mutator_set:
                if m not in MUTATORS:
                    raise DomainError(f"unknown mutator {m!r}")


@dataclass
class NeuronProfile:
    """Per-neuron training-set statistics, one array quadruple per layer."""
    mins: list[np.ndarray]
    maxs: list[np.ndarray]
    means: list[np.ndarray]
    stds: list[np.ndarray]

    @property
    def neuron_count(self) -> int:
        return sum(len(m) for m in self.mins)


def profile_neurons(model: TrainedModel, train: LabeledDataset) -> NeuronProfile:
    """Min/max/mean/std of every neuron's activation over the training inputs."""
    post, _, _ = refmodel._forward(model, train.inputs)
    return NeuronProfile(
        [a.min(axis=0) for a in post],
        [a.max(axis=0) for a in post],
        [a.mean(axis=0) for a in post],
        [a.std(axis=0) for a in post],
    )


class CoverageState:
    """Per-criterion activation bookkeeping; coverage is monotone under absorb."""

    def __init__(self, cfg: CoverageConfig, layer_sizes: list[int],
                 profile: NeuronProfile | None = None):
        self.cfg = cfg
        self.layer_sizes = list(layer_sizes)
        self.profile = profile
        if cfg.criterion in ("kmnc", "nbc") and profile is None:
            raise DomainError(f"{cfg.criterion} requires a neuron profile")
        if cfg.criterion == "nc":
            self._nc = [np.zeros(s, dtype=bool) for s in layer_sizes]
        elif cfg.criterion == "kmnc":
            self._kmnc = [np.zeros((s, cfg.kmnc_sections), dtype=bool)
                          for s in layer_sizes]
        else:
            self._nbc_hi = [np.zeros(s, dtype=bool) for s in layer_sizes]
            self._nbc_lo = [np.zeros(s, dtype=bool) for s in layer_sizes]

    @property
    def total_units(self) -> int:
        n = sum(self.layer_sizes)
        if self.cfg.criterion == "kmnc":
            return n * self.cfg.kmnc_sections
        if self.cfg.criterion == "nbc":
            return 2 * n
        return n

    def covered_units(self) -> int:
        if self.cfg.criterion == "nc":
            return int(sum(b.sum() for b in self._nc))
        if self.cfg.criterion == "kmnc":
            return int(sum(b.sum() for b in self._kmnc))
        return int(sum(b.sum() for b in self._nbc_hi)
                   + sum(b.sum() for b in self._nbc_lo))

    def coverage(self) -> float:
        return self.covered_units() / self.total_units

    def _check_dims(self, activations):
        if len(activations) != len(self.layer_sizes):
            raise DimensionMismatchError(len(self.layer_sizes), len(activations),
                                         "layer count")
        for a, s in zip(activations, self.layer_sizes):
            if a.shape[0] != s:
                raise DimensionMismatchError(s, a.shape[0], "layer width")

    def absorb(self, activations: list[np.ndarray]) -> bool:
        """Fold one input's per-layer activations in; True when new units covered."""
        self._check_dims(activations)
        gained = False
        cfg = self.cfg
        for li, a in enumerate(activations):
            if cfg.criterion == "nc":
                lo, hi = a.min(), a.max()
                scaled = (a - lo) / (hi - lo) if hi > lo else np.zeros_like(a)
                new = (scaled > cfg.nc_threshold) & ~self._nc[li]
                if new.any():
                    self._nc[li][new] = True
                    gained = True
            elif cfg.criterion == "kmnc":
                low = self.profile.mins[li]
                high = self.profile.maxs[li]
                span = high - low
                with np.errstate(divide="ignore", invalid="ignore"):
                    sec = np.floor((a - low) / span * cfg.kmnc_sections)
                sec = np.where(np.isfinite(sec), sec, 0.0)
                sec = np.clip(sec, 0, cfg.kmnc_sections - 1).astype(np.int64)
                for ni, s in enumerate(sec):
                    if not self._kmnc[li][ni, s]:
                        self._kmnc[li][ni, s] = True
                        gained = True
            else:  # nbc
                margin = cfg.nbc_margin_multiplier * self.profile.stds[li]
                hi_new = (a > self.profile.maxs[li] + margin) & ~self._nbc_hi[li]
                lo_new = (a < self.profile.mins[li] - margin) & ~self._nbc_lo[li]
                if hi_new.any():
                    self._nbc_hi[li][hi_new] = True
                    gained = True
                if lo_new.any():
                    self._nbc_lo[li][lo_new] = True
                    gained = True
        return gained


def coverage_gain(state: CoverageState, activations: list[np.ndarray]):
    """Absorb one input; returns (gained, state) with the state updated in place."""
    return state.absorb(activations), state


# ---------------------------------------------------------------------------
# input mutators

def _require_grid(x, grid_shape, mutator):
    if grid_shape is not None:
        rows, cols = grid_shape
        if rows * cols != x.shape[0]:
            raise DimensionMismatchError(rows * cols, x.shape[0], f"{mutator} grid")
        return rows, cols
    side = int(round(np.sqrt(x.shape[0])))
    if side * side != x.shape[0]:
        raise DomainError(f"{mutator} needs a grid-shaped input, got length {x.shape[0]}")
    return side, side


def mutate_input(x, mutator: str, rng: np.random.Generator,
                 params: dict | None = None, grid_shape=None) -> np.ndarray:
    """Apply one named mutator; output clipped to [0, 1].

    Unset parameters are drawn from bounded ranges: brightness delta in
    [-0.3, 0.3], contrast gamma in [0.5, 1.8], noise sigma in [0.02, 0.15],
    occlusion covering at most 25% of the input.
    """
    x = np.asarray(x, dtype=np.float64)
    params = dict(params or {})
    if mutator not in MUTATORS:
        raise DomainError(f"unknown mutator {mutator!r}")

    def draw(name, sample):
        # only consume rng draws for parameters that were not given explicitly
        return params[name] if name in params else sample()

    if mutator == "brightness_shift":
        delta = draw("delta", lambda: rng.uniform(-0.3, 0.3))
        out = x + delta
    elif mutator == "contrast_scale":
        gamma = draw("gamma", lambda: rng.uniform(0.5, 1.8))
        out = 0.5 + gamma * (x - 0.5)
    elif mutator == "gaussian_noise":
        sigma = draw("sigma", lambda: rng.uniform(0.02, 0.15))
        out = x + rng.normal(0.0, sigma, size=x.shape)
    elif mutator == "box_blur":
        rows, cols = _require_grid(x, grid_shape, mutator)
        img = x.reshape(rows, cols)
        padded = np.pad(img, 1, mode="edge")
        out = np.zeros_like(img)
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                out += padded[1 + dr:1 + dr + rows, 1 + dc:1 + dc + cols]
        out = (out / 9.0).reshape(-1)
    elif mutator == "occlusion":
        rows, cols = _require_grid(x, grid_shape, mutator)
        h = draw("height", lambda: int(rng.integers(1, max(2, rows // 2 + 1))))
        w = draw("width", lambda: int(rng.integers(1, max(2, cols // 2 + 1))))
        r0 = draw("row", lambda: int(rng.integers(0, rows - h + 1)))
        c0 = draw("col", lambda: int(rng.integers(0, cols - w + 1)))
        img = x.reshape(rows, cols).copy()
        img[r0:r0 + h, c0:c0 + w] = 0.0
        out = img.reshape(-1)
    else:  # pixel_shift
        rows, cols = _require_grid(x, grid_shape, mutator)
        direction = draw("direction", lambda: ("up", "down", "left", "right")[
            int(rng.integers(0, 4))])
        img = x.reshape(rows, cols)
        shifted = np.zeros_like(img)
        if direction == "up":
            shifted[:-1] = img[1:]
        elif direction == "down":
            shifted[1:] = img[:-1]
        elif direction == "left":
            shifted[:, :-1] = img[:, 1:]
        else:
            shifted[:, 1:] = img[:, :-1]
        out = shifted.reshape(-1)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# fuzz loop

@dataclass
class CornerCaseItem:
    input: np.ndarray
    seed_id: int
    mutator_chain: tuple[str, ...]
    ground_truth: int
    predicted: int


@dataclass
class CornerCaseCorpus:
    items: list[CornerCaseItem]
    traces: TraceSet | None = None
    queue_discipline: str = "fifo_cycling"

    def to_dataset(self, class_count: int) -> LabeledDataset:
        if not self.items:
            raise EmptyInputError("empty corner-case corpus")
        inputs = np.stack([it.input for it in self.items])
        labels = np.array([it.ground_truth for it in self.items], dtype=np.int64)
        return LabeledDataset(inputs, labels, class_count)


@dataclass
class _QueueEntry:
    input: np.ndarray
    seed_id: int
    chain: tuple[str, ...]


def fuzz(model: TrainedModel, seeds: LabeledDataset, cov_cfg: CoverageConfig,
         fuzz_cfg: FuzzConfig, grid_shape=None):
    """Run the fuzz loop; returns (CornerCaseCorpus, per-iteration coverage history).

    Queue discipline: FIFO cycling over the correctly-classified seeds, with
    coverage-gaining mutants appended.  Deterministic given fuzz_cfg.rng_seed.
    """
    preds = refmodel.predict(model, seeds.inputs)
    correct = np.flatnonzero(preds == seeds.labels)
    if len(correct) == 0:
        raise EmptyInputError("no correctly-classified seed inputs")

    mutators = fuzz_cfg.mutator_set
    if mutators is None:
        d = seeds.inputs.shape[1]
        side = int(round(np.sqrt(d)))
        grid_ok = grid_shape is not None or side * side == d and d >= 9
        mutators = list(MUTATORS) if grid_ok else [
            "brightness_shift", "contrast_scale", "gaussian_noise"]

    profile = None
    if cov_cfg.criterion in ("kmnc", "nbc"):
        profile = profile_neurons(model, seeds)
    layer_sizes = model.config.layer_sizes[1:]
    state = CoverageState(cov_cfg, layer_sizes, profile)

    queue = []
    for i in correct:
        x = seeds.inputs[i]
        post, _, _ = refmodel._forward(model, x.reshape(1, -1))
        state.absorb([a[0] for a in post])
        queue.append(_QueueEntry(x, int(i), ()))

    rng = np.random.default_rng(fuzz_cfg.rng_seed)
    history = [state.coverage()]
    corner: list[CornerCaseItem] = []
    iterations = 0
    pos = 0
    while iterations < fuzz_cfg.max_iterations:
        entry = queue[pos % len(queue)]
        pos += 1
        for _ in range(fuzz_cfg.per_seed_mutation_budget):
            if iterations >= fuzz_cfg.max_iterations:
                break
            iterations += 1
            mutator = mutators[int(rng.integers(0, len(mutators)))]
            mutated = mutate_input(entry.input, mutator, rng, grid_shape=grid_shape)
            post, _, _ = refmodel._forward(model, mutated.reshape(1, -1))
            acts = [a[0] for a in post]
            gained = state.absorb(acts)
            history.append(state.coverage())
            if gained:
                chain = entry.chain + (mutator,)
                queue.append(_QueueEntry(mutated, entry.seed_id, chain))
                predicted = int(np.argmax(acts[-1]))
                truth = int(seeds.labels[entry.seed_id])
                if predicted != truth:
                    corner.append(CornerCaseItem(mutated, entry.seed_id, chain,
                                                 truth, predicted))

    corpus = CornerCaseCorpus(corner)
    if corner:
        corpus.traces = refmodel.extract_traces(
            model, corpus.to_dataset(seeds.class_count), "corner_case")
    return corpus, history


# ---------------------------------------------------------------------------
# corpus persistence

CORPUS_MAGIC = b"LCRP"


def write_corpus(corpus: CornerCaseCorpus) -> tuple[str, bytes]:
    """Serialize to (JSON manifest, binary input matrix)."""
    if not corpus.items:
        raise EmptyInputError("empty corner-case corpus")
    manifest = {
        "queue_discipline": corpus.queue_discipline,
        "items": [
            {"seed_id": it.seed_id, "mutator_chain": list(it.mutator_chain),
             "ground_truth": it.ground_truth, "predicted": it.predicted}
            for it in corpus.items
        ],
    }
    inputs = np.stack([it.input for it in corpus.items]).astype("<f4")
    blob = (CORPUS_MAGIC + struct.pack("<II", inputs.shape[0], inputs.shape[1])
            + inputs.tobytes())
    return json.dumps(manifest, indent=2, sort_keys=True), blob


def read_corpus(manifest_text: str, blob: bytes) -> CornerCaseCorpus:
    if blob[:4] != CORPUS_MAGIC:
        raise TraceFormatError(f"bad corpus magic {blob[:4]!r}", offset=0)
    n, d = struct.unpack_from("<II", blob, 4)
    expected = 12 + 4 * n * d
    if len(blob) < expected:
        raise TraceFormatError(f"corpus blob truncated: {len(blob)} < {expected}",
                               offset=len(blob))
    inputs = np.frombuffer(blob, dtype="<f4", count=n * d,
                           offset=12).astype(np.float64).reshape(n, d)
    manifest = json.loads(manifest_text)
    items = [
        CornerCaseItem(inputs[i], m["seed_id"], tuple(m["mutator_chain"]),
                       m["ground_truth"], m["predicted"])
        for i, m in enumerate(manifest["items"])
    ]
    return CornerCaseCorpus(items, queue_discipline=manifest.get(
        "queue_discipline", "fifo_cycling"))
