"""Latent-space test adequacy metrics: class dispersion and surprise coverage.

Class dispersion (per class): mean Euclidean distance of a split's latent
vectors from their ground-truth class centroid, the centroid being the
component-wise mean of the *training* split's latent vectors for that
class.  The aggregate is the mean over the classes actually evaluated.

Surprise coverage: for each evaluated input, the surprise ratio
dist_a / dist_b, where dist_a is the distance to the nearest training
latent vector sharing the input's *predicted* class, and dist_b is the
distance from that neighbor to its nearest training vector of any other
predicted class.  Coverage buckets the ratios into k segments of (0, U]
and reports the fraction of segments hit.

The serial and parallel surprise paths produce bit-identical results: the
per-query scan is the same code, ties break on the lowest training index,
and parallel merging is keyed by input index.
"""

from __future__ import annotations

import math
import multiprocessing
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateDataError,
    DimensionMismatchError,
    DomainError,
    EmptyInputError,
)
from .numkit import distances_to
from .traces import TraceSet, group_by_class


# ---------------------------------------------------------------------------
# class dispersion

@dataclass
class CentroidTable:
    centroids: dict[int, np.ndarray]
    class_counts: dict[int, int]
    source_split: str
    latent_dim: int


@dataclass
class DispersionReport:
    per_class: dict[int, float]
    aggregate: float
    skipped_classes: list[int]
    wall_time_ms: float | None = None

    def to_json(self) -> dict:
        return {
            "metric": "lscd",
            "per_class": {str(c): v for c, v in sorted(self.per_class.items())},
            "aggregate": self.aggregate,
            "skipped_classes": self.skipped_classes,
            "wall_time_ms": self.wall_time_ms,
        }


def compute_centroids(train: TraceSet) -> CentroidTable:
    """Per-class mean latent vector over the training split (ground-truth grouping)."""
    if train.split_tag != "train":
        raise DomainError(f"centroids must come from a train split, got {train.split_tag!r}")
    groups = group_by_class(train, "ground_truth")
    latents = train.latent_matrix()
    centroids, counts = {}, {}
    for c, idx in groups.items():
        if not idx:
            warnings.warn(f"class {c} has no training members; no centroid recorded")
            continue
        centroids[c] = latents[idx].mean(axis=0)
        counts[c] = len(idx)
    return CentroidTable(centroids, counts, train.split_tag, train.latent_dim)


def lscd_per_class(data: TraceSet, centroids: CentroidTable) -> DispersionReport:
    """Mean centroid distance per class, aggregated over the classes evaluated.

    Classes absent from the data or lacking a centroid are skipped and listed.
    """
    if data.latent_dim != centroids.latent_dim:
        raise DimensionMismatchError(centroids.latent_dim, data.latent_dim, "lscd")
    groups = group_by_class(data, "ground_truth")
    latents = data.latent_matrix()
    per_class: dict[int, float] = {}
    skipped: list[int] = []
    for c in range(data.class_count):
        idx = groups.get(c, [])
        if not idx or c not in centroids.centroids:
            skipped.append(c)
            continue
        per_class[c] = float(np.mean(distances_to(centroids.centroids[c], latents[idx])))
    if not per_class:
        raise EmptyInputError("no class overlaps between data and centroid table")
    aggregate = float(np.mean(list(per_class.values())))
    return DispersionReport(per_class, aggregate, skipped)


# ---------------------------------------------------------------------------
# surprise adequacy / coverage

@dataclass
class DscConfig:
    bucket_count: int = 1000
    upper_bound: float | None = None  # None means "max finite ratio observed"
    neighbor_class_source: str = "predicted"

    def __post_init__(self):
        if self.bucket_count < 1:
            raise DomainError(f"bucket_count must be >= 1, got {self.bucket_count}")
        if self.upper_bound is not None and self.upper_bound <= 0:
            raise DomainError(f"upper_bound must be positive, got {self.upper_bound}")
        if self.neighbor_class_source != "predicted":
            raise DomainError("neighbor grouping is fixed to the predicted class")


@dataclass
class DscReport:
    coverage: float
    bucket_count: int
    upper_bound: float
    hit_buckets: list[int]
    per_input_dsa: list[float | None]
    overflow_count: int
    zero_count: int
    excluded: list[tuple[int, str]]
    neighbor_class_source: str = "predicted"
    wall_time_ms: float | None = None

    def to_json(self) -> dict:
        return {
            "metric": "dsc",
            "config": {"bucket_count": self.bucket_count,
                       "upper_bound": self.upper_bound,
                       "neighbor_class_source": self.neighbor_class_source},
            "coverage": self.coverage,
            "hit_buckets": self.hit_buckets,
            "overflow_count": self.overflow_count,
            "zero_count": self.zero_count,
            "excluded_count": len(self.excluded),
            "wall_time_ms": self.wall_time_ms,
        }


class TrainIndex:
    """Training latents grouped by predicted class for the exhaustive scans.

    Index arrays are sorted ascending so a first-minimum argmin over a
    subset still breaks ties by the lowest original training index.
    """

    def __init__(self, train: TraceSet):
        self.latent_dim = train.latent_dim
        self.latents = train.latent_matrix()
        preds = train.labels("predicted")
        self.same_idx: dict[int, np.ndarray] = {}
        self.other_idx: dict[int, np.ndarray] = {}
        self.same_mat: dict[int, np.ndarray] = {}
        self.other_mat: dict[int, np.ndarray] = {}
        for c in range(train.class_count):
            same = np.flatnonzero(preds == c)
            other = np.flatnonzero(preds != c)
            self.same_idx[c] = same
            self.other_idx[c] = other
            self.same_mat[c] = self.latents[same]
            self.other_mat[c] = self.latents[other]


def _dsa_pair(latent: np.ndarray, same: np.ndarray, other: np.ndarray):
    """Surprise ratio from class partitions; returns (value, reason)."""
    if same.shape[0] == 0:
        return None, "no training members in predicted class"
    if other.shape[0] == 0:
        return None, "no training members outside predicted class"
    d_same = distances_to(latent, same)
    a_pos = int(np.argmin(d_same))
    dist_a = float(d_same[a_pos])
    x_a = same[a_pos]
    d_other = distances_to(x_a, other)
    b_pos = int(np.argmin(d_other))
    dist_b = float(d_other[b_pos])
    if dist_b == 0.0:
        raise DegenerateDataError(
            "degenerate inter-class distance: duplicate latent vector across classes")
    return dist_a / dist_b, None


def _dsa_one(index: TrainIndex, latent: np.ndarray, predicted: int):
    """Surprise ratio for one input; returns (value, reason) with one of them None."""
    same = index.same_mat.get(predicted)
    if same is None:
        return None, "no training members in predicted class"
    return _dsa_pair(latent, same, index.other_mat[predicted])


def dsa(trace, train: TraceSet) -> float:
    """Surprise ratio of a single trace against the training split."""
    index = TrainIndex(train)
    value, reason = _dsa_one(index, np.asarray(trace.latent, dtype=np.float64),
                             trace.predicted)
    if value is None:
        raise EmptyInputError(reason)
    return value


@dataclass
class DsaResult:
    values: list[float | None]  # None where excluded
    excluded: list[tuple[int, str]] = field(default_factory=list)


def dsa_all(data: TraceSet, train: TraceSet) -> DsaResult:
    """Straightforward serial scan: each input re-selects its class partitions.

    This is the reference implementation; `dsa_all_parallel` computes the
    partitioned training matrices once up front and reuses scratch buffers,
    producing bit-identical values faster.
    """
    if data.latent_dim != train.latent_dim:
        raise DimensionMismatchError(train.latent_dim, data.latent_dim, "dsa")
    train_latents = train.latent_matrix()
    train_preds = train.labels("predicted")
    latents = data.latent_matrix()
    preds = data.labels("predicted")
    values: list[float | None] = []
    excluded: list[tuple[int, str]] = []
    for i in range(len(data)):
        c = int(preds[i])
        same = train_latents[train_preds == c]
        other = train_latents[train_preds != c]
        value, reason = _dsa_pair(latents[i], same, other)
        values.append(value)
        if reason is not None:
            excluded.append((i, reason))
    return DsaResult(values, excluded)


# worker-side state for the fork-based parallel path
_PARALLEL_STATE: dict = {}


def _nearest_exact(query: np.ndarray, matrix: np.ndarray, sq_norms: np.ndarray):
    """First-minimum nearest row, bit-identical to an exhaustive scan.

    A squared-distance prefilter computed with precalculated norms and a
    matrix product narrows the search to rows within a margin of the
    minimum; the exact per-row distance (same formula as distances_to) is
    then evaluated only on those candidates.  The margin exceeds the
    prefilter's rounding error by several orders of magnitude, so the true
    nearest row — and every row tied with it — is always among the
    candidates, preserving the lowest-index tie-break and the exact float.
    """
    q_sq = float(query @ query)
    d2 = sq_norms - 2.0 * (matrix @ query)
    lo = d2.min()
    margin = 1e-7 * (1.0 + q_sq + float(sq_norms.max()))
    cand = np.flatnonzero(d2 <= lo + margin)
    exact = distances_to(query, matrix[cand])
    rel = int(np.argmin(exact))
    return int(cand[rel]), float(exact[rel])


def _parallel_worker(chunk):
    index = _PARALLEL_STATE["index"]
    latents = _PARALLEL_STATE["latents"]
    preds = _PARALLEL_STATE["preds"]
    same_sq = {c: np.einsum("ij,ij->i", m, m)
               for c, m in index.same_mat.items() if m.shape[0]}
    other_sq = {c: np.einsum("ij,ij->i", m, m)
                for c, m in index.other_mat.items() if m.shape[0]}
    # dist_b depends only on the chosen training neighbor, so inputs that
    # share a neighbor reuse the stored value (identical float, computed once)
    dist_b_memo: dict[tuple[int, int], float] = {}
    results = []
    for i in chunk:
        c = int(preds[i])
        same = index.same_mat.get(c)
        if same is None or same.shape[0] == 0:
            results.append((i, (None, "no training members in predicted class")))
            continue
        other = index.other_mat[c]
        if other.shape[0] == 0:
            results.append((i, (None,
                                "no training members outside predicted class")))
            continue
        a_pos, dist_a = _nearest_exact(latents[i], same, same_sq[c])
        dist_b = dist_b_memo.get((c, a_pos))
        if dist_b is None:
            _, dist_b = _nearest_exact(same[a_pos], other, other_sq[c])
            dist_b_memo[(c, a_pos)] = dist_b
        if dist_b == 0.0:
            raise DegenerateDataError("degenerate inter-class distance: "
                                      "duplicate latent vector across classes")
        results.append((i, (dist_a / dist_b, None)))
    return results


def dsa_all_parallel(data: TraceSet, train: TraceSet, worker_count: int) -> DsaResult:
    """Parallel per-input scan; bit-identical to dsa_all for any worker count."""
    if worker_count < 1:
        raise DomainError(f"worker_count must be >= 1, got {worker_count}")
    if worker_count == 1:
        return dsa_all(data, train)
    if data.latent_dim != train.latent_dim:
        raise DimensionMismatchError(train.latent_dim, data.latent_dim, "dsa")

    _PARALLEL_STATE["index"] = TrainIndex(train)
    _PARALLEL_STATE["latents"] = data.latent_matrix()
    _PARALLEL_STATE["preds"] = data.labels("predicted")
    try:
        n = len(data)
        chunks = [list(range(w, n, worker_count)) for w in range(worker_count)]
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(processes=worker_count) as pool:
            results = pool.map(_parallel_worker, chunks)
    finally:
        _PARALLEL_STATE.clear()

    values: list[float | None] = [None] * n
    excluded: list[tuple[int, str]] = []
    for batch in results:
        for i, (value, reason) in batch:
            values[i] = value
            if reason is not None:
                excluded.append((i, reason))
    excluded.sort()
    return DsaResult(values, excluded)


def bucket_dsa(values, excluded, cfg: DscConfig) -> DscReport:
    """Bucket precomputed surprise ratios into k segments of (0, U]."""
    finite = [v for v in values if v is not None]
    if not finite:
        raise EmptyInputError("no computable surprise ratios in the evaluation set")
    k = cfg.bucket_count
    if cfg.upper_bound is not None:
        upper = cfg.upper_bound
    else:
        positive = [v for v in finite if v > 0.0]
        upper = max(positive) if positive else 1.0
    hit: set[int] = set()
    overflow = 0
    zeros = 0
    for v in finite:
        if v <= 0.0:
            zeros += 1
            continue
        if v > upper:
            overflow += 1
            continue
        b = min(k, max(1, math.ceil(v * k / upper)))
        # guard the half-open lower edge: v must exceed U*(b-1)/k
        while b > 1 and v <= upper * (b - 1) / k:
            b -= 1
        hit.add(b)
    return DscReport(
        coverage=len(hit) / k,
        bucket_count=k,
        upper_bound=upper,
        hit_buckets=sorted(hit),
        per_input_dsa=list(values),
        overflow_count=overflow,
        zero_count=zeros,
        excluded=list(excluded),
    )


def dsc_coverage(data: TraceSet, train: TraceSet, cfg: DscConfig) -> DscReport:
    """Serial surprise coverage over an evaluation split."""
    result = dsa_all(data, train)
    return bucket_dsa(result.values, result.excluded, cfg)


def dsc_parallel(data: TraceSet, train: TraceSet, cfg: DscConfig,
                 worker_count: int) -> DscReport:
    """Parallel surprise coverage; identical output to dsc_coverage."""
    result = dsa_all_parallel(data, train, worker_count)
    return bucket_dsa(result.values, result.excluded, cfg)
