"""Latent-space trace data model and its binary / CSV file formats.

A trace pairs one latent vector (the logit-layer activations of a model
for one input) with the ground-truth and predicted class labels.  Trace
sets are the currency every metric module consumes.

Binary format "LSTR" (little-endian):
  bytes 0-3   ASCII magic "LSTR"
  byte  4     version 0x01
  bytes 5-8   u32 record count n
  bytes 9-12  u32 latent_dim d
  bytes 13-16 u32 class_count
  byte  17    split tag (0=train, 1=validation, 2=test, 3=corner_case)
  bytes 18-20 reserved, zero
  n records:  u32 input_id, u32 ground_truth, u32 predicted, d x f32 latent

CSV format: header ``id,ground_truth,predicted,z0,...,z{d-1}``, one row per
trace; split tag and class count are supplied out of band (CLI flags).

Latent values are stored as f32 on disk and widened to f64 in memory so
metric computations are deterministic.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagicError,
    EmptyTraceSetError,
    InconsistentDimensionError,
    LabelRangeError,
    TraceFormatError,
    TruncatedStreamError,
)

MAGIC = b"LSTR"
VERSION = 1
HEADER_SIZE = 21

SPLIT_TAGS = ("train", "validation", "test", "corner_case")
_SPLIT_CODE = {name: i for i, name in enumerate(SPLIT_TAGS)}


@dataclass(frozen=True)
class LatentTrace:
    input_id: int
    ground_truth: int
    predicted: int
    latent: np.ndarray  # float64, shape (latent_dim,)


@dataclass
class TraceSet:
    split_tag: str
    class_count: int
    latent_dim: int
    traces: list[LatentTrace] = field(default_factory=list)

    def __post_init__(self):
        if self.split_tag not in SPLIT_TAGS:
            raise TraceFormatError(f"unknown split tag {self.split_tag!r}")
        if self.class_count <= 0:
            raise TraceFormatError(f"class_count must be positive, got {self.class_count}")
        if self.latent_dim <= 0:
            raise TraceFormatError(f"latent_dim must be positive, got {self.latent_dim}")
        if not self.traces:
            raise EmptyTraceSetError("empty trace set")
        for t in self.traces:
            if t.latent.shape != (self.latent_dim,):
                raise InconsistentDimensionError(
                    f"trace {t.input_id}: latent dim {t.latent.shape[0]} != {self.latent_dim}")
            if not (0 <= t.ground_truth < self.class_count):
                raise LabelRangeError(
                    f"trace {t.input_id}: ground_truth {t.ground_truth} out of range "
                    f"[0, {self.class_count})")
            if not (0 <= t.predicted < self.class_count):
                raise LabelRangeError(
                    f"trace {t.input_id}: predicted {t.predicted} out of range "
                    f"[0, {self.class_count})")

    def __len__(self):
        return len(self.traces)

    def latent_matrix(self) -> np.ndarray:
        """All latent vectors stacked as an (n, latent_dim) float64 matrix."""
        return np.stack([t.latent for t in self.traces])

    def labels(self, by: str = "ground_truth") -> np.ndarray:
        if by not in ("ground_truth", "predicted"):
            raise ValueError(f"unknown grouping key {by!r}")
        return np.array([getattr(t, by) for t in self.traces], dtype=np.int64)


def from_arrays(split_tag: str, class_count: int, latents: np.ndarray,
                ground_truth, predicted, input_ids=None) -> TraceSet:
    """Build a TraceSet from parallel arrays (the common construction path)."""
    latents = np.asarray(latents, dtype=np.float64)
    n, d = latents.shape
    if input_ids is None:
        input_ids = range(n)
    traces = [
        LatentTrace(int(i), int(g), int(p), latents[j])
        for j, (i, g, p) in enumerate(zip(input_ids, ground_truth, predicted))
    ]
    return TraceSet(split_tag, class_count, d, traces)


def group_by_class(trace_set: TraceSet, by: str = "ground_truth") -> dict[int, list[int]]:
    """Partition trace indices by class label; absent classes map to empty lists."""
    groups: dict[int, list[int]] = {c: [] for c in range(trace_set.class_count)}
    labels = trace_set.labels(by)
    for i, c in enumerate(labels):
        groups[int(c)].append(i)
    return groups


def write_traces(trace_set: TraceSet, fmt: str = "binary") -> bytes:
    """Serialize a TraceSet; deterministic bytes for identical input."""
    if fmt == "binary":
        return _write_binary(trace_set)
    if fmt == "csv":
        return _write_csv(trace_set)
    raise ValueError(f"unknown format {fmt!r}")


def read_traces(data: bytes, fmt: str = "binary", *,
                split_tag: str = "test", class_count: int | None = None) -> TraceSet:
    """Parse a TraceSet from bytes.

    For CSV input the split tag and class count are not self-describing and
    must be passed explicitly (class_count defaults to max label + 1).
    """
    if fmt == "binary":
        return _read_binary(data)
    if fmt == "csv":
        return _read_csv(data, split_tag=split_tag, class_count=class_count)
    raise ValueError(f"unknown format {fmt!r}")


def _write_binary(ts: TraceSet) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<B", VERSION))
    buf.write(struct.pack("<III", len(ts.traces), ts.latent_dim, ts.class_count))
    buf.write(struct.pack("<B", _SPLIT_CODE[ts.split_tag]))
    buf.write(b"\x00\x00\x00")
    for t in ts.traces:
        buf.write(struct.pack("<III", t.input_id, t.ground_truth, t.predicted))
        buf.write(t.latent.astype("<f4").tobytes())
    return buf.getvalue()


def _read_binary(data: bytes) -> TraceSet:
    if len(data) < HEADER_SIZE:
        raise TruncatedStreamError(
            f"header needs {HEADER_SIZE} bytes, stream has {len(data)}", offset=len(data))
    if data[:4] != MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}, expected {MAGIC!r}", offset=0)
    version = data[4]
    if version != VERSION:
        raise BadMagicError(f"unsupported version {version}", offset=4)
    n, d, class_count = struct.unpack_from("<III", data, 5)
    split_code = data[17]
    if split_code >= len(SPLIT_TAGS):
        raise TraceFormatError(f"unknown split code {split_code}", offset=17)
    if n == 0:
        raise EmptyTraceSetError("empty trace set", offset=5)
    if d == 0:
        raise InconsistentDimensionError("latent_dim is zero", offset=9)
    record_size = 12 + 4 * d
    expected = HEADER_SIZE + n * record_size
    if len(data) < expected:
        raise TruncatedStreamError(
            f"expected {expected} bytes for {n} records, stream has {len(data)}",
            offset=len(data))
    traces = []
    off = HEADER_SIZE
    for _ in range(n):
        input_id, gt, pred = struct.unpack_from("<III", data, off)
        if gt >= class_count:
            raise LabelRangeError(
                f"ground_truth {gt} out of range [0, {class_count})", offset=off + 4)
        if pred >= class_count:
            raise LabelRangeError(
                f"predicted {pred} out of range [0, {class_count})", offset=off + 8)
        latent = np.frombuffer(data, dtype="<f4", count=d, offset=off + 12).astype(np.float64)
        traces.append(LatentTrace(input_id, gt, pred, latent))
        off += record_size
    return TraceSet(SPLIT_TAGS[split_code], int(class_count), int(d), traces)


def _write_csv(ts: TraceSet) -> bytes:
    lines = ["id,ground_truth,predicted," + ",".join(f"z{i}" for i in range(ts.latent_dim))]
    for t in ts.traces:
        vals = ",".join(format(v, ".9g") for v in t.latent)
        lines.append(f"{t.input_id},{t.ground_truth},{t.predicted},{vals}")
    return ("\n".join(lines) + "\n").encode("ascii")


def _read_csv(data: bytes, *, split_tag: str, class_count: int | None) -> TraceSet:
    text = data.decode("utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise EmptyTraceSetError("empty trace set", line=1)
    header = lines[0].split(",")
    if header[:3] != ["id", "ground_truth", "predicted"]:
        raise BadMagicError(f"unexpected CSV header {lines[0]!r}", line=1)
    d = len(header) - 3
    if d <= 0 or header[3:] != [f"z{i}" for i in range(d)]:
        raise BadMagicError(f"unexpected latent columns in header {lines[0]!r}", line=1)
    if len(lines) == 1:
        raise EmptyTraceSetError("empty trace set", line=2)
    traces = []
    max_label = -1
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != 3 + d:
            raise InconsistentDimensionError(
                f"row has {len(parts) - 3} latent values, header declares {d}", line=lineno)
        try:
            input_id, gt, pred = int(parts[0]), int(parts[1]), int(parts[2])
            latent = np.array([float(v) for v in parts[3:]], dtype=np.float64)
        except ValueError as exc:
            raise TraceFormatError(f"unparseable row: {exc}", line=lineno) from None
        max_label = max(max_label, gt, pred)
        traces.append(LatentTrace(input_id, gt, pred, latent))
    cc = class_count if class_count is not None else max_label + 1
    if max_label >= cc:
        raise LabelRangeError(f"label {max_label} out of range [0, {cc})", line=2)
    return TraceSet(split_tag, cc, d, traces)
