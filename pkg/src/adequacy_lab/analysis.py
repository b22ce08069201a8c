"""Evaluation apparatus: correlation study, bucket-size sweep, timing bench,
and report rendering.

Pearson correlation carries an exact two-sided Student-t p-value computed
through the regularized incomplete beta function; results are flagged
significant at p < 0.05.  Surprise-coverage correlations are averaged
over a bucket-count sweep (the per-input ratios are computed once and
re-bucketed per k).  The timing bench compares single-thread dispersion
against single- and multi-thread surprise coverage on pre-loaded traces,
reporting the median of repeated runs after a discarded warm-up.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import adequacy
from .errors import DimensionMismatchError, DomainError, EmptyInputError
from .numkit import reg_incomplete_beta
from .traces import TraceSet


@dataclass
class StudyRecord:
    mutant_id: str
    accuracy: float
    dsc: float
    lscd: float
    mutation_score: float
    dsc_by_k: dict[int, float] | None = None

    def to_json(self) -> dict:
        out = {"mutant_id": self.mutant_id, "accuracy": self.accuracy,
               "dsc": self.dsc, "lscd": self.lscd,
               "mutation_score": self.mutation_score}
        if self.dsc_by_k is not None:
            out["dsc_by_k"] = {str(k): v for k, v in sorted(self.dsc_by_k.items())}
        return out


@dataclass
class CorrelationResult:
    pair: str
    r: float
    p_value: float
    n: int

    @property
    def significant(self) -> bool:
        return self.p_value < 0.05

    def to_json(self) -> dict:
        return {"pair": self.pair, "r": self.r, "p_value": self.p_value,
                "n": self.n, "significant": self.significant}


@dataclass
class TimingRecord:
    metric: str
    mode: str
    worker_count: int
    n_train: int
    n_eval: int
    latent_dim: int
    wall_time_ms: float

    def to_json(self) -> dict:
        return {"metric": self.metric, "mode": self.mode,
                "worker_count": self.worker_count, "n_train": self.n_train,
                "n_eval": self.n_eval, "latent_dim": self.latent_dim,
                "wall_time_ms": self.wall_time_ms}


def _is_collinear(x: np.ndarray, y: np.ndarray) -> bool:
    """True when every point lies exactly on one line (float-exact test)."""
    dx = x - x[0]
    dy = y - y[0]
    nz = np.flatnonzero((dx != 0.0) | (dy != 0.0))
    if nz.size == 0:
        return False
    k = nz[0]
    return bool(np.all(dx * dy[k] == dy * dx[k]))


def pearson(xs, ys, pair: str = "") -> CorrelationResult:
    """Sample Pearson r with an exact two-sided Student-t p-value."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionMismatchError(x.shape, y.shape, "pearson series")
    n = x.shape[0]
    if n < 3:
        raise EmptyInputError(f"pearson needs n >= 3, got {n}")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = math.sqrt(float(xc @ xc))
    sy = math.sqrt(float(yc @ yc))
    if sx == 0.0 or sy == 0.0:
        raise DomainError("undefined correlation: constant series")
    r = float(xc @ yc) / (sx * sy)
    r = max(-1.0, min(1.0, r))
    # exactly collinear series must give r = +/-1 despite rounding in the
    # products above; detect collinearity with exact cross-difference tests
    if abs(r) != 1.0 and _is_collinear(x, y):
        r = 1.0 if r > 0 else -1.0
    p = p_value_for_r(r, n)
    return CorrelationResult(pair, r, p, n)


def p_value_for_r(r: float, n: int) -> float:
    """Two-sided p from t = r*sqrt((n-2)/(1-r^2)) against Student-t(n-2)."""
    df = n - 2
    denom = 1.0 - r * r
    if denom <= 0.0:
        return 0.0
    t2 = r * r * df / denom
    # P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2)
    return reg_incomplete_beta(df / 2.0, 0.5, df / (df + t2))


STUDY_PAIRS = (
    ("dsc_vs_ms", "dsc", "mutation_score"),
    ("lscd_vs_ms", "lscd", "mutation_score"),
    ("accuracy_vs_ms", "accuracy", "mutation_score"),
    ("accuracy_vs_lscd", "accuracy", "lscd"),
    ("accuracy_vs_dsc", "accuracy", "dsc"),
)


def correlation_study(records: list[StudyRecord]) -> list[CorrelationResult]:
    """The five metric-pair correlations over the mutant study table.

    When records carry per-bucket-count coverage values, coverage-based
    pairs report the mean r over the sweep (p recomputed from the mean r).
    """
    if len(records) < 3:
        raise EmptyInputError(f"need >= 3 study records, got {len(records)}")
    results = []
    have_sweep = all(r.dsc_by_k for r in records)
    for pair, fa, fb in STUDY_PAIRS:
        if have_sweep and "dsc" in (fa, fb):
            ks = sorted(records[0].dsc_by_k)
            rs = []
            for k in ks:
                xs = [r.dsc_by_k[k] if fa == "dsc" else getattr(r, fa) for r in records]
                ys = [r.dsc_by_k[k] if fb == "dsc" else getattr(r, fb) for r in records]
                rs.append(pearson(xs, ys).r)
            mean_r = float(np.mean(rs))
            results.append(CorrelationResult(pair, mean_r,
                                             p_value_for_r(mean_r, len(records)),
                                             len(records)))
        else:
            xs = [getattr(r, fa) for r in records]
            ys = [getattr(r, fb) for r in records]
            results.append(pearson(xs, ys, pair))
    return results


DEFAULT_SWEEP_KS = tuple(range(100, 1001, 100))


def dsc_bucket_sweep(data: TraceSet, train: TraceSet,
                     k_values=DEFAULT_SWEEP_KS,
                     upper_bound: float | None = None,
                     worker_count: int = 1) -> dict:
    """Coverage per bucket count; per-input ratios computed once and re-bucketed."""
    result = adequacy.dsa_all_parallel(data, train, worker_count)
    per_k = {}
    for k in k_values:
        cfg = adequacy.DscConfig(bucket_count=int(k), upper_bound=upper_bound)
        per_k[int(k)] = adequacy.bucket_dsa(result.values, result.excluded, cfg).coverage
    return {"per_k": per_k, "mean": float(np.mean(list(per_k.values())))}


def timing_bench(train: TraceSet, eval_set: TraceSet,
                 worker_counts=(4,), repeats: int = 3,
                 dsc_cfg: adequacy.DscConfig | None = None) -> list[TimingRecord]:
    """Wall-clock comparison on pre-loaded traces: dispersion single-thread,
    surprise coverage single-thread, surprise coverage per worker count.

    Each configuration runs once as a discarded warm-up, then `repeats`
    times; the median is reported.
    """
    if dsc_cfg is None:
        dsc_cfg = adequacy.DscConfig(bucket_count=1000, upper_bound=2.0)
    n_train, n_eval, d = len(train), len(eval_set), train.latent_dim
    records = []

    def measure(fn):
        fn()  # warm-up, discarded
        times = []
        for _ in range(max(3, repeats)):
            t0 = time.perf_counter()
            fn()
            times.append((time.perf_counter() - t0) * 1000.0)
        return float(np.median(times))

    centroids = adequacy.compute_centroids(train)
    records.append(TimingRecord(
        "lscd", "single_thread", 1, n_train, n_eval, d,
        measure(lambda: adequacy.lscd_per_class(eval_set, centroids))))
    records.append(TimingRecord(
        "dsc", "single_thread", 1, n_train, n_eval, d,
        measure(lambda: adequacy.dsc_coverage(eval_set, train, dsc_cfg))))
    for w in worker_counts:
        records.append(TimingRecord(
            "dsc", "multi_thread", w, n_train, n_eval, d,
            measure(lambda: adequacy.dsc_parallel(eval_set, train, dsc_cfg, w))))
    return records


# ---------------------------------------------------------------------------
# report rendering

def study_records_to_csv(records: list[StudyRecord]) -> str:
    lines = ["mutant_id,accuracy,dsc,lscd,mutation_score"]
    for r in records:
        lines.append(f"{r.mutant_id},{r.accuracy:.9g},{r.dsc:.9g},"
                     f"{r.lscd:.9g},{r.mutation_score:.9g}")
    return "\n".join(lines) + "\n"


def render_report(study: list[StudyRecord] | None = None,
                  correlations: list[CorrelationResult] | None = None,
                  timing: list[TimingRecord] | None = None,
                  validity: dict | None = None,
                  baseline: dict | None = None) -> tuple[str, dict]:
    """Deterministic human-readable text plus a stable JSON document."""
    lines = ["=" * 64, "test adequacy report", "=" * 64]
    doc: dict = {"report_version": 1}

    if baseline:
        lines.append("")
        lines.append("baseline metrics")
        lines.append("-" * 40)
        for key in sorted(baseline):
            lines.append(f"  {key:<28}{_fmt(baseline[key])}")
        doc["baseline"] = baseline

    if study:
        lines.append("")
        lines.append(f"mutant study ({len(study)} records)")
        lines.append("-" * 40)
        lines.append(f"  {'mutant':<40}{'acc':>8}{'dsc':>8}{'lscd':>9}{'ms':>8}")
        for r in study:
            lines.append(f"  {r.mutant_id:<40}{r.accuracy:>8.3f}{r.dsc:>8.3f}"
                         f"{r.lscd:>9.3f}{r.mutation_score:>8.3f}")
        doc["study"] = [r.to_json() for r in study]
    else:
        lines.append("")
        lines.append("mutant study: no records (section omitted)")

    if correlations:
        lines.append("")
        lines.append("correlation analysis (significant at p < 0.05)")
        lines.append("-" * 40)
        for c in correlations:
            flag = "*" if c.significant else " "
            lines.append(f"  {c.pair:<20} r={c.r:+.4f}  p={c.p_value:.2e} {flag}")
        doc["correlations"] = [c.to_json() for c in correlations]
    else:
        lines.append("")
        lines.append("correlation analysis: no results (section omitted)")

    if timing:
        lines.append("")
        lines.append("timing bench (median wall time)")
        lines.append("-" * 40)
        for t in timing:
            lines.append(f"  {t.metric:<6}{t.mode:<16}workers={t.worker_count:<3}"
                         f"{t.wall_time_ms:>12.1f} ms")
        doc["timing"] = [t.to_json() for t in timing]
    else:
        lines.append("")
        lines.append("timing bench: no results (section omitted)")

    if validity:
        lines.append("")
        lines.append("input validity")
        lines.append("-" * 40)
        for key in sorted(validity):
            lines.append(f"  {key:<28}{_fmt(validity[key])}")
        doc["validity"] = validity
    else:
        lines.append("")
        lines.append("input validity: no results (section omitted)")

    lines.append("")
    return "\n".join(lines), doc


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)
