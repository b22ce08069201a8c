"""Command-line surface; thin adapters over the library modules.

Subcommands: train, traces, lscd, dsc, mutate, fuzz, validate, correlate,
bench, pipeline.  All randomized stages take an explicit --seed; --workers
falls back to the ADEQUACY_LAB_THREADS environment variable.

Exit codes: 0 success, 2 bad flags (argparse), 3 missing file, 4 bad
config or file format, 1 other failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import adequacy, analysis, fuzzing, mutation, pipeline, refmodel, traces, validity
from .errors import AdequacyLabError, EmptyInputError, TraceFormatError

EXIT_MISSING_FILE = 3
EXIT_BAD_INPUT = 4


def _default_workers() -> int:
    env = os.environ.get("ADEQUACY_LAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def _read_trace_file(path: str, fmt: str, split_tag="test", class_count=None):
    data = Path(path).read_bytes()
    return traces.read_traces(data, fmt, split_tag=split_tag, class_count=class_count)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _emit(doc: dict, out_dir: str | None, name: str):
    text = json.dumps(doc, indent=2, sort_keys=True)
    print(text)
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adequacy-lab",
        description="Latent-space test adequacy toolkit for DNN classifiers")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, *, seed=True, out_dir=True, workers=False, config=False):
        if seed:
            p.add_argument("--seed", type=int, default=0,
                           help="global RNG seed (default 0)")
        if out_dir:
            p.add_argument("--out-dir", default=None,
                           help="directory for output artifacts (default: stdout only)")
        if workers:
            p.add_argument("--workers", type=int, default=_default_workers(),
                           help="parallel worker count (default: "
                                "ADEQUACY_LAB_THREADS or 1)")
        if config:
            p.add_argument("--config", default=None,
                           help="JSON config file (default: built-in desk-scale config)")

    p = sub.add_parser("train", help="train the base classifier and extract traces")
    add_common(p, config=True)

    p = sub.add_parser("traces", help="convert trace files between binary and CSV")
    p.add_argument("--in", dest="input", required=True, help="input trace file")
    p.add_argument("--out", dest="output", required=True, help="output trace file")
    p.add_argument("--format", choices=["binary", "csv"], default="binary",
                   help="INPUT format (output gets the other one; default binary)")
    p.add_argument("--split", choices=list(traces.SPLIT_TAGS), default="test",
                   help="split tag when reading CSV (default test)")
    p.add_argument("--class-count", type=int, default=None,
                   help="class count when reading CSV (default: max label + 1)")

    p = sub.add_parser("lscd", help="latent-space class dispersion of an eval set")
    p.add_argument("--train", required=True, help="training trace file")
    p.add_argument("--eval", required=True, help="evaluation trace file")
    p.add_argument("--format", choices=["binary", "csv"], default="binary",
                   help="trace file format (default binary)")
    add_common(p, seed=False)

    p = sub.add_parser("dsc", help="distance-based surprise coverage of an eval set")
    p.add_argument("--train", required=True, help="training trace file")
    p.add_argument("--eval", required=True, help="evaluation trace file")
    p.add_argument("--format", choices=["binary", "csv"], default="binary",
                   help="trace file format (default binary)")
    p.add_argument("--k", type=int, default=1000, help="bucket count (default 1000)")
    p.add_argument("--upper-bound", type=float, default=None,
                   help="bucket range upper bound (default: max observed ratio)")
    add_common(p, seed=False, workers=True)

    p = sub.add_parser("mutate", help="train the mutant catalogue and write the study table")
    p.add_argument("--catalogue", default=None,
                   help="JSON array of mutant specs (default: built-in catalogue)")
    add_common(p, config=True, workers=True)

    p = sub.add_parser("fuzz", help="coverage-guided fuzzing for corner cases")
    p.add_argument("--criterion", choices=list(fuzzing.CRITERIA), default="nc",
                   help="coverage criterion (default nc)")
    p.add_argument("--iterations", type=int, default=2000,
                   help="fuzzing iteration budget (default 2000)")
    add_common(p, config=True)

    p = sub.add_parser("validate", help="autoencoder validity check of a corpus")
    p.add_argument("--corpus", default=None,
                   help="LCRP corpus file to validate (default: the test split)")
    p.add_argument("--epsilon", type=float, default=0.0001,
                   help="false-alarm rate for the validity threshold (default 0.0001)")
    add_common(p, config=True)

    p = sub.add_parser("correlate", help="correlation table from a study JSON/CSV")
    p.add_argument("--study", required=True, help="study table JSON file")
    add_common(p, seed=False)

    p = sub.add_parser("bench", help="timing benchmark on pre-loaded traces")
    p.add_argument("--train", default=None, help="training trace file (default synthetic)")
    p.add_argument("--eval", default=None, help="evaluation trace file (default synthetic)")
    p.add_argument("--format", choices=["binary", "csv"], default="binary",
                   help="trace file format (default binary)")
    p.add_argument("--n-train", type=int, default=10000,
                   help="synthetic training set size (default 10000)")
    p.add_argument("--n-eval", type=int, default=2000,
                   help="synthetic evaluation set size (default 2000)")
    p.add_argument("--latent-dim", type=int, default=64,
                   help="synthetic latent dimension (default 64)")
    add_common(p, workers=True)

    p = sub.add_parser("pipeline", help="full desk-scale study with report and figures")
    add_common(p, config=True, workers=True)

    return parser


def _cmd_train(args):
    cfg = pipeline._merge(pipeline.DEFAULT_CONFIG, _load_config(args.config))
    splits, model_cfg, train_cfg = pipeline.build_base(cfg, args.seed)
    model = refmodel.train(splits.train, model_cfg, train_cfg, splits.validation)
    doc = {"train_accuracy": refmodel.accuracy(model, splits.train),
           "test_accuracy": refmodel.accuracy(model, splits.test),
           "epochs_run": len(model.history["train_loss"])}
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "model.lmdl").write_bytes(refmodel.save_model(model))
        for split, data in (("train", splits.train), ("validation", splits.validation),
                            ("test", splits.test)):
            ts = refmodel.extract_traces(model, data, split if split != "validation"
                                         else "validation")
            (out / f"{split}.lstr").write_bytes(traces.write_traces(ts))
    _emit(doc, args.out_dir, "train_summary.json")
    return 0


def _cmd_traces(args):
    data = Path(args.input).read_bytes()
    ts = traces.read_traces(data, args.format, split_tag=args.split,
                            class_count=args.class_count)
    out_fmt = "csv" if args.format == "binary" else "binary"
    Path(args.output).write_bytes(traces.write_traces(ts, out_fmt))
    print(json.dumps({"records": len(ts), "latent_dim": ts.latent_dim,
                      "class_count": ts.class_count, "written": args.output}))
    return 0


def _cmd_lscd(args):
    train_ts = _read_trace_file(args.train, args.format, "train")
    eval_ts = _read_trace_file(args.eval, args.format, "test")
    centroids = adequacy.compute_centroids(train_ts)
    report = adequacy.lscd_per_class(eval_ts, centroids)
    _emit(report.to_json(), args.out_dir, "lscd.json")
    return 0


def _cmd_dsc(args):
    train_ts = _read_trace_file(args.train, args.format, "train")
    eval_ts = _read_trace_file(args.eval, args.format, "test")
    cfg = adequacy.DscConfig(bucket_count=args.k, upper_bound=args.upper_bound)
    report = adequacy.dsc_parallel(eval_ts, train_ts, cfg, args.workers)
    _emit(report.to_json(), args.out_dir, "dsc.json")
    return 0


def _cmd_mutate(args):
    cfg = pipeline._merge(pipeline.DEFAULT_CONFIG, _load_config(args.config))
    splits, model_cfg, train_cfg = pipeline.build_base(cfg, args.seed)
    model = refmodel.train(splits.train, model_cfg, train_cfg, splits.validation)
    if args.catalogue:
        catalogue = mutation.catalogue_from_json(Path(args.catalogue).read_text())
    else:
        catalogue = mutation.default_catalogue(args.seed + 100)
    results = mutation.build_mutants(catalogue, model_cfg, train_cfg,
                                     splits.train, splits.validation)
    records = []
    skipped = []
    for res in results:
        if res.model is None:
            skipped.append({"mutant_id": res.spec.mutant_id,
                            "reason": res.skipped_reason})
            continue
        m_train = refmodel.extract_traces(res.model, splits.train, "train")
        m_test = refmodel.extract_traces(res.model, splits.test, "test")
        try:
            sweep = analysis.dsc_bucket_sweep(m_test, m_train, cfg["sweep_ks"],
                                              worker_count=args.workers)
        except EmptyInputError:
            skipped.append({"mutant_id": res.spec.mutant_id,
                            "reason": "no computable surprise ratios"})
            continue
        records.append(analysis.StudyRecord(
            res.spec.mutant_id,
            refmodel.accuracy(res.model, splits.test),
            sweep["mean"],
            adequacy.lscd_per_class(
                m_test, adequacy.compute_centroids(m_train)).aggregate,
            mutation.mutation_score(model, res.model, splits.test),
            sweep["per_k"]))
    doc = {"records": [r.to_json() for r in records], "skipped": skipped}
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "study.csv").write_text(analysis.study_records_to_csv(records))
    _emit(doc, args.out_dir, "study.json")
    return 0


def _cmd_fuzz(args):
    cfg = pipeline._merge(pipeline.DEFAULT_CONFIG, _load_config(args.config))
    splits, model_cfg, train_cfg = pipeline.build_base(cfg, args.seed)
    model = refmodel.train(splits.train, model_cfg, train_cfg, splits.validation)
    f_cfg = cfg["fuzz"]
    cov_cfg = fuzzing.CoverageConfig(
        criterion=args.criterion, nc_threshold=f_cfg["nc_threshold"],
        kmnc_sections=f_cfg["kmnc_sections"],
        nbc_margin_multiplier=f_cfg["nbc_margin_multiplier"])
    fz_cfg = fuzzing.FuzzConfig(max_iterations=args.iterations,
                                rng_seed=args.seed + 4)
    corpus, history = fuzzing.fuzz(model, splits.train, cov_cfg, fz_cfg)
    doc = {"criterion": args.criterion, "corner_cases": len(corpus.items),
           "final_coverage": history[-1], "iterations": len(history) - 1}
    if args.out_dir and corpus.items:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        manifest, blob = fuzzing.write_corpus(corpus)
        (out / f"corner_{args.criterion}.json").write_text(manifest)
        (out / f"corner_{args.criterion}.lcrp").write_bytes(blob)
        (out / f"corner_{args.criterion}.lstr").write_bytes(
            traces.write_traces(corpus.traces))
    _emit(doc, args.out_dir, "fuzz_summary.json")
    return 0


def _cmd_validate(args):
    cfg = pipeline._merge(pipeline.DEFAULT_CONFIG, _load_config(args.config))
    splits, _, _ = pipeline.build_base(cfg, args.seed)
    v_cfg = cfg["validity"]
    ae = validity.train_autoencoder(
        splits.train, v_cfg["bottleneck"], epochs=v_cfg["epochs"],
        lr=v_cfg["learning_rate"], seed=args.seed + 6)
    errors = validity.reconstruction_errors(ae, splits.train.inputs)
    fit = validity.fit_gamma(np.maximum(errors, 1e-12), args.epsilon)
    if args.corpus:
        blob = Path(args.corpus).read_bytes()
        manifest_path = Path(args.corpus).with_suffix(".json")
        corpus = fuzzing.read_corpus(manifest_path.read_text(), blob)
        inputs = np.stack([it.input for it in corpus.items])
    else:
        inputs = splits.test.inputs
    report = validity.validate_corpus(ae, fit, inputs)
    _emit(report.to_json(), args.out_dir, "validity.json")
    return 0


def _cmd_correlate(args):
    raw = json.loads(Path(args.study).read_text())
    items = raw["records"] if isinstance(raw, dict) else raw
    records = [analysis.StudyRecord(
        it["mutant_id"], it["accuracy"], it["dsc"], it["lscd"],
        it["mutation_score"],
        {int(k): v for k, v in it.get("dsc_by_k", {}).items()} or None)
        for it in items]
    results = analysis.correlation_study(records)
    _emit({"correlations": [c.to_json() for c in results]},
          args.out_dir, "correlations.json")
    return 0


def _cmd_bench(args):
    if args.train and args.eval:
        train_ts = _read_trace_file(args.train, args.format, "train")
        eval_ts = _read_trace_file(args.eval, args.format, "test")
    else:
        train_ts, eval_ts = pipeline.synthetic_traces(
            args.n_train, args.n_eval, args.latent_dim, 10, args.seed + 7)
    worker_counts = [args.workers] if args.workers > 1 else [4]
    records = analysis.timing_bench(train_ts, eval_ts, worker_counts=worker_counts)
    _emit({"timing": [t.to_json() for t in records]}, args.out_dir, "timing.json")
    return 0


def _cmd_pipeline(args):
    out_dir = Path(args.out_dir or "pipeline_out")
    doc = pipeline.run_pipeline(_load_config(args.config), args.seed, out_dir,
                                args.workers)
    print(json.dumps({"out_dir": str(out_dir),
                      "correlations": doc.get("correlations", [])},
                     indent=2, sort_keys=True))
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "traces": _cmd_traces,
    "lscd": _cmd_lscd,
    "dsc": _cmd_dsc,
    "mutate": _cmd_mutate,
    "fuzz": _cmd_fuzz,
    "validate": _cmd_validate,
    "correlate": _cmd_correlate,
    "bench": _cmd_bench,
    "pipeline": _cmd_pipeline,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(json.dumps({"error": str(exc), "type": "missing_file"}),
              file=sys.stderr)
        return EXIT_MISSING_FILE
    except (TraceFormatError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": str(exc), "type": "bad_input"}), file=sys.stderr)
        return EXIT_BAD_INPUT
    except AdequacyLabError as exc:
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
