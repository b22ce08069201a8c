"""End-to-end desk-scale pipeline.

Wires the full study together: train the base classifier, extract traces,
compute baseline metrics, fuzz per coverage criterion, train the mutant
catalogue, assemble study records, run the correlation analysis, fit the
validity oracle, and render the report with figures.

All stage seeds derive from the global seed by fixed offsets, so a run is
reproducible end to end.  Wall-clock timing results are written to a
separate timing.json (and figure) so the main report bytes stay identical
across runs with the same seed.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import adequacy, analysis, fuzzing, mutation, plots, refmodel, traces, validity
from .errors import EmptyInputError

# fixed stage-seed offsets from the global seed
_SEED_DATA = 1
_SEED_MODEL = 2
_SEED_TRAIN = 3
_SEED_FUZZ = 4
_SEED_MUTANTS = 5
_SEED_VALIDITY = 6
_SEED_BENCH = 7

DEFAULT_CONFIG = {
    # dim 16 gives 4x4 grid inputs, unlocking the image-style mutators
    # (blur, occlusion, shift) that the fuzzing stage needs to find corner
    # cases under all three coverage criteria
    "dataset": {"kind": "blobs",
                "params": {"classes": 3, "samples": 450, "dim": 16, "spread": 0.12}},
    # wide model + long training so mutants fit their (possibly corrupted)
    # training data to full confidence; under-trained mutants shrink every
    # logit, which masks dispersion differences between mutants
    "model": {"hidden": [64, 64]},
    "train": {"epochs": 300, "batch_size": 16, "learning_rate": 0.01,
              "optimizer": "adam"},
    "fuzz": {"criteria": ["nc", "kmnc", "nbc"], "max_iterations": 800,
             "kmnc_sections": 50, "nc_threshold": 0.75,
             "nbc_margin_multiplier": 0.5},
    "dsc": {"bucket_count": 100, "upper_bound": None},
    "sweep_ks": list(range(100, 1001, 100)),
    "validity": {"epsilon": 0.0001, "epochs": 120, "learning_rate": 0.01,
                 "bottleneck": None},
    "bench": {"n_train": 2000, "n_eval": 400, "latent_dim": 16,
              "worker_counts": [4], "repeats": 3},
    # graded study catalogue: scattered label flips degrade confidence
    # (low disagreement, tight latents) while heavy class-overlap corruption
    # trains to confident wrong regions (high disagreement, dispersed latents)
    "mutants": (
        [{"operator": "change_labels", "params": {"percent": p}}
         for p in (5, 10, 15, 20, 25, 30, 35, 40)]
        + [{"operator": "make_classes_overlap", "params": {"fraction": f}}
           for f in (0.6, 0.65, 0.68, 0.7, 0.72, 0.75, 0.78, 0.8)]
    ),
}


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def build_base(config: dict, seed: int):
    """Dataset splits plus base model/train configs derived from the config."""
    ds_cfg = config["dataset"]
    splits = refmodel.make_dataset(ds_cfg["kind"], ds_cfg.get("params"),
                                   seed + _SEED_DATA)
    input_dim = splits.train.inputs.shape[1]
    hidden = config["model"].get("hidden", [16])
    model_cfg = refmodel.ModelConfig(
        layer_sizes=[input_dim] + list(hidden) + [splits.train.class_count],
        activation=config["model"].get("activation", "relu"),
        dropout_rate=config["model"].get("dropout_rate", 0.0),
        seed=seed + _SEED_MODEL,
    )
    t = config["train"]
    train_cfg = refmodel.TrainConfig(
        epochs=t.get("epochs", 60), batch_size=t.get("batch_size", 16),
        learning_rate=t.get("learning_rate", 0.01),
        optimizer=t.get("optimizer", "adam"), seed=seed + _SEED_TRAIN,
    )
    return splits, model_cfg, train_cfg


def synthetic_traces(n_train: int, n_eval: int, latent_dim: int, class_count: int,
                     seed: int):
    """Random but class-structured trace sets for the timing bench."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 4.0, size=(class_count, latent_dim))

    def make(n, split):
        labels = rng.integers(0, class_count, size=n)
        latents = centers[labels] + rng.normal(0.0, 1.0, size=(n, latent_dim))
        return traces.from_arrays(split, class_count, latents, labels, labels)

    return make(n_train, "train"), make(n_eval, "test")


def run_pipeline(config: dict | None, seed: int, out_dir: Path,
                 workers: int = 1) -> dict:
    config = _merge(DEFAULT_CONFIG, config or {})
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    # 1. base model
    splits, model_cfg, train_cfg = build_base(config, seed)
    model = refmodel.train(splits.train, model_cfg, train_cfg, splits.validation)
    (out_dir / "model.lmdl").write_bytes(refmodel.save_model(model))

    train_traces = refmodel.extract_traces(model, splits.train, "train")
    test_traces = refmodel.extract_traces(model, splits.test, "test")
    (out_dir / "train.lstr").write_bytes(traces.write_traces(train_traces))
    (out_dir / "test.lstr").write_bytes(traces.write_traces(test_traces))

    # 2. baseline metrics
    centroids = adequacy.compute_centroids(train_traces)
    dsc_cfg = adequacy.DscConfig(
        bucket_count=config["dsc"]["bucket_count"],
        upper_bound=config["dsc"]["upper_bound"])
    base_lscd = adequacy.lscd_per_class(test_traces, centroids)
    base_dsc = adequacy.dsc_parallel(test_traces, train_traces, dsc_cfg, workers)
    baseline = {
        "base_accuracy": refmodel.accuracy(model, splits.test),
        "test_lscd": base_lscd.aggregate,
        "test_dsc": base_dsc.coverage,
        "dsc_upper_bound": base_dsc.upper_bound,
    }

    # 3. fuzzing per criterion
    f_cfg = config["fuzz"]
    histories = {}
    corner_metrics = {}
    corner_sets = {}
    for ci, criterion in enumerate(f_cfg["criteria"]):
        cov_cfg = fuzzing.CoverageConfig(
            criterion=criterion, nc_threshold=f_cfg["nc_threshold"],
            kmnc_sections=f_cfg["kmnc_sections"],
            nbc_margin_multiplier=f_cfg["nbc_margin_multiplier"])
        fz_cfg = fuzzing.FuzzConfig(max_iterations=f_cfg["max_iterations"],
                                    rng_seed=seed + _SEED_FUZZ + ci)
        corpus, history = fuzzing.fuzz(model, splits.train, cov_cfg, fz_cfg)
        histories[criterion] = history
        if corpus.items:
            manifest, blob = fuzzing.write_corpus(corpus)
            (out_dir / f"corner_{criterion}.json").write_text(manifest)
            (out_dir / f"corner_{criterion}.lcrp").write_bytes(blob)
            (out_dir / f"corner_{criterion}.lstr").write_bytes(
                traces.write_traces(corpus.traces))
            cc_lscd = adequacy.lscd_per_class(corpus.traces, centroids)
            cc_data = corpus.to_dataset(splits.train.class_count)
            corner_metrics[criterion] = {
                "count": len(corpus.items),
                "accuracy": refmodel.accuracy(model, cc_data),
                "lscd": cc_lscd.aggregate,
            }
            corner_sets[criterion] = corpus
        else:
            corner_metrics[criterion] = {"count": 0}
    for criterion, metrics in corner_metrics.items():
        for key, value in metrics.items():
            baseline[f"corner_{criterion}_{key}"] = value

    # 4. mutant study
    catalogue = config.get("mutants")
    if catalogue is None:
        catalogue = mutation.default_catalogue(seed + _SEED_MUTANTS)
    else:
        catalogue = [mutation.MutantSpec(c["operator"], c.get("params", {}),
                                         c.get("seed",
                                               seed + _SEED_MUTANTS + 7 * i))
                     for i, c in enumerate(catalogue)]
    results = mutation.build_mutants(catalogue, model_cfg, train_cfg,
                                     splits.train, splits.validation)
    sweep_ks = config["sweep_ks"]
    records = []
    for res in results:
        if res.model is None:
            continue
        m_train = refmodel.extract_traces(res.model, splits.train, "train")
        m_test = refmodel.extract_traces(res.model, splits.test, "test")
        m_centroids = adequacy.compute_centroids(m_train)
        res.accuracy = refmodel.accuracy(res.model, splits.test)
        res.lscd = adequacy.lscd_per_class(m_test, m_centroids).aggregate
        try:
            sweep = analysis.dsc_bucket_sweep(m_test, m_train, sweep_ks,
                                              worker_count=workers)
        except EmptyInputError:
            # a collapsed mutant can predict one class everywhere, leaving
            # every surprise ratio undefined; drop it from the study
            res.skipped_reason = "no computable surprise ratios"
            continue
        res.dsc = sweep["mean"]
        res.dsc_by_k = sweep["per_k"]
        res.mutation_score = mutation.mutation_score(model, res.model, splits.test)
        records.append(analysis.StudyRecord(
            res.spec.mutant_id, res.accuracy, res.dsc, res.lscd,
            res.mutation_score, res.dsc_by_k))
    correlations = analysis.correlation_study(records)

    # 5. validity oracle
    v_cfg = config["validity"]
    ae = validity.train_autoencoder(
        splits.train, v_cfg["bottleneck"], epochs=v_cfg["epochs"],
        lr=v_cfg["learning_rate"], seed=seed + _SEED_VALIDITY)
    train_errors = validity.reconstruction_errors(ae, splits.train.inputs)
    fit = validity.fit_gamma(np.maximum(train_errors, 1e-12), v_cfg["epsilon"])
    validity_doc = {"train": validity.validate_corpus(
        ae, fit, splits.train.inputs).to_json()}
    for criterion, corpus in corner_sets.items():
        inputs = np.stack([it.input for it in corpus.items])
        validity_doc[f"corner_{criterion}"] = validity.validate_corpus(
            ae, fit, inputs).to_json()

    # 6. timing bench (non-deterministic values go to their own files)
    b_cfg = config["bench"]
    bench_train, bench_eval = synthetic_traces(
        b_cfg["n_train"], b_cfg["n_eval"], b_cfg["latent_dim"],
        splits.train.class_count, seed + _SEED_BENCH)
    timing = analysis.timing_bench(bench_train, bench_eval,
                                   worker_counts=b_cfg["worker_counts"],
                                   repeats=b_cfg["repeats"])
    (out_dir / "timing.json").write_text(json.dumps(
        [t.to_json() for t in timing], indent=2, sort_keys=True))

    # 7. report + figures
    flat_validity = {f"{split}_{k}": v for split, d in sorted(validity_doc.items())
                     for k, v in d.items()}
    text, doc = analysis.render_report(study=records, correlations=correlations,
                                       timing=None, validity=flat_validity,
                                       baseline=baseline)
    (out_dir / "report.txt").write_text(text)
    (out_dir / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True))
    (out_dir / "study.csv").write_text(analysis.study_records_to_csv(records))
    plots.plot_study_scatter(records, out_dir / "study_scatter.png")
    plots.plot_coverage_history(histories, out_dir / "coverage_history.png")
    plots.plot_timing(timing, out_dir / "timing.png")
    doc["timing"] = [t.to_json() for t in timing]
    return doc
