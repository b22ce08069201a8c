#!/usr/bin/env python3
"""Generate the trace-exporter fixture bundle.

Trains the small dense classifier on a synthetic blob dataset and dumps
three JSON files into exporter/fixtures/:

  model.json             trained parameters + architecture
  data.json              test-split inputs, labels, class count
  expected_latents.json  logit-layer latents and predictions computed here,
                         used by the exporter's fidelity tests

After regenerating, rebuild the exporter and rerun it to refresh
exporter/fixtures/traces.lstr (see exporter/README.md).
"""

import json
import pathlib

from adequacy_lab import refmodel

OUT = pathlib.Path(__file__).resolve().parent.parent / "exporter" / "fixtures"

SEED = 7


def main() -> None:
    splits = refmodel.make_dataset(
        "blobs", {"classes": 3, "samples": 240, "dim": 8, "spread": 0.08}, seed=SEED)
    model_cfg = refmodel.ModelConfig(layer_sizes=[8, 16, 3], activation="relu",
                                     seed=SEED)
    train_cfg = refmodel.TrainConfig(epochs=40, batch_size=16, learning_rate=0.01,
                                     optimizer="adam", seed=SEED)
    model = refmodel.train(splits.train, model_cfg, train_cfg, splits.validation)

    test = splits.test
    traces = refmodel.extract_traces(model, test, "test")

    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "model.json").write_text(json.dumps({
        "layer_sizes": model_cfg.layer_sizes,
        "activation": model_cfg.activation,
        "use_bias_per_layer": model_cfg.use_bias_per_layer,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }, indent=1))
    (OUT / "data.json").write_text(json.dumps({
        "inputs": test.inputs.tolist(),
        "labels": test.labels.tolist(),
        "class_count": test.class_count,
    }, indent=1))
    (OUT / "expected_latents.json").write_text(json.dumps({
        "latents": [t.latent.tolist() for t in traces.traces],
        "predicted": [t.predicted for t in traces.traces],
    }, indent=1))
    print(f"wrote fixture for {len(traces)} test inputs to {OUT}")


if __name__ == "__main__":
    main()
