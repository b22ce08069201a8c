/**
 * Dense classifier loading and latent extraction.
 *
 * A model description is a JSON document with the trained parameters of a
 * fully-connected stack:
 *
 *   {
 *     "layer_sizes": [in, h0, ..., logits],
 *     "activation": "relu" | "tanh" | "sigmoid" | "leaky_relu",
 *     "use_bias_per_layer": [bool, ...],        // one per weight layer
 *     "weights": [[[...], ...], ...],           // fan_in x fan_out per layer
 *     "biases": [[...], ...]
 *   }
 *
 * Hidden layers apply the configured activation; the final layer is linear
 * (pre-softmax logits).  Latents can be taken from the logit layer or from
 * any hidden layer's post-activation output.
 */

import * as tf from "@tensorflow/tfjs";

export interface ModelDescription {
  layer_sizes: number[];
  activation: string;
  use_bias_per_layer?: boolean[];
  weights: number[][][];
  biases: number[][];
}

export interface DataFile {
  inputs: number[][];
  labels: number[];
  class_count: number;
}

const ACTIVATIONS: Record<string, string> = {
  relu: "relu",
  tanh: "tanh",
  sigmoid: "sigmoid",
};

export function buildModel(desc: ModelDescription): tf.LayersModel {
  const sizes = desc.layer_sizes;
  if (sizes.length < 2) {
    throw new Error("layer_sizes needs at least input and logit sizes");
  }
  const nLayers = sizes.length - 1;
  if (desc.weights.length !== nLayers || desc.biases.length !== nLayers) {
    throw new Error(
      `expected ${nLayers} weight/bias pairs, got ` +
        `${desc.weights.length}/${desc.biases.length}`,
    );
  }
  const useBias = desc.use_bias_per_layer ?? new Array(nLayers).fill(true);

  const model = tf.sequential();
  for (let li = 0; li < nLayers; li++) {
    const isLast = li === nLayers - 1;
    let activation: string;
    if (isLast) {
      activation = "linear";
    } else if (desc.activation === "leaky_relu") {
      activation = "linear"; // applied as a separate layer below
    } else if (desc.activation in ACTIVATIONS) {
      activation = ACTIVATIONS[desc.activation];
    } else {
      throw new Error(`unsupported activation ${JSON.stringify(desc.activation)}`);
    }
    model.add(
      tf.layers.dense({
        units: sizes[li + 1],
        activation: activation as any,
        useBias: true, // bias tensor always present; zeroed below when unused
        inputShape: li === 0 ? [sizes[0]] : undefined,
        name: isLast ? "logits" : `hidden${li}`,
      }),
    );
    if (!isLast && desc.activation === "leaky_relu") {
      model.add(tf.layers.leakyReLU({ alpha: 0.01, name: `hidden${li}_act` }));
    }
  }

  let denseIndex = 0;
  for (const layer of model.layers) {
    if (layer.getWeights().length === 0) continue; // activation-only layers
    const w = desc.weights[denseIndex];
    const b = useBias[denseIndex]
      ? desc.biases[denseIndex]
      : new Array(desc.biases[denseIndex].length).fill(0);
    layer.setWeights([tf.tensor2d(w), tf.tensor1d(b)]);
    denseIndex++;
  }
  return model;
}

/** Names of layers whose output can serve as the latent vector. */
export function latentLayerNames(model: tf.LayersModel): string[] {
  const names: string[] = [];
  for (const layer of model.layers) {
    if (layer.name === "logits" || /^hidden\d+(_act)?$/.test(layer.name)) {
      names.push(layer.name);
    }
  }
  return names;
}

export interface ExtractionResult {
  latents: Float32Array[]; // one per input, selected layer's output
  predicted: number[]; // argmax over final logits
}

export function extractLatents(
  model: tf.LayersModel,
  inputs: number[][],
  layerName = "logits",
): ExtractionResult {
  const layer = model.getLayer(layerName);
  const layerOut = layer.output as tf.SymbolicTensor;
  const sameAsLogits = layerOut === model.outputs[0];
  const probe = tf.model({
    inputs: model.inputs,
    outputs: sameAsLogits ? [layerOut] : [layerOut, model.outputs[0]],
  });
  return tf.tidy(() => {
    const x = tf.tensor2d(inputs);
    const out = probe.predict(x);
    const tensors = Array.isArray(out) ? out : [out];
    const selected = tensors[0];
    const logits = sameAsLogits ? tensors[0] : tensors[1];
    const latentDim = selected.shape[1] as number;
    const flat = selected.dataSync() as Float32Array;
    const preds = logits.argMax(1).dataSync();
    const latents: Float32Array[] = [];
    const predicted: number[] = [];
    for (let i = 0; i < inputs.length; i++) {
      latents.push(flat.slice(i * latentDim, (i + 1) * latentDim));
      predicted.push(preds[i]);
    }
    return { latents, predicted };
  });
}
