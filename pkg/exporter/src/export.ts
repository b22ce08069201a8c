/** Glue: run a model description over a data file and build an LSTR trace set. */

import { buildModel, extractLatents, type DataFile, type ModelDescription } from "./model.js";
import type { SplitTag, TraceSet } from "./lstr.js";

export function exportTraces(
  desc: ModelDescription,
  data: DataFile,
  options: { layer?: string; splitTag?: SplitTag } = {},
): TraceSet {
  if (data.inputs.length === 0) {
    throw new Error("data file has no inputs");
  }
  if (data.inputs.length !== data.labels.length) {
    throw new Error(
      `inputs/labels length mismatch: ${data.inputs.length} vs ${data.labels.length}`,
    );
  }
  const model = buildModel(desc);
  const { latents, predicted } = extractLatents(
    model,
    data.inputs,
    options.layer ?? "logits",
  );
  return {
    splitTag: options.splitTag ?? "test",
    classCount: data.class_count,
    latentDim: latents[0].length,
    records: latents.map((latent, i) => ({
      inputId: i,
      groundTruth: data.labels[i],
      predicted: predicted[i],
      latent,
    })),
  };
}
