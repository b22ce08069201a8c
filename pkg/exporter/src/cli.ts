#!/usr/bin/env node
/** Command-line latent trace exporter: model JSON + data JSON -> .lstr file. */

import { readFileSync, writeFileSync } from "node:fs";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { encodeTraceSet, SPLIT_TAGS, type SplitTag } from "./lstr.js";
import { exportTraces } from "./export.js";
import { buildModel, latentLayerNames } from "./model.js";

async function main() {
  const argv = await yargs(hideBin(process.argv))
    .usage("$0 --model model.json --data data.json --output traces.lstr")
    .option("model", { type: "string", demandOption: true, describe: "model description JSON" })
    .option("data", { type: "string", demandOption: true, describe: "inputs/labels JSON" })
    .option("output", { type: "string", demandOption: true, describe: "output .lstr path" })
    .option("layer", {
      type: "string",
      default: "logits",
      describe: "layer whose output becomes the latent vector",
    })
    .option("split", {
      type: "string",
      default: "test",
      choices: [...SPLIT_TAGS],
      describe: "split tag recorded in the file header",
    })
    .option("list-layers", {
      type: "boolean",
      default: false,
      describe: "print selectable layer names and exit",
    })
    .strict()
    .parse();

  const desc = JSON.parse(readFileSync(argv.model, "utf-8"));
  if (argv["list-layers"]) {
    for (const name of latentLayerNames(buildModel(desc))) {
      console.log(name);
    }
    return;
  }
  const data = JSON.parse(readFileSync(argv.data, "utf-8"));
  const traceSet = exportTraces(desc, data, {
    layer: argv.layer,
    splitTag: argv.split as SplitTag,
  });
  writeFileSync(argv.output, encodeTraceSet(traceSet));
  console.log(
    `wrote ${traceSet.records.length} traces ` +
      `(dim ${traceSet.latentDim}, split ${traceSet.splitTag}) to ${argv.output}`,
  );
}

main().catch((err) => {
  console.error(err.message ?? err);
  process.exit(1);
});
