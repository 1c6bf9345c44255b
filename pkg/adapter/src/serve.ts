#!/usr/bin/env node
/**
 * Protocol server entry point: speaks the backend wire protocol on
 * stdin/stdout. By default binds the pretrained model named by
 * --model-id (weights required locally); --stub serves the deterministic
 * stub instead, which is what the tests and desk runs use.
 */

import { parseArgs } from "node:util";

import { MusicGenModel } from "./musicgen.js";
import { ProtocolServer } from "./server.js";
import { StubModel } from "./stub.js";
import type { TokenModel } from "./model.js";

const { values } = parseArgs({
  options: {
    stub: { type: "boolean", default: false },
    "model-id": { type: "string", default: "Xenova/musicgen-small" },
    device: { type: "string" },
    guidance: { type: "string", default: "3.0" },
    "max-context-seconds": { type: "string", default: "30" },
    // stub dimensions
    "vocab-size": { type: "string", default: "64" },
    channels: { type: "string", default: "1" },
    "frame-rate": { type: "string", default: "50" },
    "bias-size": { type: "string", default: "8" },
    "no-decode": { type: "boolean", default: false },
  },
});

async function makeModel(): Promise<TokenModel> {
  if (values.stub) {
    return new StubModel({
      vocabSize: Number(values["vocab-size"]),
      channels: Number(values.channels),
      frameRate: Number(values["frame-rate"]),
      biasSize: Number(values["bias-size"]),
      supportsDecode: !values["no-decode"],
    });
  }
  return MusicGenModel.load({
    modelId: values["model-id"]!,
    device: values.device,
    defaultGuidanceScale: Number(values.guidance),
    maxContextSeconds: Number(values["max-context-seconds"]),
  });
}

makeModel()
  .then((model) => new ProtocolServer(model).run(process.stdin, process.stdout))
  .catch((error) => {
    console.error(`adapter startup failed: ${error.message ?? error}`);
    process.exit(1);
  });
