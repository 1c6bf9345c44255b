/**
 * The protocol server: maps wire requests onto a TokenModel.
 *
 * Field validation, context bookkeeping, capacity limits, and error-code
 * mapping all live here so model implementations stay small. Requests are
 * handled one at a time in arrival order.
 */

import { writeFileSync } from "node:fs";

import { lines, writeLine } from "./ndjson.js";
import type { ModelContext, TokenModel } from "./model.js";
import {
  PROTOCOL_VERSION,
  WireError,
  WireReply,
  WireRequest,
  encodeB64F32,
  errorReply,
  majorVersion,
} from "./protocol.js";
import { encodeWavPcm16 } from "./wav.js";

const DEFAULT_MAX_CONTEXTS = 32;

interface ContextState {
  context: ModelContext;
  position: number;
}

export class ProtocolServer {
  private readonly contexts = new Map<number, ContextState>();
  private nextContextId = 1;

  constructor(
    private readonly model: TokenModel,
    private readonly maxContexts: number = DEFAULT_MAX_CONTEXTS,
  ) {}

  async run(input: AsyncIterable<Buffer | string>, output: NodeJS.WritableStream): Promise<void> {
    for await (const line of lines(input)) {
      writeLine(output, await this.handleLine(line));
    }
  }

  async handleLine(line: string): Promise<WireReply> {
    let request: WireRequest;
    try {
      request = JSON.parse(line);
    } catch {
      return errorReply(null, "bad_request", "request is not valid JSON");
    }
    if (typeof request !== "object" || request === null || Array.isArray(request)) {
      return errorReply(null, "bad_request", "request must be a JSON object");
    }
    const id = request.id ?? null;
    if (id === null) {
      return errorReply(null, "bad_request", "request lacks an id");
    }
    try {
      const reply = await this.dispatch(request);
      return { ...reply, id };
    } catch (error) {
      if (error instanceof WireError) {
        return errorReply(id, error.code, error.message);
      }
      return errorReply(id, "internal", String(error));
    }
  }

  private async dispatch(request: WireRequest): Promise<Omit<WireReply, "id">> {
    switch (request.op) {
      case "handshake":
        return this.opHandshake(request);
      case "new_context":
        return this.opNewContext(request);
      case "append":
        return this.opAppend(request);
      case "logits":
        return this.opLogits(request);
      case "decode":
        return this.opDecode(request);
      case "free":
        return this.opFree(request);
      default:
        throw new WireError("unsupported", `unknown op ${JSON.stringify(request.op)}`);
    }
  }

  // -- field helpers -------------------------------------------------------

  private requireString(request: WireRequest, name: string): string {
    const value = request[name];
    if (typeof value !== "string") {
      throw new WireError("bad_request", `missing required field '${name}'`);
    }
    return value;
  }

  private contextState(request: WireRequest): ContextState {
    const id = request.context;
    if (typeof id !== "number" || !Number.isInteger(id)) {
      throw new WireError("bad_request", "missing required field 'context'");
    }
    const state = this.contexts.get(id);
    if (state === undefined) {
      throw new WireError("bad_request", `unknown context id ${id}`);
    }
    return state;
  }

  private frames(request: WireRequest): number[][] {
    const raw = request.frames;
    const { channels, vocabSize } = this.model.info();
    if (!Array.isArray(raw)) {
      throw new WireError("bad_request", "missing required field 'frames'");
    }
    return raw.map((frame) => {
      if (!Array.isArray(frame) || frame.length !== channels) {
        throw new WireError(
          "bad_request",
          `each frame must be an array of ${channels} token ids`,
        );
      }
      for (const token of frame) {
        if (typeof token !== "number" || !Number.isInteger(token) || token < 0 || token >= vocabSize) {
          throw new WireError("bad_request", `token ${token} outside [0, ${vocabSize})`);
        }
      }
      return frame as number[];
    });
  }

  // -- operations ----------------------------------------------------------

  private opHandshake(request: WireRequest): Omit<WireReply, "id"> {
    const theirs = this.requireString(request, "protocol_version");
    if (majorVersion(theirs) !== majorVersion(PROTOCOL_VERSION)) {
      throw new WireError(
        "bad_request",
        `protocol major version mismatch: client speaks ${theirs}, backend speaks ${PROTOCOL_VERSION}`,
      );
    }
    const info = this.model.info();
    return {
      ok: true,
      protocol_version: PROTOCOL_VERSION,
      name: info.name,
      vocab_size: info.vocabSize,
      channels: info.channels,
      frame_rate: info.frameRate,
      max_context_frames: info.maxContextFrames,
      supports_decode: info.supportsDecode,
    };
  }

  private async opNewContext(request: WireRequest): Promise<Omit<WireReply, "id">> {
    const prompt = this.requireString(request, "prompt");
    if (prompt.trim().length === 0) {
      throw new WireError("bad_request", "prompt text is empty");
    }
    let guidance: number | undefined;
    if (request.guidance_scale !== undefined && request.guidance_scale !== null) {
      const value = request.guidance_scale;
      if (typeof value !== "number" || !(value > 0)) {
        throw new WireError("bad_request", `guidance_scale must be a positive number`);
      }
      guidance = value;
    }
    if (this.contexts.size >= this.maxContexts) {
      throw new WireError("capacity", `context limit of ${this.maxContexts} reached`);
    }
    const context = await this.model.newContext(prompt, guidance);
    const id = this.nextContextId++;
    this.contexts.set(id, { context, position: 0 });
    return { ok: true, context: id };
  }

  private async opAppend(request: WireRequest): Promise<Omit<WireReply, "id">> {
    const state = this.contextState(request);
    const frames = this.frames(request);
    const limit = this.model.info().maxContextFrames;
    if (state.position + frames.length > limit) {
      throw new WireError("capacity", `context would exceed ${limit} frames`);
    }
    await state.context.append(frames);
    state.position += frames.length;
    return { ok: true, position: state.position };
  }

  private async opLogits(request: WireRequest): Promise<Omit<WireReply, "id">> {
    const encoding = request.encoding;
    if (encoding !== undefined && encoding !== "b64f32") {
      throw new WireError("bad_request", `unknown logits encoding ${JSON.stringify(encoding)}`);
    }
    const state = this.contextState(request);
    const rows = await state.context.logits();
    const { channels, vocabSize } = this.model.info();
    if (rows.length !== channels || rows.some((row) => row.length !== vocabSize)) {
      throw new WireError("internal", "model produced logits of the wrong shape");
    }
    if (encoding === "b64f32") {
      return { ok: true, encoding: "b64f32", logits: rows.map(encodeB64F32) };
    }
    return { ok: true, logits: rows.map((row) => Array.from(row)) };
  }

  private async opDecode(request: WireRequest): Promise<Omit<WireReply, "id">> {
    if (!this.model.info().supportsDecode) {
      throw new WireError("unsupported", "this backend does not decode audio");
    }
    const path = this.requireString(request, "path");
    const frames = this.frames(request);
    if (frames.length === 0) {
      throw new WireError("bad_request", "cannot decode an empty frame list");
    }
    const audio = await this.model.decode(frames);
    writeFileSync(path, encodeWavPcm16(audio.samples, audio.sampleRate));
    return {
      ok: true,
      path,
      duration_seconds: frames.length / this.model.info().frameRate,
      sample_rate: audio.sampleRate,
      frame_count: frames.length,
    };
  }

  private opFree(request: WireRequest): Omit<WireReply, "id"> {
    const id = request.context;
    if (typeof id !== "number" || !this.contexts.has(id)) {
      throw new WireError("bad_request", `unknown context id ${id}`);
    }
    this.contexts.get(id)!.context.free();
    this.contexts.delete(id);
    return { ok: true };
  }
}
