/**
 * What the protocol server needs from a token model.
 *
 * A context is one prompt-conditioned generation state; `logits()` returns
 * the post-guidance values the model would sample the NEXT frame from:
 * exactly `channels` rows of `vocabSize` entries, aligned per frame (any
 * internal codebook interleaving is the model's business).
 */

export interface ModelInfo {
  name: string;
  vocabSize: number;
  channels: number;
  frameRate: number;
  maxContextFrames: number;
  supportsDecode: boolean;
}

export interface ModelContext {
  /** Frames are validated by the server: arrays of `channels` token ids. */
  append(frames: number[][]): void | Promise<void>;
  logits(): Float32Array[] | Promise<Float32Array[]>;
  free(): void;
}

export interface DecodedAudio {
  samples: Float32Array;
  sampleRate: number;
}

export interface TokenModel {
  info(): ModelInfo;
  newContext(prompt: string, guidanceScale?: number): ModelContext | Promise<ModelContext>;
  decode(frames: number[][]): DecodedAudio | Promise<DecodedAudio>;
}
