/**
 * Deterministic stub model for protocol tests; no weights needed.
 *
 * Each prompt biases a fixed token set (derived from an FNV-1a hash of
 * the text) and a small history-dependent bigram term keeps the logits
 * sensitive to the last appended frame. Decode renders each token as a
 * sine tone at 110 * 2^(token/12) Hz. All arithmetic is float32 so both
 * wire encodings are lossless.
 */

import type { DecodedAudio, ModelContext, ModelInfo, TokenModel } from "./model.js";

const IN_BIAS_LOGIT = 3.0;
const OUT_BIAS_LOGIT = -1.0;
const BIGRAM_WEIGHT = 0.5;
const BIGRAM_SEED = 0x5e67e;
const SAMPLE_RATE = 32_000;

function fnv1a(text: string): number {
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return hash >>> 0;
}

class XorShift32 {
  constructor(private state: number) {
    if (this.state === 0) this.state = 0x9e3779b9;
  }

  next(): number {
    let x = this.state;
    x ^= x << 13;
    x >>>= 0;
    x ^= x >>> 17;
    x ^= x << 5;
    x >>>= 0;
    this.state = x;
    return x / 0x1_0000_0000;
  }
}

export interface StubConfig {
  vocabSize?: number;
  channels?: number;
  frameRate?: number;
  biasSize?: number;
  maxContextFrames?: number;
  supportsDecode?: boolean;
}

export class StubModel implements TokenModel {
  readonly vocabSize: number;
  readonly channels: number;
  readonly frameRate: number;
  readonly biasSize: number;
  readonly maxContextFrames: number;
  readonly supportsDecode: boolean;
  /** bigram[last][token], last = vocabSize meaning "no history". */
  private readonly bigram: Float32Array[];
  private readonly baseCache = new Map<string, Float32Array>();

  constructor(config: StubConfig = {}) {
    this.vocabSize = config.vocabSize ?? 64;
    this.channels = config.channels ?? 1;
    this.frameRate = config.frameRate ?? 50;
    this.biasSize = config.biasSize ?? 8;
    this.maxContextFrames = config.maxContextFrames ?? 100_000;
    this.supportsDecode = config.supportsDecode ?? true;
    if (this.biasSize > this.vocabSize) {
      throw new Error(`biasSize ${this.biasSize} exceeds vocabSize ${this.vocabSize}`);
    }
    const rng = new XorShift32(BIGRAM_SEED);
    this.bigram = [];
    for (let last = 0; last <= this.vocabSize; last++) {
      const row = new Float32Array(this.vocabSize);
      for (let token = 0; token < this.vocabSize; token++) {
        row[token] = Math.fround(rng.next());
      }
      this.bigram.push(row);
    }
  }

  info(): ModelInfo {
    return {
      name: "stub",
      vocabSize: this.vocabSize,
      channels: this.channels,
      frameRate: this.frameRate,
      maxContextFrames: this.maxContextFrames,
      supportsDecode: this.supportsDecode,
    };
  }

  biasSet(prompt: string): number[] {
    const rng = new XorShift32(fnv1a(prompt));
    const picked = new Set<number>();
    while (picked.size < this.biasSize) {
      picked.add(Math.floor(rng.next() * this.vocabSize));
    }
    return [...picked].sort((a, b) => a - b);
  }

  private base(prompt: string): Float32Array {
    let cached = this.baseCache.get(prompt);
    if (cached === undefined) {
      cached = new Float32Array(this.vocabSize).fill(OUT_BIAS_LOGIT);
      for (const token of this.biasSet(prompt)) {
        cached[token] = IN_BIAS_LOGIT;
      }
      this.baseCache.set(prompt, cached);
    }
    return cached;
  }

  logitsRow(prompt: string, lastToken: number | null): Float32Array {
    const base = this.base(prompt);
    const bigramRow = this.bigram[lastToken === null ? this.vocabSize : lastToken];
    const row = new Float32Array(this.vocabSize);
    for (let token = 0; token < this.vocabSize; token++) {
      row[token] = Math.fround(base[token] + Math.fround(BIGRAM_WEIGHT * bigramRow[token]));
    }
    return row;
  }

  newContext(prompt: string): ModelContext {
    const model = this;
    let lastFrame: number[] | null = null;
    return {
      append(frames: number[][]): void {
        if (frames.length > 0) {
          lastFrame = frames[frames.length - 1];
        }
      },
      logits(): Float32Array[] {
        const rows: Float32Array[] = [];
        for (let channel = 0; channel < model.channels; channel++) {
          rows.push(model.logitsRow(prompt, lastFrame === null ? null : lastFrame[channel]));
        }
        return rows;
      },
      free(): void {
        lastFrame = null;
      },
    };
  }

  decode(frames: number[][]): DecodedAudio {
    const perFrame = Math.round(SAMPLE_RATE / this.frameRate);
    const samples = new Float32Array(frames.length * perFrame);
    for (let index = 0; index < frames.length; index++) {
      for (const token of frames[index]) {
        const frequency = 110 * 2 ** (token / 12);
        for (let n = 0; n < perFrame; n++) {
          samples[index * perFrame + n] +=
            (0.4 * Math.sin((2 * Math.PI * frequency * n) / SAMPLE_RATE)) / frames[index].length;
        }
      }
    }
    return { samples, sampleRate: SAMPLE_RATE };
  }
}
