/**
 * Binding for a pretrained text-to-music token model via
 * @huggingface/transformers (optional dependency; model weights must be
 * available locally). Capabilities are read from the loaded checkpoint's
 * configuration, never hardcoded: channels = number of codebooks,
 * vocabSize = codebook size, frameRate = the codec's token frame rate.
 *
 * Alignment: the underlying decoder interleaves codebooks with a delay
 * pattern (codebook k lags k positions). The adapter keeps the engine's
 * frame-aligned view: appended frames are re-delayed internally, and the
 * next-frame logits for codebook k are gathered at sequence position
 * frame+k, with pad placeholders standing in for not-yet-known positions,
 * which matches how the delayed decode behaves at the sequence edge.
 *
 * Guidance: classifier-free guidance is applied here, not in the engine:
 * logits = uncond + scale * (cond - uncond), with the unconditional
 * branch driven by an empty prompt encoding. The engine's two-prompt
 * blend therefore stays a pure mixture of already-guided distributions.
 *
 * Determinism is best-effort: the ONNX runtime does not guarantee
 * bit-identical results across builds or thread counts.
 */

import type { DecodedAudio, ModelContext, ModelInfo, TokenModel } from "./model.js";

export interface AdapterConfig {
  modelId: string;
  device?: string;
  defaultGuidanceScale?: number;
  maxContextSeconds?: number;
}

interface LoadedModel {
  tokenizer: any;
  model: any;
  padTokenId: number;
  decoderStartTokenId: number;
}

export class MusicGenModel implements TokenModel {
  private constructor(
    private readonly loaded: LoadedModel,
    private readonly config: AdapterConfig,
    private readonly dims: { vocabSize: number; channels: number; frameRate: number },
    private readonly maxContextFrames: number,
  ) {}

  static async load(config: AdapterConfig): Promise<MusicGenModel> {
    let transformers: any;
    try {
      transformers = await import("@huggingface/transformers");
    } catch (error) {
      throw new Error(
        "@huggingface/transformers is not installed; install it (and fetch model " +
          `weights for '${config.modelId}') or run with --stub. (${error})`,
      );
    }
    const { AutoTokenizer, MusicgenForConditionalGeneration } = transformers;
    let tokenizer: any;
    let model: any;
    try {
      tokenizer = await AutoTokenizer.from_pretrained(config.modelId);
      model = await MusicgenForConditionalGeneration.from_pretrained(config.modelId, {
        dtype: "fp32",
        device: config.device,
      });
    } catch (error) {
      throw new Error(`cannot load model '${config.modelId}': ${error}`);
    }

    const decoderConfig = model.config?.decoder ?? {};
    const audioConfig = model.config?.audio_encoder ?? {};
    const vocabSize = Number(decoderConfig.vocab_size);
    const channels = Number(decoderConfig.num_codebooks);
    const frameRate = Number(audioConfig.frame_rate);
    if (!(vocabSize >= 2) || !(channels >= 1) || !(frameRate > 0)) {
      throw new Error(
        `model '${config.modelId}' did not declare usable dimensions ` +
          `(vocab=${vocabSize}, codebooks=${channels}, frame_rate=${frameRate})`,
      );
    }
    const maxSeconds = config.maxContextSeconds ?? 30;
    return new MusicGenModel(
      {
        tokenizer,
        model,
        padTokenId: Number(decoderConfig.pad_token_id ?? vocabSize),
        decoderStartTokenId: Number(
          model.config?.decoder_start_token_id ?? decoderConfig.bos_token_id ?? vocabSize,
        ),
      },
      config,
      { vocabSize, channels, frameRate },
      Math.round(maxSeconds * frameRate),
    );
  }

  info(): ModelInfo {
    return {
      name: `musicgen:${this.config.modelId}`,
      vocabSize: this.dims.vocabSize,
      channels: this.dims.channels,
      frameRate: this.dims.frameRate,
      maxContextFrames: this.maxContextFrames,
      supportsDecode: true,
    };
  }

  async newContext(prompt: string, guidanceScale?: number): Promise<ModelContext> {
    const { tokenizer, model } = this.loaded;
    const scale = guidanceScale ?? this.config.defaultGuidanceScale ?? 3.0;
    const conditional = tokenizer(prompt);
    const unconditional = tokenizer("");
    const history: number[][] = [];
    const self = this;

    return {
      append(frames: number[][]): void {
        history.push(...frames);
      },
      async logits(): Promise<Float32Array[]> {
        const cond = await self.forwardLogits(model, conditional, history);
        if (scale === 1.0) {
          return cond;
        }
        const uncond = await self.forwardLogits(model, unconditional, history);
        const rows: Float32Array[] = [];
        for (let channel = 0; channel < self.dims.channels; channel++) {
          const row = new Float32Array(self.dims.vocabSize);
          for (let token = 0; token < self.dims.vocabSize; token++) {
            row[token] =
              uncond[channel][token] + scale * (cond[channel][token] - uncond[channel][token]);
          }
          rows.push(row);
        }
        return rows;
      },
      free(): void {
        history.length = 0;
      },
    };
  }

  /**
   * One teacher-forced decoder pass over the re-delayed history; returns
   * the next frame's logits, one aligned row per codebook.
   */
  private async forwardLogits(
    model: any,
    textInputs: any,
    history: number[][],
  ): Promise<Float32Array[]> {
    const { vocabSize, channels } = this.dims;
    const { padTokenId, decoderStartTokenId } = this.loaded;
    const nextFrame = history.length;
    // Position frame+k carries codebook k's token for `frame`; the row
    // for the frame we are about to generate sits at nextFrame+k per
    // codebook, so the sequence must span nextFrame+channels positions
    // (plus the leading decoder start token).
    const seqLen = 1 + nextFrame + channels;
    const ids = new BigInt64Array(channels * seqLen);
    for (let k = 0; k < channels; k++) {
      ids[k * seqLen] = BigInt(decoderStartTokenId);
      for (let position = 1; position < seqLen; position++) {
        const frame = position - 1 - k;
        const value =
          frame >= 0 && frame < history.length ? history[frame][k] : padTokenId;
        ids[k * seqLen + position] = BigInt(value);
      }
    }
    const transformers: any = await import("@huggingface/transformers");
    const decoderInputIds = new transformers.Tensor("int64", ids, [channels, seqLen]);
    const output = await model({
      input_ids: textInputs.input_ids,
      attention_mask: textInputs.attention_mask,
      decoder_input_ids: decoderInputIds,
    });
    // output.logits: [channels, seqLen, vocabSize]; codebook k's
    // next-frame row lives at position nextFrame + k (0-based after the
    // start token, hence +0 here because logits at position p predict
    // position p+1's token).
    const logits = output.logits;
    const rows: Float32Array[] = [];
    for (let k = 0; k < channels; k++) {
      const position = nextFrame + k;
      const row = new Float32Array(vocabSize);
      const flat = logits.data as Float32Array;
      const offset = (k * seqLen + position) * vocabSize;
      row.set(flat.subarray(offset, offset + vocabSize));
      rows.push(row);
    }
    return rows;
  }

  async decode(frames: number[][]): Promise<DecodedAudio> {
    const { model } = this.loaded;
    const { channels } = this.dims;
    const transformers: any = await import("@huggingface/transformers");
    const ids = new BigInt64Array(frames.length * channels);
    for (let frame = 0; frame < frames.length; frame++) {
      for (let k = 0; k < channels; k++) {
        // codec layout: [batch=1, chunks=1, codebooks, frames]
        ids[k * frames.length + frame] = BigInt(frames[frame][k]);
      }
    }
    const audioCodes = new transformers.Tensor("int64", ids, [1, 1, channels, frames.length]);
    if (typeof model.encodec_decode !== "function") {
      throw new Error("loaded model exposes no codec decoder");
    }
    const decoded = await model.encodec_decode(audioCodes);
    const sampleRate = Number(model.config?.audio_encoder?.sampling_rate ?? 32000);
    return { samples: Float32Array.from(decoded.data as Float32Array), sampleRate };
  }
}
