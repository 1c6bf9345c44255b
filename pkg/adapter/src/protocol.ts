/**
 * Wire protocol constants and message shapes.
 *
 * One JSON object per line in each direction; requests carry a unique id
 * echoed by the response. See protocol.md at the repository root for the
 * full reference.
 */

export const PROTOCOL_VERSION = "1.0";

export type ErrorCode = "capacity" | "bad_request" | "unsupported" | "internal";

export class WireError extends Error {
  constructor(
    public readonly code: ErrorCode,
    message: string,
  ) {
    super(message);
    this.name = "WireError";
  }
}

export interface WireRequest {
  id?: unknown;
  op?: unknown;
  [key: string]: unknown;
}

export interface WireReply {
  id: unknown;
  ok: boolean;
  [key: string]: unknown;
}

export function majorVersion(version: string): number {
  const major = Number.parseInt(String(version).split(".", 1)[0], 10);
  if (Number.isNaN(major)) {
    throw new WireError("bad_request", `malformed protocol version ${JSON.stringify(version)}`);
  }
  return major;
}

export function errorReply(id: unknown, code: ErrorCode, message: string): WireReply {
  return { id: id ?? null, ok: false, error: { code, message } };
}

/** Pack one logit row as base64 little-endian float32. */
export function encodeB64F32(row: Float32Array): string {
  const buffer = Buffer.alloc(row.length * 4);
  for (let i = 0; i < row.length; i++) {
    buffer.writeFloatLE(row[i], i * 4);
  }
  return buffer.toString("base64");
}
