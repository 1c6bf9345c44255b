/**
 * Shape-level conformance: replay the engine's frozen golden transcript
 * (requests only) against this server and require every exchange to
 * succeed with the right shapes. Values differ between models; ops and
 * shapes must not.
 */

import { existsSync, readFileSync } from "node:fs";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import { ProtocolServer } from "../src/server.js";
import { StubModel } from "../src/stub.js";

const TRANSCRIPT = join(__dirname, "..", "..", "tests", "data", "golden_transcript.txt");

describe("golden transcript replay", () => {
  it.skipIf(!existsSync(TRANSCRIPT))("completes without protocol errors", async () => {
    const requests = readFileSync(TRANSCRIPT, "utf-8")
      .split("\n")
      .filter((line) => line.startsWith(">"))
      .map((line) => JSON.parse(line.slice(1)));
    expect(requests.length).toBeGreaterThan(100);

    // The transcript was recorded against a V=64, C=1, 50 fps backend.
    const server = new ProtocolServer(new StubModel({ vocabSize: 64, channels: 1, frameRate: 50 }));
    let logitsReplies = 0;
    for (const request of requests) {
      const reply = await server.handleLine(JSON.stringify(request));
      expect(reply.ok, `op ${request.op} failed: ${JSON.stringify(reply)}`).toBe(true);
      expect(reply.id).toBe(request.id);
      if (request.op === "logits") {
        const rows = (reply as any).logits;
        expect(rows).toHaveLength(1);
        expect(rows[0]).toHaveLength(64);
        logitsReplies += 1;
      }
      if (request.op === "handshake") {
        expect((reply as any).vocab_size).toBe(64);
        expect((reply as any).channels).toBe(1);
        expect((reply as any).frame_rate).toBe(50);
      }
    }
    expect(logitsReplies).toBeGreaterThan(100);
  });
});
