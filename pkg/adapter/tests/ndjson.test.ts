import { describe, expect, it } from "vitest";

import { lines } from "../src/ndjson.js";

async function* chunks(parts: string[]) {
  for (const part of parts) {
    yield Buffer.from(part, "utf-8");
  }
}

async function collect(parts: string[]): Promise<string[]> {
  const out: string[] = [];
  for await (const line of lines(chunks(parts))) {
    out.push(line);
  }
  return out;
}

describe("line framing", () => {
  it("splits complete lines", async () => {
    expect(await collect(['{"a":1}\n{"b":2}\n'])).toEqual(['{"a":1}', '{"b":2}']);
  });

  it("reassembles lines split across chunks", async () => {
    expect(await collect(['{"a"', ":1}\n{", '"b":2}\n'])).toEqual(['{"a":1}', '{"b":2}']);
  });

  it("skips blank lines and flushes a trailing partial", async () => {
    expect(await collect(["\n\n", '{"a":1}\n', "\n", '{"b":2}'])).toEqual([
      '{"a":1}',
      '{"b":2}',
    ]);
  });

  it("handles multibyte text split mid-line", async () => {
    expect(await collect(['{"p":"al', 'pha ♫"}\n'])).toEqual(['{"p":"alpha ♫"}']);
  });
});
