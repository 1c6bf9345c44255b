/** Newline-delimited framing over byte streams. */

export async function* lines(stream: AsyncIterable<Buffer | string>): AsyncGenerator<string> {
  let pending = "";
  for await (const chunk of stream) {
    pending += typeof chunk === "string" ? chunk : chunk.toString("utf-8");
    let index = pending.indexOf("\n");
    while (index !== -1) {
      const line = pending.slice(0, index);
      pending = pending.slice(index + 1);
      if (line.trim().length > 0) {
        yield line;
      }
      index = pending.indexOf("\n");
    }
  }
  if (pending.trim().length > 0) {
    yield pending;
  }
}

export function writeLine(stream: NodeJS.WritableStream, value: unknown): void {
  stream.write(JSON.stringify(value) + "\n");
}
