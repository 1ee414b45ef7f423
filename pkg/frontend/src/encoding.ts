// Canonical JSON encoder, byte-compatible with the node's signing preimages:
// keys sorted by code point, no whitespace, integers only, UTF-8 output.
// A transaction signed in the browser must hash to the same tx id the node
// and CLI compute, so this must never drift from docs/encoding.md.

export function canonicalJson(value: unknown): string {
  if (value === null) return "null";
  switch (typeof value) {
    case "boolean":
      return value ? "true" : "false";
    case "number":
      if (!Number.isSafeInteger(value)) {
        throw new Error("only integers are canonically encodable");
      }
      return String(value);
    case "string":
      return JSON.stringify(value);
    case "object":
      break;
    default:
      throw new Error(`cannot canonically encode ${typeof value}`);
  }
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalJson).join(",") + "]";
  }
  const entries = Object.entries(value as Record<string, unknown>)
    .filter(([, item]) => item !== undefined)
    .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0));
  const body = entries
    .map(([key, item]) => JSON.stringify(key) + ":" + canonicalJson(item))
    .join(",");
  return "{" + body + "}";
}

export function canonicalBytes(value: unknown): Uint8Array {
  return new TextEncoder().encode(canonicalJson(value));
}
