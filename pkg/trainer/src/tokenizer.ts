/**
 * Fixed char-level tokenizer: printable ASCII plus control ids.
 * No fitting step, so any two runs agree on the vocabulary.
 */

export const PAD = 0;
export const BOS = 1;
export const EOS = 2;
export const UNK = 3;

const FIRST_CHAR = 32; // space
const LAST_CHAR = 126; // tilde
const OFFSET = 4;

export const VOCAB_SIZE = OFFSET + (LAST_CHAR - FIRST_CHAR + 1) + 1; // +1 for newline

const NEWLINE_ID = VOCAB_SIZE - 1;

export function encodeChar(ch: string): number {
  const code = ch.charCodeAt(0);
  if (ch === "\n") return NEWLINE_ID;
  if (code >= FIRST_CHAR && code <= LAST_CHAR) return OFFSET + (code - FIRST_CHAR);
  return UNK;
}

export function encode(text: string, maxLen: number): number[] {
  const ids: number[] = [];
  for (const ch of text) {
    if (ids.length >= maxLen) break;
    ids.push(encodeChar(ch));
  }
  return ids;
}

export function decodeId(id: number): string {
  if (id === NEWLINE_ID) return "\n";
  if (id >= OFFSET && id < OFFSET + (LAST_CHAR - FIRST_CHAR + 1)) {
    return String.fromCharCode(FIRST_CHAR + id - OFFSET);
  }
  return ""; // control ids render as nothing
}

export function decode(ids: number[]): string {
  let out = "";
  for (const id of ids) {
    if (id === EOS) break;
    out += decodeId(id);
  }
  return out;
}
