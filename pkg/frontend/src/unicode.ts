/**
 * Code point slicing.
 *
 * The API reports offsets in Unicode code points; JavaScript strings index
 * by UTF-16 units, so astral characters (e.g. mathematical letters, rare
 * ideographs) occupy two units. Slicing through the code point array keeps
 * highlight boundaries on character boundaries.
 */

export function codePoints(text: string): string[] {
  return Array.from(text);
}

/** Substring by code point offsets (start inclusive, end exclusive). */
export function sliceByCodePoints(text: string, start: number, end: number): string {
  return codePoints(text).slice(start, end).join("");
}

export function codePointLength(text: string): number {
  return codePoints(text).length;
}
