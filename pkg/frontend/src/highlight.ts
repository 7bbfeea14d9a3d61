/**
 * Pure segmentation of note text into plain and highlighted runs.
 *
 * The segments mirror the API's entities verbatim: offsets, hierarchy, and
 * the top candidate are carried through untouched. Defensive rule: a span
 * starting before the previous span's end is skipped, so rendered spans
 * can never overlap even against a misbehaving backend.
 */

import type { HierarchyName, LinkedEntity } from "./types.js";
import { codePoints } from "./unicode.js";

export interface PlainSegment {
  kind: "plain";
  text: string;
}

export interface EntitySegment {
  kind: "entity";
  text: string;
  start: number;
  end: number;
  hierarchy: HierarchyName | null;
  conceptId: string | null;
  score: number | null;
  source: string;
}

export type Segment = PlainSegment | EntitySegment;

export function segmentHighlights(text: string, entities: LinkedEntity[]): Segment[] {
  const points = codePoints(text);
  const ordered = [...entities].sort((a, b) => a.start - b.start || a.end - b.end);
  const segments: Segment[] = [];
  let cursor = 0;
  for (const entity of ordered) {
    if (entity.start < cursor || entity.end > points.length || entity.start >= entity.end) {
      continue;
    }
    if (entity.start > cursor) {
      segments.push({ kind: "plain", text: points.slice(cursor, entity.start).join("") });
    }
    const top = entity.candidates[0];
    segments.push({
      kind: "entity",
      text: points.slice(entity.start, entity.end).join(""),
      start: entity.start,
      end: entity.end,
      hierarchy: entity.hierarchy,
      conceptId: top ? top.concept_id : null,
      score: top ? top.score : null,
      source: entity.source,
    });
    cursor = entity.end;
  }
  if (cursor < points.length) {
    segments.push({ kind: "plain", text: points.slice(cursor).join("") });
  }
  return segments;
}

/** Concatenating the segment texts must reproduce the input exactly. */
export function reassemble(segments: Segment[]): string {
  return segments.map((segment) => segment.text).join("");
}
