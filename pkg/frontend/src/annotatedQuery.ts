/**
 * Inline-annotated query parts: each linked mention is followed by its
 * concept id in brackets, e.g. 脑梗死[432504007]后合并肺部感染[128601007].
 */

import type { HierarchyName, QueryConcept } from "./types.js";
import { codePoints } from "./unicode.js";

export interface QueryPart {
  kind: "plain" | "mention";
  text: string;
  conceptId?: string;
  hierarchy?: HierarchyName | null;
}

export function buildAnnotatedQueryParts(text: string, concepts: QueryConcept[]): QueryPart[] {
  const points = codePoints(text);
  const ordered = [...concepts].sort((a, b) => a.start - b.start || a.end - b.end);
  const parts: QueryPart[] = [];
  let cursor = 0;
  for (const concept of ordered) {
    if (concept.start < cursor || concept.end > points.length || concept.start >= concept.end) {
      continue;
    }
    if (concept.start > cursor) {
      parts.push({ kind: "plain", text: points.slice(cursor, concept.start).join("") });
    }
    parts.push({
      kind: "mention",
      text: points.slice(concept.start, concept.end).join(""),
      conceptId: concept.concept_id,
      hierarchy: concept.hierarchy,
    });
    cursor = concept.end;
  }
  if (cursor < points.length) {
    parts.push({ kind: "plain", text: points.slice(cursor).join("") });
  }
  return parts;
}

/** Plain-text rendering, mention[concept_id] inline. */
export function annotatedQueryText(parts: QueryPart[]): string {
  return parts
    .map((part) => (part.kind === "mention" ? `${part.text}[${part.conceptId}]` : part.text))
    .join("");
}
