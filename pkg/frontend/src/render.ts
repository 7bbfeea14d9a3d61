/**
 * HTML string rendering for segments and query parts. Everything passes
 * through escapeHtml; entity metadata rides on data- attributes so the app
 * can delegate clicks without re-parsing.
 */

import type { QueryPart } from "./annotatedQuery.js";
import type { Segment } from "./highlight.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function renderSegments(segments: Segment[]): string {
  return segments
    .map((segment) => {
      if (segment.kind === "plain") {
        return escapeHtml(segment.text);
      }
      const hierarchy = segment.hierarchy ?? "unknown";
      const concept = segment.conceptId ? ` data-concept-id="${escapeHtml(segment.conceptId)}"` : "";
      return (
        `<mark class="hl hl-${hierarchy}"${concept}` +
        ` data-start="${segment.start}" data-end="${segment.end}">` +
        escapeHtml(segment.text) +
        `</mark>`
      );
    })
    .join("");
}

export function renderQueryParts(parts: QueryPart[]): string {
  return parts
    .map((part) => {
      if (part.kind === "plain") {
        return escapeHtml(part.text);
      }
      const hierarchy = part.hierarchy ?? "unknown";
      return (
        `<span class="q-mention hl-${hierarchy}">${escapeHtml(part.text)}</span>` +
        `<span class="q-concept">[${escapeHtml(part.conceptId ?? "")}]</span>`
      );
    })
    .join("");
}
