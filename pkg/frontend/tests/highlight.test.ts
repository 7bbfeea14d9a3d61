/** Offset-correctness properties: CJK, astral characters, escaping. */

import { describe, expect, test } from "vitest";

import { buildAnnotatedQueryParts, annotatedQueryText } from "../src/annotatedQuery.js";
import { segmentHighlights, reassemble, type EntitySegment } from "../src/highlight.js";
import { escapeHtml, renderSegments } from "../src/render.js";
import { codePointLength, sliceByCodePoints } from "../src/unicode.js";
import type { LinkedEntity } from "../src/types.js";

function entity(start: number, end: number, hierarchy: LinkedEntity["hierarchy"]): LinkedEntity {
  return { start, end, hierarchy, candidates: [{ concept_id: "123456", score: 1 }], source: "embedding" };
}

describe("code point slicing", () => {
  test("astral characters count as one", () => {
    const text = "𝕏光检查";
    expect(text.length).toBe(5); // UTF-16 units
    expect(codePointLength(text)).toBe(4); // code points
    expect(sliceByCodePoints(text, 1, 3)).toBe("光检");
  });

  test("highlight boundaries never split an astral character", () => {
    const text = "见𝕏光片示肺部感染。";
    // API offsets are code points: 肺部感染 starts after 见𝕏光片示 (5 code points).
    const segments = segmentHighlights(text, [entity(5, 9, "finding")]);
    expect(reassemble(segments)).toBe(text);
    const marked = segments.find((s): s is EntitySegment => s.kind === "entity");
    expect(marked!.text).toBe("肺部感染");
  });

  test("CJK text round-trips through segmentation", () => {
    const text = "患者青霉素过敏。";
    const segments = segmentHighlights(text, [entity(2, 7, "finding")]);
    expect(segments.map((s) => s.text)).toEqual(["患者", "青霉素过敏", "。"]);
  });
});

describe("segmentation defenses", () => {
  test("overlapping spans collapse to non-overlapping rendering", () => {
    const text = "abcdefgh";
    const segments = segmentHighlights(text, [entity(0, 4, "body"), entity(2, 6, "finding")]);
    const marks = segments.filter((s) => s.kind === "entity");
    expect(marks).toHaveLength(1);
    expect(reassemble(segments)).toBe(text);
  });

  test("out-of-bounds spans are dropped, text preserved", () => {
    const text = "short";
    const segments = segmentHighlights(text, [entity(3, 99, "body")]);
    expect(segments.every((s) => s.kind === "plain")).toBe(true);
    expect(reassemble(segments)).toBe(text);
  });

  test("empty entity list yields a single plain segment", () => {
    expect(segmentHighlights("text", [])).toEqual([{ kind: "plain", text: "text" }]);
  });
});

describe("rendering", () => {
  test("html in note text is escaped", () => {
    const text = "<script>alert(1)</script>青霉素过敏";
    const segments = segmentHighlights(text, [entity(25, 30, "finding")]);
    const html = renderSegments(segments);
    expect(html).not.toContain("<script>");
    expect(html).toContain("&lt;script&gt;");
    expect(html).toContain('<mark class="hl hl-finding"');
  });

  test("escapeHtml covers the five specials", () => {
    expect(escapeHtml(`&<>"'`)).toBe("&amp;&lt;&gt;&quot;&#39;");
  });

  test("annotated query with no concepts is plain text", () => {
    const parts = buildAnnotatedQueryParts("hello", []);
    expect(annotatedQueryText(parts)).toBe("hello");
  });
});
