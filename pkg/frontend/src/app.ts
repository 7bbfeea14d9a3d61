/**
 * Console wiring: a search view with mode toggle and annotated queries, and
 * an entity-linking inspector with color-coded highlights.
 *
 * The console performs no scoring or offset arithmetic of its own; it
 * renders API responses verbatim. One in-flight request per input box:
 * newer submissions abort the previous request, and a monotonically
 * increasing sequence number discards any stale response that still lands.
 */

import { MedctApi, ApiRequestError } from "./api.js";
import { buildAnnotatedQueryParts } from "./annotatedQuery.js";
import { segmentHighlights } from "./highlight.js";
import { renderQueryParts, renderSegments, escapeHtml } from "./render.js";
import { SAMPLE_QUERIES } from "./queries.js";
import type { ConceptRecord, SearchMode } from "./types.js";

const api = new MedctApi();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function showBanner(message: string): void {
  const banner = el<HTMLDivElement>("banner");
  banner.textContent = message;
  banner.hidden = false;
  window.setTimeout(() => {
    banner.hidden = true;
  }, 6000);
}

function describeError(error: unknown): string {
  if (error instanceof ApiRequestError) {
    return error.status === 503 ? "embedder unavailable" : error.message;
  }
  return error instanceof Error ? error.message : String(error);
}

// --- search view ---------------------------------------------------------

let searchSeq = 0;
let searchAbort: AbortController | null = null;

async function runSearch(): Promise<void> {
  const input = el<HTMLInputElement>("search-input");
  const q = input.value.trim();
  if (!q) {
    showBanner("enter a query first");
    return;
  }
  const mode = el<HTMLSelectElement>("mode-select").value as SearchMode;
  const seq = ++searchSeq;
  searchAbort?.abort();
  searchAbort = new AbortController();
  try {
    const response = await api.search(q, mode, 10, searchAbort.signal);
    if (seq !== searchSeq) return; // stale
    el<HTMLDivElement>("annotated-query").innerHTML = renderQueryParts(
      buildAnnotatedQueryParts(q, response.query_concepts),
    );
    const rows = response.results.map((result) => {
      const chips = result.matched_concepts
        .map((c) => `<button class="chip" data-concept-id="${escapeHtml(c)}">${escapeHtml(c)}</button>`)
        .join(" ");
      return (
        `<li class="result">` +
        `<div class="result-head"><span class="note-id">${escapeHtml(result.note_id)}</span>` +
        `<span class="score">${result.score.toFixed(4)}</span></div>` +
        `<div class="snippet">${escapeHtml(result.snippet)}</div>` +
        `<div class="chips">${chips}</div>` +
        `</li>`
      );
    });
    el<HTMLUListElement>("results").innerHTML =
      rows.join("") || `<li class="empty">no results</li>`;
  } catch (error) {
    if ((error as DOMException).name === "AbortError") return;
    if (seq !== searchSeq) return;
    showBanner(describeError(error));
  }
}

// --- inspector view --------------------------------------------------------

let linkSeq = 0;
let linkAbort: AbortController | null = null;

async function runInspect(): Promise<void> {
  const text = el<HTMLTextAreaElement>("inspect-input").value;
  const seq = ++linkSeq;
  linkAbort?.abort();
  linkAbort = new AbortController();
  try {
    const response = await api.link(text, linkAbort.signal);
    if (seq !== linkSeq) return;
    el<HTMLDivElement>("inspect-output").innerHTML = renderSegments(
      segmentHighlights(text, response.entities),
    );
  } catch (error) {
    if ((error as DOMException).name === "AbortError") return;
    if (seq !== linkSeq) return;
    showBanner(describeError(error));
  }
}

function renderConcept(record: ConceptRecord): string {
  const synonyms = record.synonyms
    .map((s) => `<li><span class="lang">${escapeHtml(s.lang)}</span> ${escapeHtml(s.term)}</li>`)
    .join("");
  const neighbor = (direction: "out" | "in") =>
    record.neighbors[direction]
      .map(
        (n) =>
          `<li>${escapeHtml(n.type_id)} → ` +
          `<button class="chip" data-concept-id="${escapeHtml(n.concept_id)}">` +
          `${escapeHtml(n.fsn)}</button></li>`,
      )
      .join("") || "<li class='empty'>none</li>";
  return (
    `<h3>${escapeHtml(record.fsn)} ` +
    `<span class="badge hl-${record.hierarchy}">${record.hierarchy}</span></h3>` +
    `<p class="concept-id">${escapeHtml(record.concept_id)}</p>` +
    `<h4>Synonyms</h4><ul>${synonyms}</ul>` +
    `<h4>Outbound</h4><ul>${neighbor("out")}</ul>` +
    `<h4>Inbound</h4><ul>${neighbor("in")}</ul>`
  );
}

async function showConcept(conceptId: string): Promise<void> {
  try {
    const record = await api.concept(conceptId);
    el<HTMLDivElement>("concept-panel").innerHTML = renderConcept(record);
  } catch (error) {
    showBanner(describeError(error));
  }
}

// --- bootstrap ------------------------------------------------------------

export function bootstrap(): void {
  const dropdown = el<HTMLSelectElement>("sample-queries");
  dropdown.innerHTML =
    `<option value="">bundled queries…</option>` +
    SAMPLE_QUERIES.map(
      (q) => `<option value="${escapeHtml(q.text)}">${q.id}. ${escapeHtml(q.textEn)}</option>`,
    ).join("");
  dropdown.addEventListener("change", () => {
    if (dropdown.value) {
      el<HTMLInputElement>("search-input").value = dropdown.value;
      void runSearch();
    }
  });

  el<HTMLFormElement>("search-form").addEventListener("submit", (event) => {
    event.preventDefault();
    void runSearch();
  });
  el<HTMLSelectElement>("mode-select").addEventListener("change", () => {
    if (el<HTMLInputElement>("search-input").value.trim()) void runSearch();
  });
  el<HTMLButtonElement>("inspect-button").addEventListener("click", () => {
    void runInspect();
  });

  // Clicks on highlighted spans and concept chips open the detail panel.
  document.addEventListener("click", (event) => {
    const target = (event.target as HTMLElement).closest<HTMLElement>("[data-concept-id]");
    if (target?.dataset.conceptId) {
      void showConcept(target.dataset.conceptId);
    }
  });
}

if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", bootstrap);
}
