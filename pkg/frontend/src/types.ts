/**
 * Typed contract for the medct service API.
 *
 * Offsets (`start`, `end`) are Unicode code point offsets into the text the
 * request carried, NOT UTF-16 indices. All conversion happens in unicode.ts;
 * nothing in the console recomputes scores, offsets, or concept ids.
 */

export type HierarchyName = "body" | "procedure" | "finding";

export interface Candidate {
  concept_id: string;
  score: number;
}

export interface LinkedEntity {
  start: number;
  end: number;
  hierarchy: HierarchyName | null;
  candidates: Candidate[];
  source: "dictionary" | "embedding";
}

export interface LinkResponse {
  entities: LinkedEntity[];
}

export interface QueryConcept {
  start: number;
  end: number;
  mention: string;
  concept_id: string;
  hierarchy: HierarchyName | null;
}

export interface SearchResult {
  note_id: string;
  score: number;
  matched_concepts: string[];
  snippet: string;
}

export interface SearchResponse {
  results: SearchResult[];
  query_concepts: QueryConcept[];
}

export interface ConceptSynonym {
  lang: string;
  term: string;
}

export interface ConceptNeighbor {
  type_id: string;
  concept_id: string;
  fsn: string;
  hierarchy: HierarchyName;
}

export interface ConceptRecord {
  concept_id: string;
  hierarchy: HierarchyName;
  fsn: string;
  synonyms: ConceptSynonym[];
  neighbors: { out: ConceptNeighbor[]; in: ConceptNeighbor[] };
}

export interface ApiError {
  error: string;
}

export type SearchMode = "sparse" | "hybrid_boost" | "concept_filter";

/** Fixed hierarchy color scheme: green body, blue procedure, red finding. */
export const HIERARCHY_COLORS: Record<HierarchyName, string> = {
  body: "green",
  procedure: "blue",
  finding: "red",
};
