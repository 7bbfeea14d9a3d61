/**
 * Typed client for the medct service.
 *
 * Base URL resolution, in order: ?api= query parameter, the
 * window.MEDCT_API_BASE global (set by a deployment script), then the
 * default local service address.
 */

import type { ConceptRecord, LinkResponse, SearchMode, SearchResponse } from "./types.js";

export const DEFAULT_API_BASE = "http://127.0.0.1:8642";

declare global {
  interface Window {
    MEDCT_API_BASE?: string;
  }
}

export function resolveApiBase(): string {
  if (typeof window === "undefined") {
    return DEFAULT_API_BASE;
  }
  const fromQuery = new URLSearchParams(window.location.search).get("api");
  return fromQuery || window.MEDCT_API_BASE || DEFAULT_API_BASE;
}

export class ApiRequestError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const response = await fetch(url, init);
  const body = await response.json().catch(() => ({}));
  if (!response.ok) {
    const message =
      typeof body === "object" && body !== null && "error" in body
        ? String((body as { error: unknown }).error)
        : `request failed with status ${response.status}`;
    throw new ApiRequestError(response.status, message);
  }
  return body as T;
}

export class MedctApi {
  constructor(private readonly base: string = resolveApiBase()) {}

  link(text: string, signal?: AbortSignal): Promise<LinkResponse> {
    return request<LinkResponse>(`${this.base}/api/link`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text }),
      signal,
    });
  }

  search(
    q: string,
    mode: SearchMode,
    topN: number,
    signal?: AbortSignal,
  ): Promise<SearchResponse> {
    const params = new URLSearchParams({ q, mode, top_n: String(topN) });
    return request<SearchResponse>(`${this.base}/api/search?${params}`, { signal });
  }

  concept(conceptId: string, signal?: AbortSignal): Promise<ConceptRecord> {
    return request<ConceptRecord>(
      `${this.base}/api/concepts/${encodeURIComponent(conceptId)}`,
      { signal },
    );
  }
}
