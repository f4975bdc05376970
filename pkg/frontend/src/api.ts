// Typed client for the review service HTTP API (same origin).

import type {
  AggregatedRating,
  DialogueDetail,
  DialoguePage,
  GoldItemWire,
  GoldRecord,
  Ontology,
  RatingPayload,
} from "./types.js";

export class ApiError extends Error {
  code: string;
  status: number;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.code = code;
    this.status = status;
  }
}

let apiBase = "";

/** Point the client at another origin (tests, reverse-proxied deployments). */
export function setApiBase(base: string): void {
  apiBase = base.replace(/\/$/, "");
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const response = await fetch(apiBase + path, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  const body = await response.json().catch(() => ({}));
  if (!response.ok) {
    const detail = (body as { detail?: { error?: string; message?: string } }).detail ?? {};
    throw new ApiError(response.status, detail.error ?? "HTTP_ERROR",
      detail.message ?? `HTTP ${response.status}`);
  }
  return body as T;
}

export function listDialogues(split: string, page = 1, pageSize = 100): Promise<DialoguePage> {
  const params = new URLSearchParams({ split, page: String(page), page_size: String(pageSize) });
  return request(`/api/dialogues?${params}`);
}

export function getDialogue(id: string): Promise<DialogueDetail> {
  return request(`/api/dialogues/${encodeURIComponent(id)}`);
}

export function putRating(dialogueId: string, payload: RatingPayload): Promise<unknown> {
  return request(`/api/ratings/${encodeURIComponent(dialogueId)}`, {
    method: "PUT",
    body: JSON.stringify(payload),
  });
}

export function getAggregate(dialogueId: string): Promise<AggregatedRating> {
  return request(`/api/aggregate/${encodeURIComponent(dialogueId)}`);
}

export function putGold(dialogueId: string, turn: number, editorId: string,
                        items: GoldItemWire[]): Promise<GoldRecord> {
  return request(`/api/gold/${encodeURIComponent(dialogueId)}/${turn}`, {
    method: "PUT",
    body: JSON.stringify({ editor_id: editorId, items }),
  });
}

export function postSkip(dialogueId: string, raterId: string): Promise<unknown> {
  return request(`/api/skip/${encodeURIComponent(dialogueId)}`, {
    method: "POST",
    body: JSON.stringify({ rater_id: raterId }),
  });
}

export function getOntology(): Promise<Ontology> {
  return request("/api/ontology");
}
