// Typed client for the paperdeck session service. Every response is
// validated with zod before it reaches the UI, so a contract drift fails
// loudly instead of rendering garbage.

import { z } from "zod";

export const sessionCreatedSchema = z.object({
  session_id: z.string(),
  state: z.string(),
});

export const sessionStateSchema = z.object({
  session_id: z.string(),
  state: z.string(),
  theme_name: z.string(),
  created: z.string(),
  updated: z.string(),
  error: z.string(),
  revision: z.number().int(),
  artifacts: z.record(z.string(), z.boolean()),
});

export const stepOutcomeSchema = z.object({
  action: z.string(),
  description: z.string(),
  ok: z.boolean(),
  detail: z.string(),
});

export const editResponseSchema = z.object({
  ok: z.boolean(),
  steps: z.array(stepOutcomeSchema),
  failed_step: z.number().int().nullable(),
  error: z.string(),
  rolled_back: z.boolean(),
  revision: z.number().int(),
});

export const historyEntrySchema = z.object({
  request: z.string(),
  ok: z.boolean(),
  timestamp: z.number(),
  revision: z.number().int(),
  error: z.string(),
  actions: z.array(z.object({ action: z.string(), description: z.string() })),
});

export const historyResponseSchema = z.object({
  session_id: z.string(),
  entries: z.array(historyEntrySchema),
});

export const flatDeckSchema = z.object({
  slides: z.array(
    z.object({ slide_number: z.number().int(), text: z.string() }),
  ),
});

export type SessionCreated = z.infer<typeof sessionCreatedSchema>;
export type SessionState = z.infer<typeof sessionStateSchema>;
export type EditResponse = z.infer<typeof editResponseSchema>;
export type HistoryEntry = z.infer<typeof historyEntrySchema>;
export type FlatDeck = z.infer<typeof flatDeckSchema>;
export type FlatSlide = FlatDeck["slides"][number];

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function requestJson(
  url: string,
  init?: RequestInit,
): Promise<unknown> {
  const response = await fetch(url, init);
  if (!response.ok) {
    let message = `HTTP ${response.status}`;
    try {
      const body: unknown = await response.json();
      if (body && typeof body === "object" && "detail" in body) {
        const detail = (body as { detail: unknown }).detail;
        message =
          typeof detail === "string" ? detail : JSON.stringify(detail);
      }
    } catch {
      // keep the generic status message for non-JSON error bodies
    }
    throw new ApiError(message, response.status);
  }
  return response.json();
}

export class DeckApi {
  constructor(private readonly baseUrl: string) {}

  async createSession(file: File, theme: string): Promise<SessionCreated> {
    const form = new FormData();
    form.append("file", file);
    if (theme.trim()) {
      form.append("theme", theme.trim());
    }
    const payload = await requestJson(`${this.baseUrl}/sessions`, {
      method: "POST",
      body: form,
    });
    return sessionCreatedSchema.parse(payload);
  }

  async sessionState(sessionId: string): Promise<SessionState> {
    const payload = await requestJson(`${this.baseUrl}/sessions/${sessionId}`);
    return sessionStateSchema.parse(payload);
  }

  async submitEdit(sessionId: string, request: string): Promise<EditResponse> {
    const payload = await requestJson(
      `${this.baseUrl}/sessions/${sessionId}/edits`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ request }),
      },
    );
    return editResponseSchema.parse(payload);
  }

  async liveSlides(sessionId: string): Promise<FlatDeck> {
    const payload = await requestJson(
      `${this.baseUrl}/sessions/${sessionId}/slides.json`,
    );
    return flatDeckSchema.parse(payload);
  }

  async revisionSlides(sessionId: string, revision: number): Promise<FlatDeck> {
    const payload = await requestJson(
      `${this.baseUrl}/sessions/${sessionId}/revisions/${revision}/slides.json`,
    );
    return flatDeckSchema.parse(payload);
  }

  async history(sessionId: string): Promise<HistoryEntry[]> {
    const payload = await requestJson(
      `${this.baseUrl}/sessions/${sessionId}/history`,
    );
    return historyResponseSchema.parse(payload).entries;
  }

  livePdfUrl(sessionId: string): string {
    return `${this.baseUrl}/sessions/${sessionId}/deck.pdf`;
  }

  revisionPdfUrl(sessionId: string, revision: number): string {
    return `${this.baseUrl}/sessions/${sessionId}/revisions/${revision}/deck.pdf`;
  }
}
