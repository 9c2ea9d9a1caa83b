import { afterEach, describe, expect, it, vi } from "vitest";

import {
  ApiError,
  DeckApi,
  editResponseSchema,
  flatDeckSchema,
  historyResponseSchema,
  sessionStateSchema,
} from "../src/api";

const goodState = {
  session_id: "s1",
  state: "ready",
  theme_name: "Madrid",
  created: "2026-08-16T10:00:00",
  updated: "2026-08-16T10:00:05",
  error: "",
  revision: 2,
  artifacts: { "deck.pdf": true, "slides.json": true },
};

const goodEdit = {
  ok: false,
  steps: [{ action: "delete", description: "drop 4", ok: false, detail: "x" }],
  failed_step: 0,
  error: "x",
  rolled_back: true,
  revision: 1,
};

describe("response schemas", () => {
  it("accepts well-formed payloads", () => {
    expect(sessionStateSchema.parse(goodState).revision).toBe(2);
    expect(editResponseSchema.parse(goodEdit).failed_step).toBe(0);
    expect(
      editResponseSchema.parse({ ...goodEdit, ok: true, failed_step: null })
        .failed_step,
    ).toBeNull();
    expect(flatDeckSchema.parse({ slides: [] }).slides).toEqual([]);
    const history = historyResponseSchema.parse({
      session_id: "s1",
      entries: [
        {
          request: "delete slide 4",
          ok: true,
          timestamp: 1755338000.25,
          revision: 1,
          error: "",
          actions: [{ action: "delete", description: "drop frame 4" }],
        },
      ],
    });
    expect(history.entries[0]?.timestamp).toBeCloseTo(1755338000.25);
  });

  it("rejects payloads that drift from the service contract", () => {
    expect(() =>
      sessionStateSchema.parse({ ...goodState, revision: 1.5 }),
    ).toThrow();
    const { error: _dropped, ...missingError } = goodState;
    expect(() => sessionStateSchema.parse(missingError)).toThrow();
    expect(() =>
      editResponseSchema.parse({ ...goodEdit, failed_step: "0" }),
    ).toThrow();
    expect(() =>
      flatDeckSchema.parse({ slides: [{ slide_number: "3", text: "t" }] }),
    ).toThrow();
  });
});

describe("DeckApi error handling", () => {
  afterEach(() => {
    vi.unstubAllGlobals();
  });

  it("raises ApiError with the service's detail message", async () => {
    vi.stubGlobal(
      "fetch",
      async () =>
        new Response(JSON.stringify({ detail: "no revision 9" }), {
          status: 404,
          headers: { "Content-Type": "application/json" },
        }),
    );
    const api = new DeckApi("http://test");
    const err = await api.revisionSlides("s1", 9).catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).message).toBe("no revision 9");
    expect((err as ApiError).status).toBe(404);
  });

  it("falls back to the HTTP status for non-JSON error bodies", async () => {
    vi.stubGlobal(
      "fetch",
      async () => new Response("boom", { status: 502 }),
    );
    const api = new DeckApi("http://test");
    const err = await api.sessionState("s1").catch((e: unknown) => e);
    expect((err as ApiError).message).toBe("HTTP 502");
  });

  it("rejects a success response whose body has drifted", async () => {
    vi.stubGlobal(
      "fetch",
      async () =>
        new Response(JSON.stringify({ slides: [{ slide_number: "1" }] }), {
          status: 200,
          headers: { "Content-Type": "application/json" },
        }),
    );
    const api = new DeckApi("http://test");
    await expect(api.liveSlides("s1")).rejects.toThrow();
  });
});
