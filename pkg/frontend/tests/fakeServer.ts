// In-memory stand-in for the paperdeck service, speaking the same JSON
// shapes over a stubbed global fetch. Decks live per revision so the
// revision endpoints behave like the real snapshot directories.

import { EditResponse, HistoryEntry } from "../src/api";

interface Held {
  promise: Promise<void>;
  release: () => void;
}

function held(): Held {
  let release!: () => void;
  const promise = new Promise<void>((resolve) => {
    release = resolve;
  });
  return { promise, release };
}

function json(payload: unknown, status = 200): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export const SESSION_ID = "fake1";

export class FakeServer {
  readonly requests: string[] = [];
  editCalls = 0;

  private decks: string[][];
  private liveRevision = 0;
  private history: HistoryEntry[] = [];
  private created = false;
  private pollCount = 0;
  private readonly pollsUntilReady: number;
  private holdNext: Held | null = null;
  private clock = 0;

  constructor(opts: { slides?: string[]; pollsUntilReady?: number } = {}) {
    this.decks = [
      opts.slides ?? ["Title", "Outline", "Methods", "Results", "Conclusion"],
    ];
    this.pollsUntilReady = opts.pollsUntilReady ?? 2;
  }

  // The next edit request blocks until the returned function is called.
  holdNextEdit(): () => void {
    this.holdNext = held();
    return this.holdNext.release;
  }

  slidesAt(revision: number): string[] {
    const deck = this.decks[revision];
    if (!deck) {
      throw new Error(`fake server has no revision ${revision}`);
    }
    return deck;
  }

  fetch = async (
    input: RequestInfo | URL,
    init?: RequestInit,
  ): Promise<Response> => {
    const href =
      typeof input === "string"
        ? input
        : input instanceof URL
          ? input.href
          : input.url;
    const url = new URL(href);
    const method = (init?.method ?? "GET").toUpperCase();
    this.requests.push(`${method} ${url.pathname}`);

    if (method === "POST" && url.pathname === "/sessions") {
      return this.createSession(init);
    }
    const match = url.pathname.match(/^\/sessions\/([^/]+)(\/.*)?$/);
    if (!match || match[1] !== SESSION_ID || !this.created) {
      return json({ detail: `unknown session` }, 404);
    }
    const rest = match[2] ?? "";
    if (rest === "" && method === "GET") {
      return this.sessionState();
    }
    if (rest === "/edits" && method === "POST") {
      return this.applyEdit(init);
    }
    if (rest === "/slides.json") {
      return json(deckJson(this.slidesAt(this.liveRevision)));
    }
    if (rest === "/deck.pdf") {
      return new Response("%PDF-fake", {
        status: 200,
        headers: { "Content-Type": "application/pdf" },
      });
    }
    if (rest === "/history") {
      return json({ session_id: SESSION_ID, entries: this.history });
    }
    const revision = rest.match(/^\/revisions\/(\d+)\/(slides\.json|deck\.pdf)$/);
    if (revision) {
      const index = Number(revision[1]);
      if (index >= this.decks.length) {
        return json({ detail: `no revision ${index}` }, 404);
      }
      if (revision[2] === "slides.json") {
        return json(deckJson(this.slidesAt(index)));
      }
      return new Response("%PDF-fake", {
        status: 200,
        headers: { "Content-Type": "application/pdf" },
      });
    }
    return json({ detail: `no route ${method} ${url.pathname}` }, 404);
  };

  private createSession(init?: RequestInit): Response {
    const form = init?.body;
    if (!(form instanceof FormData) || !(form.get("file") instanceof File)) {
      return json({ detail: "expected a multipart file upload" }, 422);
    }
    const theme = form.get("theme");
    if (typeof theme === "string" && theme && theme !== "Madrid") {
      return json({ detail: `'${theme}' is not a known Beamer theme` }, 400);
    }
    this.created = true;
    this.pollCount = 0;
    this.history = [
      {
        request: "(initial generation)",
        ok: true,
        timestamp: ++this.clock,
        revision: 0,
        error: "",
        actions: [],
      },
    ];
    return json({ session_id: SESSION_ID, state: "ingesting" }, 202);
  }

  private sessionState(): Response {
    this.pollCount += 1;
    const ready = this.pollCount >= this.pollsUntilReady;
    const names = [
      "enhanced.json",
      "plan.json",
      "report.json",
      "deck.tex",
      "deck.pdf",
      "slides.json",
    ];
    return json({
      session_id: SESSION_ID,
      state: ready ? "ready" : "planning",
      theme_name: "Madrid",
      created: "2026-08-16T10:00:00",
      updated: "2026-08-16T10:00:01",
      error: "",
      revision: this.liveRevision,
      artifacts: Object.fromEntries(names.map((n) => [n, ready])),
    });
  }

  private async applyEdit(init?: RequestInit): Promise<Response> {
    this.editCalls += 1;
    if (this.holdNext) {
      const gate = this.holdNext;
      this.holdNext = null;
      await gate.promise;
    }
    const body = JSON.parse(String(init?.body)) as { request: string };
    const request = body.request;
    const live = this.slidesAt(this.liveRevision);

    const wantsDelete = request.match(/delete slide (\d+)/i);
    if (!wantsDelete) {
      return json(
        this.record(request, "modify", "no actionable plan for this request"),
      );
    }
    const k = Number(wantsDelete[1]);
    if (k < 1 || k > live.length) {
      return json(this.record(request, "delete", `deck has no frame ${k}`));
    }
    this.decks.push(live.filter((_, i) => i !== k - 1));
    this.liveRevision += 1;
    return json(this.record(request, "delete", ""));
  }

  private record(
    request: string,
    action: string,
    error: string,
  ): EditResponse {
    const ok = error === "";
    this.history.push({
      request,
      ok,
      timestamp: ++this.clock,
      revision: this.liveRevision,
      error,
      actions: [{ action, description: request }],
    });
    return {
      ok,
      steps: [{ action, description: request, ok, detail: error }],
      failed_step: ok ? null : 0,
      error,
      rolled_back: false,
      revision: this.liveRevision,
    };
  }
}

function deckJson(texts: string[]): { slides: { slide_number: number; text: string }[] } {
  return {
    slides: texts.map((text, i) => ({ slide_number: i + 1, text })),
  };
}
