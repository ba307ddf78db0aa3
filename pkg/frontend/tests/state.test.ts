/** Controller behavior against a scripted in-memory server. */

import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient, Polarity } from "../src/api.js";
import { SessionController } from "../src/state.js";

type Click = { x: number; y: number; polarity: Polarity };

/** Minimal fake of the session API with deterministic mask bytes. */
class FakeServer {
  clicks: Click[] = [];
  requests: string[] = [];
  failNextClick = false;
  gate: Promise<void> | null = null;

  maskBytes(head: number): Uint8Array {
    const canonical = JSON.stringify({
      head,
      clicks: [...this.clicks].sort((a, b) => a.x - b.x || a.y - b.y),
    });
    return new TextEncoder().encode(canonical);
  }

  fetch = async (input: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    const url = String(input);
    const method = init?.method ?? "GET";
    this.requests.push(`${method} ${url.replace(/^http:\/\/fake/, "")}`);
    if (this.gate) {
      await this.gate;
    }
    const json = (body: unknown, status = 200) =>
      new Response(JSON.stringify(body), { status, headers: { "content-type": "application/json" } });

    if (method === "POST" && url.endsWith("/v1/sessions")) {
      return json({ session_id: "s1", width: 32, height: 24, num_heads: 3, checkpoint: "desk" }, 201);
    }
    if (method === "POST" && url.endsWith("/clicks")) {
      if (this.failNextClick) {
        this.failNextClick = false;
        return json({ code: "bad_request", message: "click outside the frame" }, 400);
      }
      const body = JSON.parse(String(init?.body)) as Click;
      this.clicks.push(body);
      return json({ proposals: [], default_head: 1, num_clicks: this.clicks.length });
    }
    if (method === "DELETE" && /\/clicks\/\d+,\d+$/.test(url)) {
      const m = url.match(/\/clicks\/(\d+),(\d+)$/)!;
      const x = Number(m[1]);
      const y = Number(m[2]);
      this.clicks = this.clicks.filter((c) => c.x !== x || c.y !== y);
      return json({ proposals: [], default_head: 1, num_clicks: this.clicks.length });
    }
    if (method === "GET" && /\/v1\/sessions\/s1$/.test(url)) {
      return json({
        session_id: "s1",
        checkpoint: "desk",
        width: 32,
        height: 24,
        clicks: this.clicks,
        click_order: this.clicks.map((c) => [c.x, c.y, c.polarity]),
        num_heads: 3,
      });
    }
    if (method === "GET" && url.includes("/mask")) {
      const head = Number(new URL(url).searchParams.get("head"));
      if (head < 1 || head > 3) {
        return json({ code: "bad_request", message: `head ${head} out of [1, 3]` }, 400);
      }
      return new Response(this.maskBytes(head).slice().buffer, {
        status: 200,
        headers: { "content-type": "image/png" },
      });
    }
    if (method === "POST" && url.endsWith("/frame")) {
      this.clicks = [];
      return json({ session_id: "s1", width: 32, height: 24, clicks: [] });
    }
    return json({ code: "not_found", message: url }, 404);
  };
}

let server: FakeServer;
let controller: SessionController;

beforeEach(async () => {
  server = new FakeServer();
  controller = new SessionController(new ApiClient("http://fake", server.fetch as typeof fetch));
  await controller.createSession("ZnJhbWU=");
});

function bytesEqual(a: Uint8Array | null, b: Uint8Array): boolean {
  return a !== null && a.length === b.length && a.every((v, i) => v === b[i]);
}

describe("session creation", () => {
  it("adopts server dimensions and defaults", () => {
    expect(controller.state.sessionId).toBe("s1");
    expect(controller.state.width).toBe(32);
    expect(controller.state.height).toBe(24);
    expect(controller.state.numHeads).toBe(3);
    expect(controller.state.selectedHead).toBe(1);
    expect(controller.state.overlayOpacity).toBeCloseTo(0.45);
    expect(controller.state.overlayBytes).toBeNull();
  });
});

describe("placing clicks", () => {
  it("posts the click, mirrors the server list, and stores the mask bytes", async () => {
    await controller.placeClick(4, 5, "pos");
    expect(server.requests).toContain("POST /v1/sessions/s1/clicks");
    expect(controller.state.clicks).toEqual([{ x: 4, y: 5, polarity: "pos" }]);
    expect(bytesEqual(controller.state.overlayBytes, server.maskBytes(1))).toBe(true);
  });

  it("maps display coordinates through the zoom factor", async () => {
    controller.placeClickFromDisplay(10, 10, 2, "neg");
    await waitIdle();
    expect(controller.state.clicks).toEqual([{ x: 5, y: 5, polarity: "neg" }]);
  });

  it("right-button polarity is negative by caller contract", async () => {
    controller.placeClickFromDisplay(0, 0, 1, "neg");
    await waitIdle();
    expect(controller.state.clicks[0]?.polarity).toBe("neg");
  });

  it("queues exactly one click while busy and drops the rest", async () => {
    let release!: () => void;
    server.gate = new Promise((r) => (release = r));
    const first = controller.placeClickFromDisplay(1, 1, 1, "pos");
    const second = controller.placeClickFromDisplay(2, 2, 1, "pos");
    const third = controller.placeClickFromDisplay(3, 3, 1, "pos");
    expect(first).toBe("submitted");
    expect(second).toBe("queued");
    expect(third).toBe("dropped");
    expect(controller.state.busy).toBe(true);
    server.gate = null;
    release();
    await waitIdle();
    expect(controller.state.clicks).toEqual([
      { x: 1, y: 1, polarity: "pos" },
      { x: 2, y: 2, polarity: "pos" },
    ]);
  });

  it("leaves state unchanged and raises the banner on a server error", async () => {
    await controller.placeClick(4, 5, "pos");
    const before = controller.state;
    server.failNextClick = true;
    await controller.placeClick(9, 9, "pos");
    expect(controller.state.errorBanner).toContain("click outside the frame");
    expect(controller.state.clicks).toEqual(before.clicks);
    expect(controller.state.overlayBytes).toBe(before.overlayBytes);
  });
});

describe("head selection", () => {
  it("fetches the head's mask without re-clicking", async () => {
    await controller.placeClick(4, 5, "pos");
    const clicksBefore = server.requests.filter((r) => r.startsWith("POST")).length;
    await controller.selectHead(2);
    expect(controller.state.selectedHead).toBe(2);
    expect(bytesEqual(controller.state.overlayBytes, server.maskBytes(2))).toBe(true);
    expect(server.requests.filter((r) => r.startsWith("POST")).length).toBe(clicksBefore);
  });

  it("ignores out-of-range heads", async () => {
    await controller.selectHead(0);
    await controller.selectHead(4);
    expect(controller.state.selectedHead).toBe(1);
  });
});

describe("undo", () => {
  it("is disabled with no clicks", async () => {
    expect(controller.canUndo()).toBe(false);
    await controller.undoClick();
    expect(server.requests.filter((r) => r.startsWith("DELETE")).length).toBe(0);
  });

  it("removes the last click and resyncs", async () => {
    await controller.placeClick(1, 1, "pos");
    await controller.placeClick(2, 2, "neg");
    await controller.undoClick();
    expect(controller.state.clicks).toEqual([{ x: 1, y: 1, polarity: "pos" }]);
    expect(bytesEqual(controller.state.overlayBytes, server.maskBytes(1))).toBe(true);
  });
});

describe("frame advance", () => {
  it("clears clicks and the overlay", async () => {
    await controller.placeClick(1, 1, "pos");
    await controller.advanceFrame("bmV4dA==");
    expect(controller.state.clicks).toEqual([]);
    expect(controller.state.overlayBytes).toBeNull();
    expect(controller.state.selectedHead).toBe(1);
  });
});

async function waitIdle(): Promise<void> {
  for (let i = 0; i < 200; i++) {
    await new Promise((r) => setTimeout(r, 2));
    if (!controller.state.busy) return;
  }
  throw new Error("controller never became idle");
}
