/** Typed client for the segmentation session HTTP/JSON API. */

export type Polarity = "pos" | "neg";

export interface CreateSessionResponse {
  session_id: string;
  width: number;
  height: number;
  num_heads: number;
  checkpoint: string;
}

export interface ProposalEntry {
  head: number;
  iou_rank: number;
}

export interface ProposalsResponse {
  proposals: ProposalEntry[];
  default_head: number;
  num_clicks: number;
  duplicate?: boolean;
}

export interface ServerClick {
  x: number;
  y: number;
  polarity: Polarity;
}

export interface SessionStateResponse {
  session_id: string;
  checkpoint: string;
  width: number;
  height: number;
  clicks: ServerClick[];
  click_order: [number, number, Polarity][];
  num_heads: number;
}

export interface FrameAdvanceResponse {
  session_id: string;
  width: number;
  height: number;
  clicks: ServerClick[];
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function raiseForStatus(resp: Response): Promise<Response> {
  if (resp.ok) {
    return resp;
  }
  let code = "error";
  let message = `${resp.status} ${resp.statusText}`;
  try {
    const body = (await resp.json()) as { code?: string; message?: string };
    if (body.code) code = body.code;
    if (body.message) message = body.message;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(resp.status, code, message);
}

export class ApiClient {
  private readonly fetchFn: typeof fetch;

  constructor(
    readonly baseUrl: string,
    fetchFn?: typeof fetch,
  ) {
    this.fetchFn = (fetchFn ?? fetch).bind(globalThis);
  }

  private async requestJson<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, init);
    await raiseForStatus(resp);
    return (await resp.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.requestJson<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  listCheckpoints(): Promise<{ checkpoints: string[] }> {
    return this.requestJson("/v1/checkpoints");
  }

  createSession(
    frameB64: string,
    prevFrameB64?: string,
    checkpoint?: string,
  ): Promise<CreateSessionResponse> {
    const body: Record<string, string> = { frame_png_base64: frameB64 };
    if (prevFrameB64) body.prev_frame_png_base64 = prevFrameB64;
    if (checkpoint) body.checkpoint = checkpoint;
    return this.post("/v1/sessions", body);
  }

  getSession(sessionId: string): Promise<SessionStateResponse> {
    return this.requestJson(`/v1/sessions/${sessionId}`);
  }

  addClick(sessionId: string, x: number, y: number, polarity: Polarity): Promise<ProposalsResponse> {
    return this.post(`/v1/sessions/${sessionId}/clicks`, { x, y, polarity });
  }

  removeClick(sessionId: string, x: number, y: number): Promise<ProposalsResponse> {
    return this.requestJson(`/v1/sessions/${sessionId}/clicks/${x},${y}`, { method: "DELETE" });
  }

  advanceFrame(sessionId: string, frameB64: string): Promise<FrameAdvanceResponse> {
    return this.post(`/v1/sessions/${sessionId}/frame`, { frame_png_base64: frameB64 });
  }

  /** Raw PNG payload for one head's binary mask; the only source of overlay bytes. */
  async getMaskBytes(sessionId: string, head: number): Promise<Uint8Array> {
    const resp = await this.fetchFn(`${this.baseUrl}/v1/sessions/${sessionId}/mask?head=${head}&format=png`);
    await raiseForStatus(resp);
    return new Uint8Array(await resp.arrayBuffer());
  }
}
