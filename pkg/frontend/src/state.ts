/**
 * Session state controller: the single mutation path between the UI and the
 * server.
 *
 * All requests for a session are serialized behind a busy flag, mirroring
 * the server's per-session serialization; while busy, at most one pending
 * click is queued and further clicks are dropped. After every acknowledged
 * mutation the click list is re-read from the server (the server is the
 * source of truth) and the overlay is replaced by the mask payload fetched
 * for the selected head. The UI never computes segmentations locally:
 * `overlayBytes` always holds an exact server response body.
 */

import { ApiClient, ApiError, Polarity, ServerClick } from "./api.js";
import { displayToImage } from "./coords.js";

export interface UiSessionState {
  sessionId: string | null;
  width: number;
  height: number;
  numHeads: number;
  clicks: ServerClick[];
  selectedHead: number;
  overlayOpacity: number;
  busy: boolean;
  errorBanner: string | null;
  overlayBytes: Uint8Array | null;
}

export type StateListener = (state: UiSessionState) => void;

export type ClickOutcome = "submitted" | "queued" | "dropped" | "ignored";

const DEFAULT_OPACITY = 0.45;

export class SessionController {
  private state_: UiSessionState = {
    sessionId: null,
    width: 0,
    height: 0,
    numHeads: 0,
    clicks: [],
    selectedHead: 1,
    overlayOpacity: DEFAULT_OPACITY,
    busy: false,
    errorBanner: null,
    overlayBytes: null,
  };

  private pendingClick: { x: number; y: number; polarity: Polarity } | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly listener?: StateListener,
  ) {}

  get state(): Readonly<UiSessionState> {
    return this.state_;
  }

  private update(patch: Partial<UiSessionState>): void {
    this.state_ = { ...this.state_, ...patch };
    this.listener?.(this.state_);
  }

  /** Serialize one request cycle; API failures land in the error banner and
   * leave the rest of the state untouched. */
  private async run(task: () => Promise<void>): Promise<void> {
    this.update({ busy: true, errorBanner: null });
    try {
      await task();
    } catch (err) {
      if (err instanceof ApiError) {
        this.update({ errorBanner: `${err.code}: ${err.message}` });
      } else {
        this.update({ errorBanner: String(err) });
        throw err;
      }
    } finally {
      this.update({ busy: false });
      const pending = this.pendingClick;
      this.pendingClick = null;
      if (pending !== null) {
        await this.placeClick(pending.x, pending.y, pending.polarity);
      }
    }
  }

  private async resyncClicksAndOverlay(): Promise<void> {
    const sid = this.state_.sessionId;
    if (!sid) return;
    const session = await this.api.getSession(sid);
    const clicks: ServerClick[] = session.click_order.map(([x, y, polarity]) => ({
      x,
      y,
      polarity,
    }));
    const overlay = await this.api.getMaskBytes(sid, this.state_.selectedHead);
    this.update({ clicks, overlayBytes: overlay });
  }

  async createSession(frameB64: string, prevFrameB64?: string, checkpoint?: string): Promise<void> {
    await this.run(async () => {
      const created = await this.api.createSession(frameB64, prevFrameB64, checkpoint);
      this.update({
        sessionId: created.session_id,
        width: created.width,
        height: created.height,
        numHeads: created.num_heads,
        clicks: [],
        selectedHead: 1,
        overlayBytes: null,
      });
    });
  }

  /** Entry point for canvas events: maps display to image pixels first. */
  placeClickFromDisplay(dx: number, dy: number, zoom: number, polarity: Polarity): ClickOutcome {
    if (!this.state_.sessionId) return "ignored";
    const point = displayToImage(dx, dy, zoom, this.state_.width, this.state_.height);
    if (this.state_.busy) {
      if (this.pendingClick === null) {
        this.pendingClick = { ...point, polarity };
        return "queued";
      }
      return "dropped";
    }
    void this.placeClick(point.x, point.y, polarity);
    return "submitted";
  }

  async placeClick(x: number, y: number, polarity: Polarity): Promise<void> {
    await this.run(async () => {
      const sid = this.state_.sessionId;
      if (!sid) return;
      await this.api.addClick(sid, x, y, polarity);
      await this.resyncClicksAndOverlay();
    });
  }

  /** Swap the overlay to another head without re-clicking. */
  async selectHead(head: number): Promise<void> {
    if (!this.state_.sessionId || this.state_.busy) return;
    if (!Number.isInteger(head) || head < 1 || head > this.state_.numHeads) {
      return; // out-of-range heads are disabled in the UI
    }
    await this.run(async () => {
      const overlay = await this.api.getMaskBytes(this.state_.sessionId!, head);
      this.update({ selectedHead: head, overlayBytes: overlay });
    });
  }

  canUndo(): boolean {
    return this.state_.clicks.length > 0 && !this.state_.busy;
  }

  async undoClick(): Promise<void> {
    if (!this.canUndo() || !this.state_.sessionId) return;
    const last = this.state_.clicks[this.state_.clicks.length - 1]!;
    await this.run(async () => {
      await this.api.removeClick(this.state_.sessionId!, last.x, last.y);
      await this.resyncClicksAndOverlay();
    });
  }

  async advanceFrame(frameB64: string): Promise<void> {
    if (!this.state_.sessionId) return;
    await this.run(async () => {
      const resp = await this.api.advanceFrame(this.state_.sessionId!, frameB64);
      this.update({
        width: resp.width,
        height: resp.height,
        clicks: [],
        overlayBytes: null,
        selectedHead: 1,
      });
    });
  }
}
