// Framework-free application cores for both roles. All protocol and state
// logic lives here so the integration tests can drive it headlessly; the
// DOM layers only render and forward user input.

import { Connection } from "./net.js";
import type { BoardEntry, Message, ScoreMsg } from "./protocol.js";
import { ClientState } from "./state.js";

type Waiter = { pred: (msg: Message) => boolean; resolve: (msg: Message) => void };

export class AppCore {
  readonly state = new ClientState();
  onUpdate: (() => void) | null = null;
  closed = false;
  byeReason: string | null = null;
  readonly errors: Message[] = [];
  private waiters: Waiter[] = [];

  constructor(readonly conn: Connection) {
    conn.onMessage = (msg) => this.handle(msg);
    conn.onClose = () => {
      this.closed = true;
      this.onUpdate?.();
    };
  }

  protected handle(msg: Message): void {
    if (msg.type === "joined") {
      this.state.initFromJoined(msg);
    } else {
      this.state.apply(msg);
    }
    if (msg.type === "error") {
      this.errors.push(msg);
    }
    if (msg.type === "bye") {
      this.byeReason = msg.reason as string;
    }
    const pending = this.waiters;
    this.waiters = [];
    for (const w of pending) {
      if (w.pred(msg)) w.resolve(msg);
      else this.waiters.push(w);
    }
    this.onUpdate?.();
  }

  waitFor(pred: (msg: Message) => boolean, timeoutMs = 15000): Promise<Message> {
    return new Promise((resolve, reject) => {
      const timer = setTimeout(() => reject(new Error("timed out waiting for a message")), timeoutMs);
      this.waiters.push({
        pred,
        resolve: (msg) => {
          clearTimeout(timer);
          resolve(msg);
        },
      });
    });
  }

  async waitUntil(pred: () => boolean, timeoutMs = 15000): Promise<void> {
    if (pred()) return;
    await this.waitFor(() => pred(), timeoutMs);
  }
}

export class StudentCore extends AppCore {
  private latestFrame: string | null = null; // queue of depth 1: latest wins

  async join(joinToken: string, displayName: string, avatarJpegB64?: string): Promise<void> {
    const reply = this.waitFor((m) => m.type === "joined" || m.type === "error");
    const fields: Record<string, unknown> = { role: "student", join_token: joinToken, display_name: displayName };
    if (avatarJpegB64) fields.avatar_jpeg = avatarJpegB64;
    this.conn.hello(fields);
    const msg = await reply;
    if (msg.type === "error") throw new Error(`${msg.code}: ${msg.detail}`);
  }

  offerFrame(jpegB64: string): void {
    this.latestFrame = jpegB64;
  }

  /** Called on the send cadence (default 2/s): submits the latest frame, if any. */
  tick(): Promise<Message> | null {
    if (this.latestFrame === null || this.closed) return null;
    const jpeg = this.latestFrame;
    this.latestFrame = null;
    const reply = this.waitFor((m) => m.type === "score" || m.type === "error");
    this.conn.send("frame_submit", { jpeg, client_ts: Date.now() / 1000 });
    return reply;
  }

  view() {
    const s = this.state.shared;
    const score = this.state.lastScore;
    return {
      displayName: this.state.you?.display_name ?? "",
      challengeName: this.state.myChallenge()?.label_name ?? "",
      lastConfidence: score?.confidence ?? null,
      isNewBest: score?.is_new_best ?? false,
      bestConfidence: this.state.you?.best_confidence ?? 0,
      paused: s?.paused ?? false,
      heatmapOn: s?.heatmap_enabled ?? false,
      camGrid: score?.cam_grid ?? null,
      datasetUnlocked: s?.dataset_unlocked ?? false,
      sessionId: s?.session_id ?? "",
    };
  }
}

export class TeacherCore extends AppCore {
  joinUrl = "";

  async join(credential: string, sessionId?: string): Promise<void> {
    const reply = this.waitFor((m) => m.type === "joined" || m.type === "error");
    const fields: Record<string, unknown> = { role: "teacher", credential };
    if (sessionId) fields.session_id = sessionId;
    this.conn.hello(fields);
    const msg = await reply;
    if (msg.type === "error") throw new Error(`${msg.code}: ${msg.detail}`);
    this.joinUrl = (msg.teacher as { join_url?: string } | undefined)?.join_url ?? "";
  }

  labels(): string[] {
    return this.state.shared?.labels ?? [];
  }

  board(): BoardEntry[] {
    return this.state.shared?.board ?? [];
  }

  setChallenge(labelIndex: number, scope: "all" | string[] = "all"): void {
    this.conn.send("control", { action: "set_challenge", label_index: labelIndex, scope });
  }

  setPause(flag: boolean): void {
    this.conn.send("control", { action: "set_pause", flag });
  }

  setReveal(reveal: number | "hidden"): void {
    this.conn.send("control", { action: "set_reveal", reveal });
  }

  setHeatmap(flag: boolean): void {
    this.conn.send("control", { action: "set_heatmap", flag });
  }

  setDatasetUnlock(flag: boolean): void {
    this.conn.send("control", { action: "set_dataset_unlock", flag });
  }

  endSession(): void {
    this.conn.send("control", { action: "end_session" });
  }
}

export type { ScoreMsg };
