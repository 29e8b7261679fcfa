// Realtime connection plumbing with an injectable WebSocket constructor so
// the app cores run both in the browser and under node tests.

import {
  decodeMessage,
  encodeMessage,
  Message,
  PROTOCOL_VERSION,
  SequenceGuard,
} from "./protocol.js";

export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type WebSocketFactory = (url: string) => WebSocketLike;

export const browserWebSocket: WebSocketFactory = (url) =>
  new WebSocket(url) as unknown as WebSocketLike;

export function rtUrl(baseUrl: string): string {
  return baseUrl.replace(/^http/, "ws").replace(/\/$/, "") + "/rt";
}

export class Connection {
  private ws: WebSocketLike | null = null;
  private guard = new SequenceGuard();
  private seq = 0;
  readonly sentTypes: string[] = []; // audit trail: every message type sent
  onMessage: ((msg: Message) => void) | null = null;
  onClose: (() => void) | null = null;

  constructor(private url: string, private factory: WebSocketFactory = browserWebSocket) {}

  open(): Promise<void> {
    return new Promise((resolve, reject) => {
      const ws = this.factory(this.url);
      this.ws = ws;
      ws.onopen = () => resolve();
      ws.onerror = (ev) => reject(ev instanceof Error ? ev : new Error("websocket error"));
      ws.onclose = () => this.onClose?.();
      ws.onmessage = (ev) => {
        const msg = decodeMessage(String(ev.data));
        this.guard.check(msg.seq);
        this.onMessage?.(msg);
      };
    });
  }

  send(type: string, fields: Record<string, unknown> = {}): void {
    if (!this.ws) throw new Error("connection not open");
    this.seq += 1;
    this.sentTypes.push(type);
    this.ws.send(encodeMessage({ type, seq: this.seq, ...fields }));
  }

  hello(fields: Record<string, unknown>): void {
    this.send("hello", { protocol_version: PROTOCOL_VERSION, ...fields });
  }

  close(): void {
    this.ws?.close();
  }
}
