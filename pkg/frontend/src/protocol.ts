// Wire protocol client: one JSON object per WebSocket text frame, with a
// "type" discriminator and a per-sender strictly increasing "seq". Binary
// payloads (JPEG/PNG) stay base64 strings in the browser. Unknown fields
// are preserved-ignored.

export const PROTOCOL_VERSION = "1.0";
export const MAX_FRAME_BYTES = 4 * 1024 * 1024;

export interface Challenge {
  label_index: number;
  label_name: string;
}

export interface RosterPlayer {
  player_id: string;
  display_name: string;
  avatar?: string; // base64 JPEG
}

export interface BoardEntry {
  player_id: string;
  display_name: string;
  rank: number;
  thumbnail?: string; // base64 JPEG
  confidence?: number; // only present for revealed ranks
}

export interface SessionSnapshot {
  session_id: string;
  challenge: Challenge;
  epoch: number;
  paused: boolean;
  reveal: number | "hidden";
  heatmap_enabled: boolean;
  dataset_unlocked: boolean;
  labels: string[];
  input_size: number;
  roster: RosterPlayer[];
  board: BoardEntry[];
}

export interface YouSnapshot {
  player_id: string;
  display_name: string;
  challenge: Challenge;
  epoch: number;
  best_confidence: number;
}

export interface ScoreMsg {
  type: "score";
  seq: number;
  confidence: number;
  is_new_best: boolean;
  label_index: number;
  label_name: string;
  cam_grid?: number[];
  heatmap_png?: string;
}

export type Message = { type: string; seq: number; [key: string]: unknown };

export class ProtocolError extends Error {
  constructor(public code: string, detail: string) {
    super(`${code}: ${detail}`);
  }
}

export function encodeMessage(msg: Message): string {
  const text = JSON.stringify(msg);
  if (text.length > MAX_FRAME_BYTES) {
    throw new ProtocolError("E_OVERSIZE", `frame of ${text.length} bytes`);
  }
  return text;
}

export function decodeMessage(data: string): Message {
  if (data.length > MAX_FRAME_BYTES) {
    throw new ProtocolError("E_OVERSIZE", `frame of ${data.length} bytes`);
  }
  let parsed: unknown;
  try {
    parsed = JSON.parse(data);
  } catch (err) {
    throw new ProtocolError("E_SCHEMA", `malformed frame: ${err}`);
  }
  if (typeof parsed !== "object" || parsed === null || Array.isArray(parsed)) {
    throw new ProtocolError("E_SCHEMA", "frame is not a JSON object");
  }
  const msg = parsed as Message;
  if (typeof msg.type !== "string") {
    throw new ProtocolError("E_SCHEMA", "missing message type");
  }
  if (typeof msg.seq !== "number" || !Number.isInteger(msg.seq) || msg.seq < 0) {
    throw new ProtocolError("E_SCHEMA", "seq must be a non-negative integer");
  }
  return msg;
}

export class SequenceGuard {
  private last: number | null = null;

  check(seq: number): void {
    if (this.last !== null && seq <= this.last) {
      throw new ProtocolError("E_SEQ", `seq ${seq} does not increase past ${this.last}`);
    }
    this.last = seq;
  }
}
