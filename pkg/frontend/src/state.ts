// Client-side session state: initialized from the joined snapshot, then
// kept in sync by applying every broadcast in seq order. Reproducing the
// server snapshot this way is a protocol invariant the tests lean on.

import type { Challenge, Message, ScoreMsg, SessionSnapshot, YouSnapshot } from "./protocol.js";

export class ClientState {
  shared: SessionSnapshot | null = null;
  you: YouSnapshot | null = null;
  lastScore: ScoreMsg | null = null;

  initFromJoined(msg: Message): void {
    this.shared = structuredClone(msg.session) as SessionSnapshot;
    this.you = msg.you ? (structuredClone(msg.you) as YouSnapshot) : null;
  }

  apply(msg: Message): void {
    const s = this.shared;
    if (!s) return;
    switch (msg.type) {
      case "roster":
        s.roster = msg.players as SessionSnapshot["roster"];
        break;
      case "board":
        s.board = msg.entries as SessionSnapshot["board"];
        break;
      case "pause":
        s.paused = msg.paused as boolean;
        break;
      case "flags":
        s.heatmap_enabled = msg.heatmap_enabled as boolean;
        s.dataset_unlocked = msg.dataset_unlocked as boolean;
        s.reveal = msg.reveal as number | "hidden";
        break;
      case "challenge": {
        const challenge: Challenge = {
          label_index: msg.label_index as number,
          label_name: msg.label_name as string,
        };
        const scope = msg.scope as "all" | string[];
        s.epoch = msg.epoch as number;
        if (scope === "all") {
          s.challenge = challenge;
        }
        const me = this.you?.player_id;
        if (this.you && me && (scope === "all" || scope.includes(me))) {
          this.you.challenge = challenge;
          this.you.epoch = msg.epoch as number;
          this.you.best_confidence = 0;
        }
        break;
      }
      case "score": {
        const score = msg as unknown as ScoreMsg;
        this.lastScore = score;
        if (this.you && score.is_new_best) {
          this.you.best_confidence = score.confidence;
        }
        break;
      }
    }
  }

  myChallenge(): Challenge | null {
    return this.you?.challenge ?? this.shared?.challenge ?? null;
  }
}
