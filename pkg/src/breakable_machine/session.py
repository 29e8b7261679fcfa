"""Authoritative game state: rosters, challenges, leaderboard, purge.

All mutations to one session are serialized by its lock; the frame scorer
runs outside the lock and re-enters only to apply the score. Sessions live
purely in memory: end_session drops every player name, avatar, thumbnail,
and score irrecoverably.

State changes are pushed to subscribers as SessionEvents carrying a
session-wide sequence number, so every connection sees a strictly
increasing seq and a global merge order exists across connections.
Subscriber callbacks run under the session lock and must not block.
"""

from __future__ import annotations

import secrets
import threading
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .rasterops import thumbnail

MAX_NAME_LEN = 32
JOIN_TOKEN_BYTES = 18  # 144 bits of entropy


class GameError(Exception):
    """A game-rule violation with a stable error code for the wire."""

    def __init__(self, code: str, detail: str):
        super().__init__(detail)
        self.code = code
        self.detail = detail


@dataclass
class Challenge:
    label_index: int
    label_name: str

    def as_dict(self) -> dict:
        return {"label_index": self.label_index, "label_name": self.label_name}


@dataclass
class Player:
    player_id: str
    display_name: str
    avatar: np.ndarray | None = None  # small RGB raster, memory only


@dataclass
class LeaderboardEntry:
    best_confidence: float = 0.0
    thumbnail: np.ndarray | None = None  # RGB raster of the scoring frame
    achieved_at: float = 0.0
    tick: int = 0  # session-local logical time, used for tie-breaks


@dataclass
class SessionConfig:
    reveal: int | str = "hidden"  # non-negative int or "hidden"
    max_players: int = 32


@dataclass
class Score:
    """What the injected scorer returns for one frame."""

    confidence: float
    cam_grid: np.ndarray | None = None  # normalized grid, row-major
    heatmap_png: bytes | None = None


@dataclass
class SubmissionOutcome:
    confidence: float
    is_new_best: bool
    label_index: int
    label_name: str
    epoch: int
    cam_grid: np.ndarray | None = None
    heatmap_png: bytes | None = None


@dataclass
class SessionEvent:
    """One outbound state change; target is a player_id or None for broadcast."""

    session_id: str
    type: str
    payload: dict
    seq: int
    target: str | None = None


Scorer = Callable[[np.ndarray, int, bool], Score]
Subscriber = Callable[[SessionEvent], None]


@dataclass
class _Sub:
    key: str
    player_id: str | None
    deliver: Subscriber


class Session:
    """One classroom round. Mutate only through GameService."""

    def __init__(self, session_id: str, join_token: str, challenge: Challenge,
                 config: SessionConfig):
        self.session_id = session_id
        self.join_token = join_token
        self.players: dict[str, Player] = {}
        self.challenge = challenge  # global challenge
        self.overrides: dict[str, Challenge] = {}
        self.player_epoch: dict[str, int] = {}
        self.epoch = 0
        self.paused = False
        self.reveal: int | str = config.reveal
        self.heatmap_enabled = False
        self.dataset_unlocked = False
        self.leaderboard: dict[str, LeaderboardEntry] = {}
        self.created_at = time.time()
        self.max_players = config.max_players
        self.alive = True
        self.lock = threading.RLock()
        self._seq = 0
        self._tick = 0
        self._board_dirty = False
        self._subs: list[_Sub] = []

    # Everything below assumes self.lock is held.

    def next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def next_tick(self) -> int:
        self._tick += 1
        return self._tick

    def effective_challenge(self, player_id: str) -> Challenge:
        return self.overrides.get(player_id, self.challenge)


def _check_reveal(value) -> int | str:
    if value == "hidden":
        return "hidden"
    if isinstance(value, int) and not isinstance(value, bool) and value >= 0:
        return value
    raise GameError("E_BAD_REVEAL", "reveal must be a non-negative integer or \"hidden\"")


class GameService:
    """Session registry plus every game operation. Thread-safe."""

    def __init__(self, scorer: Scorer, labels: list[str], *,
                 base_url: str = "http://127.0.0.1:8080",
                 session_cap: int = 8,
                 default_challenge: int = 0,
                 input_size: int = 56):
        if not labels:
            raise ValueError("at least one class label is required")
        self.scorer = scorer
        self.labels = list(labels)
        self.input_size = input_size
        self.base_url = base_url.rstrip("/")
        self.session_cap = session_cap
        self.default_challenge = default_challenge
        self._registry_lock = threading.Lock()
        self._sessions: dict[str, Session] = {}
        self._by_token: dict[str, str] = {}

    # ---- registry ----

    def create_session(self, config: SessionConfig | None = None) -> Session:
        config = config or SessionConfig()
        _check_reveal(config.reveal)
        challenge = self._challenge_for(self.default_challenge)
        with self._registry_lock:
            if len(self._sessions) >= self.session_cap:
                raise GameError("E_REGISTRY_FULL", f"session registry is full ({self.session_cap})")
            session = Session(
                session_id=secrets.token_urlsafe(9),
                join_token=secrets.token_urlsafe(JOIN_TOKEN_BYTES),
                challenge=challenge,
                config=config,
            )
            self._sessions[session.session_id] = session
            self._by_token[session.join_token] = session.session_id
        return session

    def get_session(self, session_id: str) -> Session:
        with self._registry_lock:
            session = self._sessions.get(session_id)
        if session is None or not session.alive:
            raise GameError("E_UNKNOWN_SESSION", "no such session")
        return session

    def session_by_token(self, join_token: str) -> Session:
        with self._registry_lock:
            sid = self._by_token.get(join_token)
            session = self._sessions.get(sid) if sid else None
        if session is None or not session.alive:
            raise GameError("E_UNKNOWN_TOKEN", "join token does not match a live session")
        return session

    def session_ids(self) -> list[str]:
        with self._registry_lock:
            return list(self._sessions)

    def join_url(self, session_id: str) -> str:
        session = self.get_session(session_id)
        return f"{self.base_url}/join/{session.join_token}"

    def regenerate_join_token(self, session_id: str) -> str:
        session = self.get_session(session_id)
        with session.lock:
            self._require_alive(session)
            old = session.join_token
            session.join_token = secrets.token_urlsafe(JOIN_TOKEN_BYTES)
            with self._registry_lock:
                self._by_token.pop(old, None)
                self._by_token[session.join_token] = session.session_id
            return session.join_token

    def end_session(self, session_id: str) -> None:
        """Purges the session and tells every client; a no-op if already gone."""
        with self._registry_lock:
            session = self._sessions.get(session_id)
        if session is None:
            return
        with session.lock:
            if not session.alive:
                return
            self._emit(session, "bye", {"reason": "session-ended"})
            session.alive = False
            session.players.clear()
            session.leaderboard.clear()
            session.overrides.clear()
            session.player_epoch.clear()
            session._subs.clear()
        with self._registry_lock:
            self._sessions.pop(session_id, None)
            self._by_token.pop(session.join_token, None)

    def count_image_buffers(self) -> int:
        """Introspection hook: rasters retained across all live sessions."""
        total = 0
        with self._registry_lock:
            sessions = list(self._sessions.values())
        for session in sessions:
            with session.lock:
                total += sum(1 for p in session.players.values() if p.avatar is not None)
                total += sum(1 for e in session.leaderboard.values() if e.thumbnail is not None)
        return total

    # ---- membership ----

    def join(self, join_token: str, display_name: str,
             avatar: np.ndarray | None = None,
             subscriber: Subscriber | None = None) -> tuple[Session, str]:
        session = self.session_by_token(join_token)
        name = (display_name or "").strip()
        if not name:
            raise GameError("E_EMPTY_NAME", "display name must not be empty")
        with session.lock:
            self._require_alive(session, token_error=True)
            if len(session.players) >= session.max_players:
                raise GameError("E_CAPACITY", "session is full")
            name = self._dedupe_name(session, name[:MAX_NAME_LEN])
            player_id = "p-" + secrets.token_urlsafe(6)
            player = Player(player_id=player_id, display_name=name)
            if avatar is not None:
                player.avatar = thumbnail(avatar)
            session.players[player_id] = player
            session.player_epoch[player_id] = session.epoch
            session.leaderboard[player_id] = LeaderboardEntry(
                achieved_at=time.time(), tick=session.next_tick()
            )
            if subscriber is not None:
                self._subscribe(session, subscriber, player_id)
                self._emit(session, "joined", self._snapshot(session, player_id),
                           target=player_id)
            self._emit(session, "roster", self._roster_payload(session))
            self._emit_board(session)
        return session, player_id

    def attach_teacher(self, session_id: str, subscriber: Subscriber) -> str:
        """Registers a teacher connection; returns its subscriber key."""
        session = self.get_session(session_id)
        with session.lock:
            self._require_alive(session)
            key = self._subscribe(session, subscriber, player_id=None)
            self._emit(session, "joined", self._snapshot(session, None, teacher=True),
                       target=key)
            return key

    def subscribe_player(self, session_id: str, player_id: str,
                         subscriber: Subscriber) -> str:
        """Re-attaches a connection to an existing player (reconnect path)."""
        session = self.get_session(session_id)
        with session.lock:
            self._require_alive(session)
            if player_id not in session.players:
                raise GameError("E_UNKNOWN_PLAYER", "no such player")
            key = self._subscribe(session, subscriber, player_id)
            self._emit(session, "joined", self._snapshot(session, player_id),
                       target=player_id)
            return key

    def unsubscribe(self, session_id: str, key: str) -> None:
        with self._registry_lock:
            session = self._sessions.get(session_id)
        if session is None:
            return
        with session.lock:
            session._subs = [s for s in session._subs if s.key != key]

    def send_error(self, session_id: str, target_key: str, code: str, detail: str) -> bool:
        """Delivers an error through the session's ordered stream; False if dead."""
        with self._registry_lock:
            session = self._sessions.get(session_id)
        if session is None:
            return False
        with session.lock:
            if not session.alive:
                return False
            self._emit(session, "error", {"code": code, "detail": detail}, target=target_key)
            return True

    def set_avatar(self, session_id: str, player_id: str, avatar: np.ndarray) -> None:
        session = self.get_session(session_id)
        with session.lock:
            self._require_alive(session)
            player = session.players.get(player_id)
            if player is None:
                raise GameError("E_UNKNOWN_PLAYER", "no such player")
            player.avatar = thumbnail(avatar)
            self._emit(session, "roster", self._roster_payload(session))

    # ---- gameplay ----

    def submit_frame(self, session_id: str, player_id: str,
                     frame: np.ndarray) -> SubmissionOutcome:
        session = self.get_session(session_id)
        with session.lock:
            self._require_alive(session)
            if session.paused:
                raise GameError("E_PAUSED", "paused")
            if player_id not in session.players:
                raise GameError("E_UNKNOWN_PLAYER", "no such player")
            challenge = session.effective_challenge(player_id)
            epoch = session.player_epoch[player_id]
            want_heatmap = session.heatmap_enabled

        # Inference runs outside the session writer.
        score = self.scorer(frame, challenge.label_index, want_heatmap)
        confidence = float(score.confidence)

        with session.lock:
            self._require_alive(session)
            if session.paused:
                raise GameError("E_PAUSED", "paused")
            if player_id not in session.players:
                raise GameError("E_UNKNOWN_PLAYER", "no such player")
            stale = session.player_epoch[player_id] != epoch
            entry = session.leaderboard[player_id]
            is_new_best = not stale and confidence > entry.best_confidence
            if is_new_best:
                entry.best_confidence = confidence
                entry.thumbnail = thumbnail(frame)
                entry.achieved_at = time.time()
                entry.tick = session.next_tick()
            outcome = SubmissionOutcome(
                confidence=confidence,
                is_new_best=is_new_best,
                label_index=challenge.label_index,
                label_name=challenge.label_name,
                epoch=epoch,
                cam_grid=score.cam_grid,
                heatmap_png=score.heatmap_png,
            )
            self._emit(session, "score", self._score_payload(outcome), target=player_id)
            if is_new_best:
                player = session.players[player_id]
                if player.avatar is None:
                    player.avatar = entry.thumbnail
                    self._emit(session, "roster", self._roster_payload(session))
                self._emit_board(session)
        # The raw frame is dropped here; only the thumbnail raster persists.
        return outcome

    def set_challenge(self, session_id: str, scope, label_index: int) -> None:
        """scope is "all" or a list of player ids; affected players reset."""
        session = self.get_session(session_id)
        challenge = self._challenge_for(label_index)
        with session.lock:
            self._require_alive(session)
            if scope == "all":
                affected = list(session.players)
                session.challenge = challenge
                session.overrides.clear()
            else:
                affected = list(scope)
                for pid in affected:
                    if pid not in session.players:
                        raise GameError("E_UNKNOWN_PLAYER", f"no such player {pid!r}")
                for pid in affected:
                    session.overrides[pid] = challenge
            session.epoch += 1
            now = time.time()
            for pid in affected:
                session.player_epoch[pid] = session.epoch
                session.leaderboard[pid] = LeaderboardEntry(
                    achieved_at=now, tick=session.next_tick()
                )
            self._emit(session, "challenge", {
                "label_index": challenge.label_index,
                "label_name": challenge.label_name,
                "scope": scope if scope == "all" else list(scope),
                "epoch": session.epoch,
            })
            self._emit_board(session)

    def set_pause(self, session_id: str, flag: bool) -> None:
        session = self.get_session(session_id)
        with session.lock:
            self._require_alive(session)
            session.paused = bool(flag)
            self._emit(session, "pause", {"paused": session.paused})
            if not session.paused and session._board_dirty:
                self._emit_board(session)

    def set_reveal(self, session_id: str, value) -> None:
        session = self.get_session(session_id)
        value = _check_reveal(value)
        with session.lock:
            self._require_alive(session)
            session.reveal = value
            self._emit_flags(session)
            self._emit_board(session)

    def set_heatmap(self, session_id: str, flag: bool) -> None:
        session = self.get_session(session_id)
        with session.lock:
            self._require_alive(session)
            session.heatmap_enabled = bool(flag)
            self._emit_flags(session)

    def set_dataset_unlock(self, session_id: str, flag: bool) -> None:
        session = self.get_session(session_id)
        with session.lock:
            self._require_alive(session)
            session.dataset_unlocked = bool(flag)
            self._emit_flags(session)

    # ---- views ----

    def leaderboard_view(self, session_id: str) -> list[dict]:
        session = self.get_session(session_id)
        with session.lock:
            self._require_alive(session)
            return self._board_payload(session)["entries"]

    def snapshot(self, session_id: str, player_id: str | None = None,
                 teacher: bool = False) -> dict:
        session = self.get_session(session_id)
        with session.lock:
            self._require_alive(session)
            return self._snapshot(session, player_id, teacher=teacher)

    def dataset_visible(self, session_id: str) -> bool:
        session = self.get_session(session_id)
        with session.lock:
            return session.alive and session.dataset_unlocked

    # ---- internals (session.lock held) ----

    def _challenge_for(self, label_index: int) -> Challenge:
        if not isinstance(label_index, int) or isinstance(label_index, bool) \
                or not 0 <= label_index < len(self.labels):
            raise GameError("E_BAD_LABEL", f"label index {label_index!r} out of range")
        return Challenge(label_index=label_index, label_name=self.labels[label_index])

    def _require_alive(self, session: Session, token_error: bool = False) -> None:
        if not session.alive:
            if token_error:
                raise GameError("E_UNKNOWN_TOKEN", "join token does not match a live session")
            raise GameError("E_UNKNOWN_SESSION", "no such session")

    def _dedupe_name(self, session: Session, name: str) -> str:
        taken = {p.display_name for p in session.players.values()}
        if name not in taken:
            return name
        n = 2
        while True:
            suffix = f"-{n}"
            candidate = name[: MAX_NAME_LEN - len(suffix)] + suffix
            if candidate not in taken:
                return candidate
            n += 1

    def _subscribe(self, session: Session, subscriber: Subscriber,
                   player_id: str | None) -> str:
        key = player_id if player_id is not None else "t-" + secrets.token_urlsafe(6)
        session._subs.append(_Sub(key=key, player_id=player_id, deliver=subscriber))
        return key

    def _emit(self, session: Session, type_: str, payload: dict,
              target: str | None = None) -> None:
        event = SessionEvent(
            session_id=session.session_id,
            type=type_,
            payload=payload,
            seq=session.next_seq(),
            target=target,
        )
        for sub in session._subs:
            if target is None or sub.key == target:
                sub.deliver(event)

    def _emit_flags(self, session: Session) -> None:
        self._emit(session, "flags", {
            "heatmap_enabled": session.heatmap_enabled,
            "dataset_unlocked": session.dataset_unlocked,
            "reveal": session.reveal,
        })

    def _emit_board(self, session: Session) -> None:
        """Leaderboard deltas are never emitted while paused; they flush on resume."""
        if session.paused:
            session._board_dirty = True
            return
        session._board_dirty = False
        self._emit(session, "board", self._board_payload(session))

    def _board_payload(self, session: Session) -> dict:
        ordered = sorted(
            session.leaderboard.items(),
            key=lambda kv: (-kv[1].best_confidence, kv[1].tick),
        )
        entries = []
        for rank, (pid, entry) in enumerate(ordered, start=1):
            row = {
                "player_id": pid,
                "display_name": session.players[pid].display_name,
                "rank": rank,
            }
            if entry.thumbnail is not None:
                row["thumbnail"] = entry.thumbnail
            if session.reveal != "hidden" and rank <= session.reveal:
                row["confidence"] = entry.best_confidence
            entries.append(row)
        return {"entries": entries}

    def _roster_payload(self, session: Session) -> dict:
        players = []
        for p in session.players.values():
            row = {"player_id": p.player_id, "display_name": p.display_name}
            if p.avatar is not None:
                row["avatar"] = p.avatar
            players.append(row)
        return {"players": players}

    def _score_payload(self, outcome: SubmissionOutcome) -> dict:
        payload = {
            "confidence": outcome.confidence,
            "is_new_best": outcome.is_new_best,
            "label_index": outcome.label_index,
            "label_name": outcome.label_name,
        }
        if outcome.cam_grid is not None:
            payload["cam_grid"] = [float(v) for v in np.asarray(outcome.cam_grid).reshape(-1)]
        if outcome.heatmap_png is not None:
            payload["heatmap_png"] = outcome.heatmap_png
        return payload

    def _snapshot(self, session: Session, player_id: str | None,
                  teacher: bool = False) -> dict:
        shared = {
            "session_id": session.session_id,
            "challenge": session.challenge.as_dict(),
            "epoch": session.epoch,
            "paused": session.paused,
            "reveal": session.reveal,
            "heatmap_enabled": session.heatmap_enabled,
            "dataset_unlocked": session.dataset_unlocked,
            "labels": list(self.labels),
            "input_size": self.input_size,
            "roster": self._roster_payload(session)["players"],
            "board": self._board_payload(session)["entries"],
        }
        snap: dict = {"session": shared}
        if player_id is not None:
            player = session.players[player_id]
            challenge = session.effective_challenge(player_id)
            snap["you"] = {
                "player_id": player_id,
                "display_name": player.display_name,
                "challenge": challenge.as_dict(),
                "epoch": session.player_epoch[player_id],
                "best_confidence": session.leaderboard[player_id].best_confidence,
            }
        if teacher:
            snap["teacher"] = {
                "join_url": f"{self.base_url}/join/{session.join_token}",
                "max_players": session.max_players,
            }
        return snap
