import numpy as np
import pytest

from breakable_machine.session import (
    GameError,
    GameService,
    Score,
    SessionConfig,
)

LABELS = ["astronaut", "bear", "doctor"]


class ScriptedScorer:
    """Returns queued confidences; falls back to a constant."""

    def __init__(self, confidences=(), default=0.1, with_grid=False):
        self.queue = list(confidences)
        self.default = default
        self.with_grid = with_grid
        self.calls = 0

    def __call__(self, frame, label_index, want_heatmap):
        self.calls += 1
        conf = self.queue.pop(0) if self.queue else self.default
        grid = np.full((7, 7), 0.5, np.float32) if (want_heatmap and self.with_grid) else None
        return Score(confidence=conf, cam_grid=grid)


def frame(value=128, size=24):
    return np.full((size, size, 3), value, np.uint8)


def make_service(scorer=None, **kwargs):
    return GameService(scorer or ScriptedScorer(), LABELS, **kwargs)


class Recorder:
    def __init__(self):
        self.events = []

    def __call__(self, event):
        self.events.append(event)

    def of_type(self, t):
        return [e for e in self.events if e.type == t]


# ---- create_session ----

def test_create_session_defaults():
    svc = make_service()
    s = svc.create_session()
    assert s.paused is False
    assert s.heatmap_enabled is False
    assert s.dataset_unlocked is False
    assert s.reveal == "hidden"
    assert len(s.join_token) >= 22  # >= 128 bits of urlsafe entropy


def test_join_tokens_are_distinct():
    svc = make_service()
    assert svc.create_session().join_token != svc.create_session().join_token


def test_reveal_config_applied():
    svc = make_service()
    s = svc.create_session(SessionConfig(reveal=2))
    assert s.reveal == 2


def test_registry_cap():
    svc = make_service(session_cap=2)
    svc.create_session()
    svc.create_session()
    with pytest.raises(GameError) as ei:
        svc.create_session()
    assert ei.value.code == "E_REGISTRY_FULL"


def test_join_url_concatenation():
    svc = make_service(base_url="http://192.168.1.10:8080")
    s = svc.create_session()
    assert svc.join_url(s.session_id) == f"http://192.168.1.10:8080/join/{s.join_token}"


def test_token_regeneration_invalidates_old():
    svc = make_service()
    s = svc.create_session()
    old = s.join_token
    new = svc.regenerate_join_token(s.session_id)
    assert new != old
    with pytest.raises(GameError) as ei:
        svc.join(old, "Alice")
    assert ei.value.code == "E_UNKNOWN_TOKEN"
    svc.join(new, "Alice")


# ---- join ----

def test_first_join_roster_size_one():
    svc = make_service()
    s = svc.create_session()
    svc.join(s.join_token, "Alice")
    assert len(s.players) == 1


def test_duplicate_name_gets_suffix():
    svc = make_service()
    s = svc.create_session()
    svc.join(s.join_token, "Alice")
    _, pid2 = svc.join(s.join_token, "Alice")
    _, pid3 = svc.join(s.join_token, "Alice")
    names = {p.display_name for p in s.players.values()}
    assert names == {"Alice", "Alice-2", "Alice-3"}
    assert s.players[pid2].display_name == "Alice-2"
    assert s.players[pid3].display_name == "Alice-3"


def test_join_after_end_is_unknown_token():
    svc = make_service()
    s = svc.create_session()
    token = s.join_token
    svc.end_session(s.session_id)
    with pytest.raises(GameError) as ei:
        svc.join(token, "Alice")
    assert ei.value.code == "E_UNKNOWN_TOKEN"


def test_empty_name_rejected():
    svc = make_service()
    s = svc.create_session()
    with pytest.raises(GameError) as ei:
        svc.join(s.join_token, "   ")
    assert ei.value.code == "E_EMPTY_NAME"


def test_capacity_enforced():
    svc = make_service()
    s = svc.create_session(SessionConfig(max_players=1))
    svc.join(s.join_token, "Alice")
    with pytest.raises(GameError) as ei:
        svc.join(s.join_token, "Bob")
    assert ei.value.code == "E_CAPACITY"


def test_long_names_truncated():
    svc = make_service()
    s = svc.create_session()
    _, pid = svc.join(s.join_token, "x" * 60)
    assert len(s.players[pid].display_name) == 32


# ---- submit_frame ----

def test_best_confidence_is_monotone():
    svc = make_service(ScriptedScorer([0.40, 0.30]))
    s = svc.create_session()
    _, pid = svc.join(s.join_token, "Alice")
    out1 = svc.submit_frame(s.session_id, pid, frame())
    out2 = svc.submit_frame(s.session_id, pid, frame())
    assert out1.is_new_best is True
    assert out2.is_new_best is False
    assert s.leaderboard[pid].best_confidence == pytest.approx(0.40)


def test_submission_while_paused_rejected():
    svc = make_service(ScriptedScorer([0.8]))
    s = svc.create_session()
    _, pid = svc.join(s.join_token, "Alice")
    svc.set_pause(s.session_id, True)
    with pytest.raises(GameError) as ei:
        svc.submit_frame(s.session_id, pid, frame())
    assert ei.value.code == "E_PAUSED"
    assert ei.value.detail == "paused"
    assert s.leaderboard[pid].best_confidence == 0.0


def test_scripted_sequence_keeps_best_and_its_thumbnail():
    svc = make_service(ScriptedScorer([0.2, 0.7, 0.5]))
    s = svc.create_session()
    _, pid = svc.join(s.join_token, "Alice")
    svc.submit_frame(s.session_id, pid, frame(10))
    svc.submit_frame(s.session_id, pid, frame(20))
    svc.submit_frame(s.session_id, pid, frame(30))
    entry = s.leaderboard[pid]
    assert entry.best_confidence == pytest.approx(0.7)
    assert np.all(entry.thumbnail == 20)  # frame 2 scored the best


def test_unknown_player_rejected():
    svc = make_service()
    s = svc.create_session()
    with pytest.raises(GameError) as ei:
        svc.submit_frame(s.session_id, "p-nope", frame())
    assert ei.value.code == "E_UNKNOWN_PLAYER"


def test_first_best_sets_default_avatar():
    svc = make_service(ScriptedScorer([0.5]))
    s = svc.create_session()
    _, pid = svc.join(s.join_token, "Alice")
    assert s.players[pid].avatar is None
    svc.submit_frame(s.session_id, pid, frame(42))
    assert np.all(s.players[pid].avatar == 42)


def test_challenge_change_mid_inference_drops_stale_delta():
    svc = make_service()
    s = svc.create_session()
    _, pid = svc.join(s.join_token, "Alice")

    def racing_scorer(frm, label_index, want_heatmap):
        svc.set_challenge(s.session_id, "all", 1)  # epoch bumps while scoring
        return Score(confidence=0.9)

    svc.scorer = racing_scorer
    out = svc.submit_frame(s.session_id, pid, frame())
    assert out.is_new_best is False
    assert s.leaderboard[pid].best_confidence == 0.0


def test_heatmap_flag_gates_cam_grid():
    svc = make_service(ScriptedScorer([0.3, 0.4], with_grid=True))
    s = svc.create_session()
    _, pid = svc.join(s.join_token, "Alice")
    out1 = svc.submit_frame(s.session_id, pid, frame())
    assert out1.cam_grid is None
    svc.set_heatmap(s.session_id, True)
    out2 = svc.submit_frame(s.session_id, pid, frame())
    assert out2.cam_grid is not None


# ---- set_challenge ----

def test_set_challenge_all_resets_everyone():
    svc = make_service(ScriptedScorer([0.5, 0.6]))
    s = svc.create_session()
    _, a = svc.join(s.join_token, "A")
    _, b = svc.join(s.join_token, "B")
    svc.submit_frame(s.session_id, a, frame())
    svc.submit_frame(s.session_id, b, frame())
    svc.set_challenge(s.session_id, "all", 2)
    assert all(e.best_confidence == 0.0 for e in s.leaderboard.values())
    assert all(e.thumbnail is None for e in s.leaderboard.values())
    assert s.challenge.label_name == "doctor"


def test_set_challenge_scoped_resets_only_targets():
    svc = make_service(ScriptedScorer([0.5, 0.6]))
    s = svc.create_session()
    _, a = svc.join(s.join_token, "A")
    _, b = svc.join(s.join_token, "B")
    svc.submit_frame(s.session_id, a, frame())
    svc.submit_frame(s.session_id, b, frame())
    svc.set_challenge(s.session_id, [a], 1)
    assert s.leaderboard[a].best_confidence == 0.0
    assert s.leaderboard[b].best_confidence == pytest.approx(0.6)
    assert s.effective_challenge(a).label_name == "bear"
    assert s.effective_challenge(b).label_name == "astronaut"


def test_setting_same_challenge_still_resets():
    svc = make_service(ScriptedScorer([0.5]))
    s = svc.create_session()
    _, a = svc.join(s.join_token, "A")
    svc.submit_frame(s.session_id, a, frame())
    epoch_before = s.epoch
    svc.set_challenge(s.session_id, "all", s.challenge.label_index)
    assert s.epoch == epoch_before + 1
    assert s.leaderboard[a].best_confidence == 0.0


def test_bad_label_rejected():
    svc = make_service()
    s = svc.create_session()
    with pytest.raises(GameError) as ei:
        svc.set_challenge(s.session_id, "all", 99)
    assert ei.value.code == "E_BAD_LABEL"


# ---- leaderboard_view ----

def submit_best(svc, s, pid, conf):
    svc.scorer = ScriptedScorer([conf])
    svc.submit_frame(s.session_id, pid, frame())


def test_view_ordering_and_reveal():
    svc = make_service()
    s = svc.create_session(SessionConfig(reveal=2))
    _, a = svc.join(s.join_token, "A")
    _, b = svc.join(s.join_token, "B")
    _, c = svc.join(s.join_token, "C")
    submit_best(svc, s, a, 0.9)
    submit_best(svc, s, b, 0.4)
    submit_best(svc, s, c, 0.7)
    view = svc.leaderboard_view(s.session_id)
    assert [row["display_name"] for row in view] == ["A", "C", "B"]
    assert view[0]["confidence"] == pytest.approx(0.9)
    assert view[1]["confidence"] == pytest.approx(0.7)
    assert "confidence" not in view[2]


def test_view_hidden_masks_all_but_keeps_order():
    svc = make_service()
    s = svc.create_session()
    _, a = svc.join(s.join_token, "A")
    _, b = svc.join(s.join_token, "B")
    submit_best(svc, s, a, 0.3)
    submit_best(svc, s, b, 0.8)
    view = svc.leaderboard_view(s.session_id)
    assert [row["display_name"] for row in view] == ["B", "A"]
    assert all("confidence" not in row for row in view)


def test_view_empty_session():
    svc = make_service()
    s = svc.create_session()
    assert svc.leaderboard_view(s.session_id) == []


def test_tie_breaks_by_earlier_achievement():
    svc = make_service()
    s = svc.create_session(SessionConfig(reveal=5))
    _, a = svc.join(s.join_token, "A")
    _, b = svc.join(s.join_token, "B")
    submit_best(svc, s, a, 0.5)
    submit_best(svc, s, b, 0.5)
    view = svc.leaderboard_view(s.session_id)
    assert [row["display_name"] for row in view] == ["A", "B"]


# ---- end_session / purge ----

def test_end_session_purges_everything():
    svc = make_service(ScriptedScorer([0.5]))
    s = svc.create_session()
    sid = s.session_id
    _, pid = svc.join(s.join_token, "Alice", avatar=frame(7))
    svc.submit_frame(sid, pid, frame())
    assert svc.count_image_buffers() > 0
    svc.end_session(sid)
    assert svc.count_image_buffers() == 0
    with pytest.raises(GameError) as ei:
        svc.leaderboard_view(sid)
    assert ei.value.code == "E_UNKNOWN_SESSION"


def test_end_session_is_idempotent():
    svc = make_service()
    s = svc.create_session()
    svc.end_session(s.session_id)
    svc.end_session(s.session_id)  # no error


def test_bye_is_final_event():
    svc = make_service()
    s = svc.create_session()
    rec = Recorder()
    svc.attach_teacher(s.session_id, rec)
    svc.end_session(s.session_id)
    assert rec.events[-1].type == "bye"
    assert rec.events[-1].payload["reason"] == "session-ended"


# ---- events ----

def test_events_have_strictly_increasing_seq():
    svc = make_service(ScriptedScorer(default=0.5))
    s = svc.create_session()
    rec = Recorder()
    svc.attach_teacher(s.session_id, rec)
    _, pid = svc.join(s.join_token, "Alice")
    svc.set_pause(s.session_id, True)
    svc.set_pause(s.session_id, False)
    svc.set_reveal(s.session_id, 1)
    svc.end_session(s.session_id)
    seqs = [e.seq for e in rec.events]
    assert seqs == sorted(seqs)
    assert len(set(seqs)) == len(seqs)


def test_no_board_event_between_pause_and_resume():
    svc = make_service(ScriptedScorer(default=0.9))
    s = svc.create_session()
    rec = Recorder()
    svc.attach_teacher(s.session_id, rec)
    _, pid = svc.join(s.join_token, "Alice")
    svc.set_pause(s.session_id, True)
    start = len(rec.events)
    svc.set_challenge(s.session_id, "all", 1)  # resets board while paused
    svc.set_reveal(s.session_id, 2)
    paused_events = rec.events[start:]
    assert all(e.type != "board" for e in paused_events)
    svc.set_pause(s.session_id, False)
    tail = rec.events[start:]
    assert tail[-1].type == "board"  # deferred board flushes on resume


def test_score_events_are_targeted():
    svc = make_service(ScriptedScorer(default=0.6))
    s = svc.create_session()
    rec_a = Recorder()
    rec_b = Recorder()
    _, a = svc.join(s.join_token, "A", subscriber=rec_a)
    _, b = svc.join(s.join_token, "B", subscriber=rec_b)
    svc.submit_frame(s.session_id, a, frame())
    assert len(rec_a.of_type("score")) == 1
    assert len(rec_b.of_type("score")) == 0
    assert len(rec_b.of_type("board")) >= 1  # board delta still broadcast


def test_joined_snapshot_contains_session_and_you():
    svc = make_service()
    s = svc.create_session()
    rec = Recorder()
    _, pid = svc.join(s.join_token, "Alice", subscriber=rec)
    joined = rec.of_type("joined")
    assert len(joined) == 1
    snap = joined[0].payload
    assert snap["you"]["player_id"] == pid
    assert snap["session"]["challenge"]["label_index"] == 0
    assert any(r["player_id"] == pid for r in snap["session"]["roster"])


# ---- randomized interleaving properties (small version; acceptance runs 1000) ----

def run_random_case(seed, ops=25):
    rng = np.random.default_rng(seed)
    svc = make_service(ScriptedScorer(default=0.0))
    s = svc.create_session()
    rec = Recorder()
    svc.attach_teacher(s.session_id, rec)
    n_players = int(rng.integers(1, 6))
    pids = [svc.join(s.join_token, f"P{i}")[1] for i in range(n_players)]
    best = {p: 0.0 for p in pids}

    for _ in range(ops):
        op = rng.choice(["submit", "challenge_all", "challenge_some", "pause", "reveal"])
        if op == "submit":
            pid = pids[int(rng.integers(0, n_players))]
            conf = float(rng.uniform(0, 1))
            svc.scorer = ScriptedScorer([conf])
            if s.paused:
                with pytest.raises(GameError):
                    svc.submit_frame(s.session_id, pid, frame())
            else:
                svc.submit_frame(s.session_id, pid, frame())
                best[pid] = max(best[pid], conf)
                assert s.leaderboard[pid].best_confidence == pytest.approx(best[pid])
        elif op == "challenge_all":
            svc.set_challenge(s.session_id, "all", int(rng.integers(0, len(LABELS))))
            best = {p: 0.0 for p in pids}
            assert all(e.best_confidence == 0.0 for e in s.leaderboard.values())
        elif op == "challenge_some":
            chosen = [p for p in pids if rng.random() < 0.5]
            before = {p: s.leaderboard[p].best_confidence for p in pids}
            svc.set_challenge(s.session_id, chosen, int(rng.integers(0, len(LABELS))))
            for p in pids:
                if p in chosen:
                    best[p] = 0.0
                    assert s.leaderboard[p].best_confidence == 0.0
                    assert s.leaderboard[p].thumbnail is None
                else:
                    assert s.leaderboard[p].best_confidence == before[p]
        elif op == "pause":
            svc.set_pause(s.session_id, bool(rng.integers(0, 2)))
        else:
            reveal = rng.choice(["hidden", 0, 1, 2, n_players])
            reveal = reveal if reveal == "hidden" else int(reveal)
            svc.set_reveal(s.session_id, reveal)
            if not s.paused:
                view = svc.leaderboard_view(s.session_id)
                for row in view:
                    if "confidence" in row:
                        assert reveal != "hidden" and row["rank"] <= reveal

    # pause soundness over the whole event stream
    paused = False
    for e in rec.events:
        if e.type == "pause":
            paused = e.payload["paused"]
        elif e.type == "board":
            assert not paused, "board delta emitted while paused"


@pytest.mark.parametrize("seed", range(40))
def test_randomized_interleavings(seed):
    run_random_case(seed)
