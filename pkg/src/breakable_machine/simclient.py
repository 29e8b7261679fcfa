"""Headless protocol client for tests and demos.

Runs a scenario script against a live server: joins players, submits image
files as frames, issues teacher controls, and records every received
message into a transcript for assertions.

Scenario files are plain ordered step lists, one step per line, with
key=value arguments (shlex quoting applies; '#' starts a comment):

    join name=Alice
    join name=Bob avatar=bob.jpg
    submit player=Alice file=frames/a1.jpg
    submit player=Bob file=frames/b1.jpg async=yes
    barrier
    teacher action=set_challenge label=doctor
    teacher action=set_pause flag=on
    teacher action=set_reveal n=2
    teacher action=end_session
    wait ms=200
    expect_bye

Teacher controls wait for their own echo broadcast, so consecutive steps
observe each other's effects. Player names in scope= lists are translated
to player ids; challenge labels are given by name.

CLI: bm-sim --server URL --scenario FILE --out transcript.json \
            --join-token TOKEN [--teacher-cred CRED]
"""

from __future__ import annotations

import argparse
import asyncio
import base64
import json
import shlex
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import websockets

from . import protocol

STEP_TIMEOUT = 30.0


class ScenarioError(Exception):
    pass


class ClientState:
    """Mirrors server state by applying the joined snapshot plus broadcasts."""

    def __init__(self):
        self.shared: dict = {}
        self.you: dict = {}

    def init_from_joined(self, msg: dict) -> None:
        self.shared = dict(msg["session"])
        self.you = dict(msg.get("you") or {})

    def apply(self, msg: dict) -> None:
        t = msg["type"]
        if t == "roster":
            self.shared["roster"] = msg["players"]
        elif t == "board":
            self.shared["board"] = msg["entries"]
        elif t == "pause":
            self.shared["paused"] = msg["paused"]
        elif t == "flags":
            self.shared["heatmap_enabled"] = msg["heatmap_enabled"]
            self.shared["dataset_unlocked"] = msg["dataset_unlocked"]
            self.shared["reveal"] = msg["reveal"]
        elif t == "challenge":
            self.shared["epoch"] = msg["epoch"]
            challenge = {"label_index": msg["label_index"], "label_name": msg["label_name"]}
            if msg["scope"] == "all":
                self.shared["challenge"] = challenge
            me = self.you.get("player_id")
            if me and (msg["scope"] == "all" or me in msg["scope"]):
                self.you["challenge"] = challenge
                self.you["epoch"] = msg["epoch"]
        elif t == "score":
            if msg["is_new_best"]:
                self.you["best_confidence"] = msg["confidence"]


class SimClient:
    """One realtime connection: a simulated student or the teacher."""

    def __init__(self, name: str, rt_url: str):
        self.name = name
        self.rt_url = rt_url
        self.ws = None
        self.state = ClientState()
        self.received: list[dict] = []
        self.guard = protocol.SequenceGuard()
        self.player_id: str | None = None
        self.bye = asyncio.Event()
        self.dead = asyncio.Event()
        self._seq = 0
        self._waiters: list[tuple] = []
        self._reader: asyncio.Task | None = None

    async def connect(self) -> None:
        self.ws = await websockets.connect(
            self.rt_url, max_size=protocol.MAX_FRAME_BYTES + 65536
        )
        self._reader = asyncio.create_task(self._read_loop())

    async def _read_loop(self) -> None:
        try:
            async for raw in self.ws:
                msg = protocol.decode(raw, direction="s2c")
                self.guard.check(msg["seq"])
                self.received.append({"t": time.time(), "msg": msg})
                if msg["type"] == "joined":
                    self.state.init_from_joined(msg)
                    if "you" in msg:
                        self.player_id = msg["you"]["player_id"]
                else:
                    self.state.apply(msg)
                for item in list(self._waiters):
                    pred, fut = item
                    if not fut.done() and pred(msg):
                        self._waiters.remove(item)
                        fut.set_result(msg)
                if msg["type"] == "bye":
                    self.bye.set()
        except (websockets.ConnectionClosed, asyncio.CancelledError):
            pass
        finally:
            self.dead.set()
            for _, fut in self._waiters:
                if not fut.done():
                    fut.set_exception(ScenarioError(f"{self.name}: connection closed"))
            self._waiters.clear()

    async def send(self, msg_type: str, **fields) -> None:
        self._seq += 1
        data = protocol.encode({"type": msg_type, "seq": self._seq, **fields})
        await self.ws.send(data.decode("utf-8"))

    def _expect(self, pred):
        fut = asyncio.get_running_loop().create_future()
        self._waiters.append((pred, fut))
        return fut

    async def wait_for(self, *types: str, timeout: float = STEP_TIMEOUT) -> dict:
        fut = self._expect(lambda m: m["type"] in types)
        return await asyncio.wait_for(fut, timeout)

    async def wait_until(self, pred, timeout: float = STEP_TIMEOUT) -> None:
        """Waits until pred(self) holds; broadcasts may already have landed."""
        if pred(self):
            return
        fut = self._expect(lambda m: pred(self))
        await asyncio.wait_for(fut, timeout)

    async def hello_student(self, join_token: str, display_name: str,
                            avatar: bytes | None = None) -> dict:
        fut = self._expect(lambda m: m["type"] in ("joined", "error"))
        fields = {
            "protocol_version": protocol.PROTOCOL_VERSION,
            "role": "student",
            "join_token": join_token,
            "display_name": display_name,
        }
        if avatar is not None:
            fields["avatar_jpeg"] = avatar
        await self.send("hello", **fields)
        msg = await asyncio.wait_for(fut, STEP_TIMEOUT)
        if msg["type"] == "error":
            raise ScenarioError(f"join failed: {msg['code']}: {msg['detail']}")
        return msg

    async def hello_teacher(self, credential: str, session_id: str | None = None) -> dict:
        fut = self._expect(lambda m: m["type"] in ("joined", "error"))
        fields = {
            "protocol_version": protocol.PROTOCOL_VERSION,
            "role": "teacher",
            "credential": credential,
        }
        if session_id:
            fields["session_id"] = session_id
        await self.send("hello", **fields)
        msg = await asyncio.wait_for(fut, STEP_TIMEOUT)
        if msg["type"] == "error":
            raise ScenarioError(f"teacher attach failed: {msg['code']}: {msg['detail']}")
        return msg

    async def submit(self, jpeg: bytes) -> dict:
        """Sends one frame; returns the score (or error) reply."""
        fut = self._expect(lambda m: m["type"] in ("score", "error"))
        await self.send("frame_submit", jpeg=jpeg, client_ts=time.time())
        return await asyncio.wait_for(fut, STEP_TIMEOUT)

    async def control(self, action: str, await_type: str | None = None, **args) -> dict | None:
        fut = self._expect(lambda m: m["type"] in (await_type, "error")) if await_type else None
        await self.send("control", action=action, **args)
        if fut is None:
            return None
        msg = await asyncio.wait_for(fut, STEP_TIMEOUT)
        if msg["type"] == "error":
            raise ScenarioError(f"control {action} failed: {msg['code']}: {msg['detail']}")
        return msg

    async def close(self) -> None:
        if self._reader:
            self._reader.cancel()
            try:
                await self._reader
            except asyncio.CancelledError:
                pass
        if self.ws is not None:
            await self.ws.close()


# ---- scenario parsing and execution ----

CONTROL_ECHO = {
    "set_challenge": "challenge",
    "set_pause": "pause",
    "set_reveal": "flags",
    "set_heatmap": "flags",
    "set_dataset_unlock": "flags",
    "end_session": "bye",
}


def parse_scenario(text: str) -> list[dict]:
    steps = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        tokens = shlex.split(line)
        step = {"op": tokens[0], "line": lineno}
        for tok in tokens[1:]:
            if "=" not in tok:
                raise ScenarioError(f"line {lineno}: expected key=value, got {tok!r}")
            key, value = tok.split("=", 1)
            step[key] = value
        steps.append(step)
    return steps


def _flag(value: str) -> bool:
    return value.lower() in ("on", "true", "yes", "1")


@dataclass
class Transcript:
    clients: dict[str, dict] = field(default_factory=dict)
    teacher: dict | None = None

    def merged(self) -> list[dict]:
        rows = []
        for name, rec in list(self.clients.items()) + ([("teacher", self.teacher)] if self.teacher else []):
            for item in rec["received"]:
                rows.append({"client": name, "seq": item["msg"]["seq"],
                             "t": item["t"], "msg": item["msg"]})
        rows.sort(key=lambda r: (r["seq"], r["client"]))
        return rows

    def final_board(self, client: str | None = None) -> list | None:
        sources = [self.teacher] if client is None and self.teacher else []
        if client is not None:
            sources = [self.clients[client]]
        elif not sources:
            sources = list(self.clients.values())
        for rec in sources:
            for item in reversed(rec["received"]):
                if item["msg"]["type"] == "board":
                    return item["msg"]["entries"]
        return None

    def to_json(self) -> str:
        return json.dumps(_jsonable({"clients": self.clients, "teacher": self.teacher,
                                     "merged": self.merged()}), indent=2)


def _jsonable(obj):
    if isinstance(obj, (bytes, bytearray)):
        return {"b64": base64.b64encode(bytes(obj)).decode("ascii")}
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_jsonable(v) for v in obj]
    return obj


class ScenarioRunner:
    def __init__(self, server_url: str, join_token: str,
                 teacher_cred: str | None = None, base_dir: Path | None = None):
        base = server_url.rstrip("/")
        if base.startswith("http"):
            base = "ws" + base[4:]
        self.rt_url = base + "/rt"
        self.join_token = join_token
        self.teacher_cred = teacher_cred
        self.base_dir = base_dir or Path.cwd()
        self.players: dict[str, SimClient] = {}
        self.teacher: SimClient | None = None
        self.pending: list[asyncio.Task] = []

    def _player(self, name: str) -> SimClient:
        if name not in self.players:
            raise ScenarioError(f"unknown player {name!r}")
        return self.players[name]

    def _read_file(self, rel: str) -> bytes:
        return (self.base_dir / rel).read_bytes()

    async def _ensure_teacher(self) -> SimClient:
        if self.teacher is None:
            if not self.teacher_cred:
                raise ScenarioError("scenario uses teacher steps but no credential was given")
            self.teacher = SimClient("teacher", self.rt_url)
            await self.teacher.connect()
            await self.teacher.hello_teacher(self.teacher_cred)
        return self.teacher

    async def run(self, steps: list[dict]) -> Transcript:
        try:
            for step in steps:
                await self._run_step(step)
        finally:
            transcript = self._collect()
            await self._shutdown()
        return transcript

    async def _run_step(self, step: dict) -> None:
        op = step["op"]
        if op == "join":
            name = step["name"]
            client = SimClient(name, self.rt_url)
            await client.connect()
            avatar = self._read_file(step["avatar"]) if "avatar" in step else None
            await client.hello_student(self.join_token, name, avatar=avatar)
            self.players[name] = client
        elif op == "submit":
            client = self._player(step["player"])
            jpeg = self._read_file(step["file"])
            if _flag(step.get("async", "no")):
                self.pending.append(asyncio.create_task(client.submit(jpeg)))
            else:
                await client.submit(jpeg)
        elif op == "barrier":
            if self.pending:
                await asyncio.gather(*self.pending)
                self.pending.clear()
        elif op == "teacher":
            await self._teacher_step(step)
        elif op == "wait":
            await asyncio.sleep(float(step["ms"]) / 1000.0)
        elif op == "expect_bye":
            for client in list(self.players.values()) + ([self.teacher] if self.teacher else []):
                await asyncio.wait_for(client.bye.wait(), STEP_TIMEOUT)
        else:
            raise ScenarioError(f"line {step['line']}: unknown step {op!r}")

    async def _teacher_step(self, step: dict) -> None:
        teacher = await self._ensure_teacher()
        action = step["action"]
        args: dict = {}
        if action == "set_challenge":
            labels = teacher.state.shared["labels"]
            label = step["label"]
            if label not in labels:
                raise ScenarioError(f"label {label!r} not in model labels {labels}")
            args["label_index"] = labels.index(label)
            if "scope" in step:
                args["scope"] = [self._player(n).player_id for n in step["scope"].split(",")]
            else:
                args["scope"] = "all"
        elif action in ("set_pause", "set_heatmap", "set_dataset_unlock"):
            args["flag"] = _flag(step["flag"])
        elif action == "set_reveal":
            n = step["n"]
            args["reveal"] = "hidden" if n == "hidden" else int(n)
        elif action != "end_session":
            raise ScenarioError(f"line {step['line']}: unknown teacher action {action!r}")
        await teacher.control(action, await_type=CONTROL_ECHO[action], **args)

    def _collect(self) -> Transcript:
        transcript = Transcript()
        for name, client in self.players.items():
            transcript.clients[name] = {
                "player_id": client.player_id,
                "received": client.received,
                "state": {"session": client.state.shared, "you": client.state.you},
            }
        if self.teacher is not None:
            transcript.teacher = {
                "player_id": None,
                "received": self.teacher.received,
                "state": {"session": self.teacher.state.shared},
            }
        return transcript

    async def _shutdown(self) -> None:
        for task in self.pending:
            task.cancel()
        self.pending.clear()
        for client in list(self.players.values()) + ([self.teacher] if self.teacher else []):
            await client.close()


async def run_scenario(server_url: str, scenario: str | list[dict], join_token: str,
                       teacher_cred: str | None = None,
                       base_dir: Path | None = None) -> Transcript:
    steps = parse_scenario(scenario) if isinstance(scenario, str) else scenario
    runner = ScenarioRunner(server_url, join_token, teacher_cred, base_dir)
    return await runner.run(steps)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bm-sim")
    parser.add_argument("--server", required=True, help="server base url, e.g. http://127.0.0.1:8080")
    parser.add_argument("--scenario", required=True)
    parser.add_argument("--out", required=True, help="transcript JSON output path")
    parser.add_argument("--join-token", required=True)
    parser.add_argument("--teacher-cred", default=None)
    args = parser.parse_args(argv)

    scenario_path = Path(args.scenario)
    try:
        transcript = asyncio.run(
            run_scenario(
                args.server,
                scenario_path.read_text(),
                args.join_token,
                args.teacher_cred,
                base_dir=scenario_path.parent,
            )
        )
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    Path(args.out).write_text(transcript.to_json())
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
