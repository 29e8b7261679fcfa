"""Server harnesses: in-process (fast, introspectable) and subprocess (real CLI)."""

import os
import re
import secrets
import subprocess
import sys
import threading
import time

import uvicorn

from breakable_machine.dataset import scan_dataset
from breakable_machine.scoring import ModelScorer
from breakable_machine.server import ServerSettings, create_app
from breakable_machine.session import GameService, SessionConfig


class InProcessServer:
    """uvicorn on a daemon thread, port 0; exposes the live service object."""

    def __init__(self, model, dataset_dir=None, reveal="hidden", max_players=32,
                 rate_limit=0.0, ui_dir=None):
        self.model = model
        self.credential = secrets.token_urlsafe(12)
        self.service = GameService(ModelScorer(model), model.labels, input_size=model.input_size)
        self.session = self.service.create_session(
            SessionConfig(reveal=reveal, max_players=max_players)
        )
        manifest = scan_dataset(dataset_dir, model.labels) if dataset_dir else None
        settings = ServerSettings(
            teacher_credential=self.credential,
            active_session_id=self.session.session_id,
            rate_limit=rate_limit,
            ui_dir=ui_dir,
        )
        self.app = create_app(self.service, manifest, settings)
        self._server = None
        self._thread = None
        self.base_url = None

    def start(self, timeout=10.0):
        config = uvicorn.Config(self.app, host="127.0.0.1", port=0, log_level="warning")
        self._server = uvicorn.Server(config)
        self._thread = threading.Thread(target=self._server.run, daemon=True)
        self._thread.start()
        deadline = time.time() + timeout
        while not self._server.started:
            if time.time() > deadline:
                raise RuntimeError("server did not start")
            time.sleep(0.02)
        port = self._server.servers[0].sockets[0].getsockname()[1]
        self.base_url = f"http://127.0.0.1:{port}"
        self.service.base_url = self.base_url
        return self

    def stop(self):
        if self._server is not None:
            self._server.should_exit = True
        if self._thread is not None:
            self._thread.join(timeout=10)

    @property
    def join_token(self):
        return self.session.join_token


ANNOUNCE_RE = {
    "base_url": re.compile(r"^breakable-machine serving on (\S+)$"),
    "teacher_url": re.compile(r"^teacher url: (\S+)$"),
    "credential": re.compile(r"^teacher credential: (\S+)$"),
    "join_url": re.compile(r"^student join url: (\S+)$"),
    "session_id": re.compile(r"^session id: (\S+)$"),
}


class SubprocessServer:
    """Runs `breakable-machine serve` as a child process and parses its banner."""

    def __init__(self, model_path, dataset_dir=None, cwd=None, env=None,
                 extra_args=(), port=0):
        self.args = [
            sys.executable, "-m", "breakable_machine.cli", "serve",
            "--model", str(model_path), "--bind", "127.0.0.1", "--port", str(port),
        ]
        if dataset_dir:
            self.args += ["--dataset", str(dataset_dir)]
        self.args += list(extra_args)
        self.cwd = str(cwd) if cwd else None
        self.env = {**os.environ, **(env or {})}
        self.proc = None
        self.info = {}
        self.stdout_lines = []

    def start(self, timeout=30.0):
        self.proc = subprocess.Popen(
            self.args, cwd=self.cwd, env=self.env,
            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
        )
        deadline = time.time() + timeout
        needed = set(ANNOUNCE_RE)
        while needed and time.time() < deadline:
            line = self.proc.stdout.readline()
            if not line:
                if self.proc.poll() is not None:
                    raise RuntimeError(
                        "server exited early:\n" + (self.proc.stderr.read() or "")
                    )
                continue
            self.stdout_lines.append(line.rstrip("\n"))
            for key, rx in ANNOUNCE_RE.items():
                m = rx.match(line.strip())
                if m:
                    self.info[key] = m.group(1)
                    needed.discard(key)
        if needed:
            self.stop()
            raise RuntimeError(f"server banner incomplete, missing {needed}")
        self.info["join_token"] = self.info["join_url"].rsplit("/", 1)[-1]
        return self

    def stop(self):
        if self.proc and self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait(timeout=10)

    @property
    def base_url(self):
        return self.info["base_url"]
