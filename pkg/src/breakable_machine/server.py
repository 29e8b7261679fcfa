"""The network host: web UI, realtime endpoint, and dataset service.

One FastAPI app serves everything on one port:

    GET /                     landing page (role chooser)
    GET /join/{token}         student app page; 404 once the token is stale
    WS  /rt                   realtime protocol endpoint
    GET /dataset              label listing        (gated per session)
    GET /dataset/{label}      image ids for label  (gated per session)
    GET /dataset/{label}/{id} image bytes          (gated per session)
    GET /healthz              liveness
    GET /introspect/buffers   retained image-buffer count (purge audits)

Connections forward client messages into the owning session's serialized
writer; every server-to-client message carries the session's sequence
number, so each connection sees a strictly increasing seq and transcripts
merge globally. Protocol-layer violations (unparseable or oversize frames,
bad seq) close the connection after an error message; game-rule violations
keep it open.

Logging is structural only: no player names, no image data, ever.
"""

from __future__ import annotations

import asyncio
import base64
import logging
import time
from collections import deque
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import FileResponse, HTMLResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from . import protocol
from .dataset import DatasetManifest
from .rasterops import decode_image, encode_jpeg
from .session import GameError, GameService

log = logging.getLogger("breakable_machine.server")

HELLO_TIMEOUT = 10.0


@dataclass
class ServerSettings:
    teacher_credential: str
    active_session_id: str
    rate_limit: float = 5.0  # frames per second per player; 0 disables
    ui_dir: str | None = None


def wire_payload(payload):
    """Converts a session event payload to JSON-ready values.

    Rasters become base64 JPEG strings; bytes stay raw for the codec's
    bytes fields. Returns (converted, image_count) so queued image payloads
    can be audited.
    """
    images = 0

    def conv(o):
        nonlocal images
        if isinstance(o, np.ndarray):
            images += 1
            return base64.b64encode(encode_jpeg(o)).decode("ascii")
        if isinstance(o, (bytes, bytearray)):
            images += 1
            return o
        if isinstance(o, dict):
            return {k: conv(v) for k, v in o.items()}
        if isinstance(o, list):
            return [conv(v) for v in o]
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.bool_):
            return bool(o)
        return o

    return conv(payload), images


class Connection:
    """One realtime client: outbound queue plus session binding."""

    def __init__(self, ws: WebSocket, loop: asyncio.AbstractEventLoop):
        self.ws = ws
        self.loop = loop
        self.queue: asyncio.Queue = asyncio.Queue()
        self.session_id: str | None = None
        self.key: str | None = None  # subscriber key: player_id or teacher key
        self.role: str | None = None
        self.max_seq_out = 0
        self.img_queued = 0
        self.closed = False
        self.frame_times: deque = deque()

    # Called under the session lock, possibly from a worker thread.
    def deliver(self, event) -> None:
        payload, images = wire_payload(event.payload)
        msg = {"type": event.type, "seq": event.seq, **payload}
        self._enqueue(msg, images, close_after=event.type == "bye")

    def send_local(self, msg_type: str, close_after: bool = False, **payload) -> None:
        """For errors outside any live session stream (pre-join, post-purge)."""
        msg = {"type": msg_type, "seq": self.max_seq_out + 1, **payload}
        self._enqueue(msg, 0, close_after=close_after)

    def _enqueue(self, msg: dict, images: int, close_after: bool) -> None:
        if self.closed:
            return
        self.max_seq_out = max(self.max_seq_out, msg["seq"])
        self.img_queued += images
        # Always schedule through the loop so puts from worker threads and
        # from the loop keep their emission order (call_soon_threadsafe is FIFO).
        try:
            self.loop.call_soon_threadsafe(self.queue.put_nowait, (msg, images, close_after))
        except RuntimeError:
            self.img_queued -= images

    def enqueue_stop(self) -> None:
        """Stops the sender after everything already scheduled is flushed."""
        try:
            self.loop.call_soon_threadsafe(self.queue.put_nowait, None)
        except RuntimeError:
            pass

    async def sender(self) -> None:
        while True:
            item = await self.queue.get()
            if item is None:
                return
            msg, images, close_after = item
            try:
                data = protocol.encode(msg)
                await self.ws.send_text(data.decode("utf-8"))
            except Exception:
                self.closed = True
                return
            finally:
                self.img_queued -= images
            if close_after:
                self.closed = True
                try:
                    await self.ws.close()
                except Exception:
                    pass
                return

    def drain(self) -> None:
        self.closed = True
        while not self.queue.empty():
            item = self.queue.get_nowait()
            if item is not None:
                self.img_queued -= item[1]


BUILTIN_INDEX = """<!doctype html>
<html><head><meta charset="utf-8"><title>Breakable Machine</title></head>
<body><h1>Breakable Machine</h1>
<p>The web UI bundle is not installed. The realtime protocol endpoint is at
<code>/rt</code>; build the frontend (see README) or point --ui at a bundle
directory to get the student and teacher apps.</p>
</body></html>"""


def create_app(service: GameService, manifest: DatasetManifest | None,
               settings: ServerSettings) -> FastAPI:
    app = FastAPI(title="breakable-machine", docs_url=None, redoc_url=None, openapi_url=None)
    app.state.service = service
    app.state.settings = settings
    app.state.connections = set()
    app.state.teacher_conn = None

    ui_index = None
    if settings.ui_dir:
        from pathlib import Path

        ui_root = Path(settings.ui_dir)
        if (ui_root / "index.html").is_file():
            ui_index = ui_root / "index.html"
            app.mount("/static", StaticFiles(directory=str(ui_root)), name="static")

    def index_response():
        if ui_index is not None:
            return FileResponse(ui_index)
        return HTMLResponse(BUILTIN_INDEX)

    @app.get("/")
    def landing():
        return index_response()

    @app.get("/join/{token}")
    def join_page(token: str):
        try:
            service.session_by_token(token)
        except GameError:
            return JSONResponse({"code": "E_UNKNOWN_TOKEN"}, status_code=404)
        return index_response()

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "sessions": len(service.session_ids())}

    @app.get("/introspect/buffers")
    def introspect_buffers():
        queued = sum(c.img_queued for c in app.state.connections)
        return {
            "image_buffers": service.count_image_buffers() + queued,
            "sessions": len(service.session_ids()),
        }

    # ---- dataset service ----

    def dataset_gate(session: str | None, cred: str | None):
        """None when access is allowed, else an error response."""
        if manifest is None:
            return JSONResponse({"code": "E_DATASET_LOCKED", "detail": "no dataset configured"},
                                status_code=404)
        if cred is not None and cred == settings.teacher_credential:
            return None  # teacher bypass
        if session is None:
            return JSONResponse({"code": "E_DATASET_LOCKED", "detail": "session required"},
                                status_code=403)
        try:
            if service.dataset_visible(session):
                return None
        except GameError:
            return JSONResponse({"code": "E_UNKNOWN_SESSION"}, status_code=404)
        return JSONResponse({"code": "E_DATASET_LOCKED", "detail": "dataset is locked"},
                            status_code=403)

    @app.get("/dataset")
    def dataset_index(session: str | None = None, cred: str | None = None):
        denied = dataset_gate(session, cred)
        if denied is not None:
            return denied
        return {"labels": manifest.label_listing()}

    @app.get("/dataset/{label}")
    def dataset_label(label: str, session: str | None = None, cred: str | None = None):
        denied = dataset_gate(session, cred)
        if denied is not None:
            return denied
        ids = manifest.labels.get(label)
        if ids is None:
            return JSONResponse({"code": "E_UNKNOWN_LABEL"}, status_code=404)
        return {"label": label, "images": list(ids)}

    @app.get("/dataset/{label}/{image_id}")
    def dataset_image(label: str, image_id: str, session: str | None = None,
                      cred: str | None = None):
        denied = dataset_gate(session, cred)
        if denied is not None:
            return denied
        try:
            path = manifest.image_path(label, image_id)
        except KeyError:
            return JSONResponse({"code": "E_UNKNOWN_IMAGE"}, status_code=404)
        return FileResponse(path)

    # ---- realtime endpoint ----

    @app.websocket("/rt")
    async def rt(ws: WebSocket):
        await ws.accept()
        conn = Connection(ws, asyncio.get_running_loop())
        app.state.connections.add(conn)
        sender = asyncio.create_task(conn.sender())
        try:
            await _serve_connection(app, conn)
        except WebSocketDisconnect:
            pass
        finally:
            if conn.session_id and conn.key:
                service.unsubscribe(conn.session_id, conn.key)
            if app.state.teacher_conn is conn:
                app.state.teacher_conn = None
            conn.enqueue_stop()
            await sender
            conn.drain()
            app.state.connections.discard(conn)
            log.info("connection closed role=%s", conn.role or "unknown")


    return app


def _send_error(service: GameService, conn: Connection, code: str, detail: str,
                close: bool = False) -> None:
    sent = False
    if conn.session_id and conn.key:
        sent = service.send_error(conn.session_id, conn.key, code, detail)
    if not sent:
        conn.send_local("error", code=code, detail=detail, close_after=close)
    elif close:
        conn.send_local("bye", reason="protocol-error", close_after=True)


async def _serve_connection(app: FastAPI, conn: Connection) -> None:
    service: GameService = app.state.service
    guard = protocol.SequenceGuard()

    try:
        raw = await asyncio.wait_for(conn.ws.receive_text(), timeout=HELLO_TIMEOUT)
    except asyncio.TimeoutError:
        conn.send_local("error", code="E_SCHEMA", detail="hello not received in time",
                        close_after=True)
        return
    try:
        hello = protocol.decode(raw, direction="c2s")
        if hello["type"] != "hello":
            raise protocol.ProtocolError("E_SCHEMA", "first message must be hello")
        guard.check(hello["seq"])
        version = hello.get("protocol_version", "")
        if not protocol.version_compatible(version):
            raise protocol.ProtocolError(
                "E_VERSION", f"server speaks {protocol.PROTOCOL_VERSION}, client sent {version!r}"
            )
        _handle_hello(app, conn, hello)
    except protocol.ProtocolError as exc:
        conn.send_local("error", code=exc.code, detail=exc.detail, close_after=True)
        return
    except GameError as exc:
        conn.send_local("error", code=exc.code, detail=exc.detail, close_after=True)
        return

    while True:
        raw = await conn.ws.receive_text()
        try:
            msg = protocol.decode(raw, direction="c2s")
            guard.check(msg["seq"])
        except protocol.ProtocolError as exc:
            _send_error(service, conn, exc.code, exc.detail, close=True)
            return
        try:
            await _dispatch(app, conn, msg)
        except GameError as exc:
            _send_error(service, conn, exc.code, exc.detail)
        except protocol.ProtocolError as exc:
            _send_error(service, conn, exc.code, exc.detail)
        except Exception:
            log.exception("unhandled failure handling a %r message", msg.get("type"))
            _send_error(service, conn, "E_INTERNAL", "unexpected server-side failure",
                        close=True)
            return


def _handle_hello(app: FastAPI, conn: Connection, hello: dict) -> None:
    service: GameService = app.state.service
    settings: ServerSettings = app.state.settings
    role = hello["role"]
    conn.role = role
    if role == "teacher":
        if hello.get("credential") != settings.teacher_credential:
            raise protocol.ProtocolError("E_AUTH", "bad teacher credential")
        session_id = hello.get("session_id", settings.active_session_id)
        key = service.attach_teacher(session_id, conn.deliver)
        conn.session_id = session_id
        conn.key = key
        previous = app.state.teacher_conn
        if previous is not None and previous is not conn and not previous.closed:
            service.unsubscribe(previous.session_id, previous.key)
            previous.send_local("error", code="E_AUTH",
                                detail="teacher connection replaced", close_after=True)
        app.state.teacher_conn = conn
        log.info("teacher attached session=%s", session_id)
        return

    # student
    if hello.get("player_id") and hello.get("session_id"):
        # reconnect: re-snapshot an existing roster entry
        session_id = hello["session_id"]
        player_id = hello["player_id"]
        service.subscribe_player(session_id, player_id, conn.deliver)
        conn.session_id = session_id
        conn.key = player_id
        log.info("player reattached session=%s", session_id)
        return
    token = hello.get("join_token")
    if not token:
        raise protocol.ProtocolError("E_SCHEMA", "student hello needs join_token")
    name = hello.get("display_name")
    if name is None:
        raise protocol.ProtocolError("E_SCHEMA", "student hello needs display_name")
    avatar = None
    if "avatar_jpeg" in hello:
        try:
            avatar = decode_image(hello["avatar_jpeg"])
        except ValueError as exc:
            raise GameError("E_BAD_FRAME", f"avatar: {exc}") from exc
    session, player_id = service.join(token, name, avatar=avatar, subscriber=conn.deliver)
    conn.session_id = session.session_id
    conn.key = player_id
    log.info("player joined session=%s roster=%d", session.session_id, len(session.players))


async def _dispatch(app: FastAPI, conn: Connection, msg: dict) -> None:
    service: GameService = app.state.service
    settings: ServerSettings = app.state.settings
    mtype = msg["type"]

    if mtype == "hello":
        raise protocol.ProtocolError("E_SCHEMA", "duplicate hello")

    if mtype == "frame_submit":
        if conn.role != "student":
            raise GameError("E_AUTH", "only students submit frames")
        _check_rate(conn, settings.rate_limit)
        try:
            frame = decode_image(msg["jpeg"])
        except ValueError as exc:
            raise GameError("E_BAD_FRAME", str(exc)) from exc
        loop = asyncio.get_running_loop()
        # inference off the event loop; the score comes back via the event stream
        await loop.run_in_executor(
            None, service.submit_frame, conn.session_id, conn.key, frame
        )
        return

    if mtype == "avatar":
        if conn.role != "student":
            raise GameError("E_AUTH", "only students set avatars")
        try:
            avatar = decode_image(msg["jpeg"])
        except ValueError as exc:
            raise GameError("E_BAD_FRAME", str(exc)) from exc
        service.set_avatar(conn.session_id, conn.key, avatar)
        return

    if mtype == "control":
        if conn.role != "teacher":
            raise GameError("E_AUTH", "controls are teacher-only")
        _handle_control(service, conn.session_id, msg)
        return

    raise protocol.ProtocolError("E_SCHEMA", f"{mtype!r} is not handled by the server")


def _require(msg: dict, field: str):
    if field not in msg:
        raise protocol.ProtocolError("E_SCHEMA", f"control {msg.get('action')} needs {field!r}")
    return msg[field]


def _handle_control(service: GameService, session_id: str, msg: dict) -> None:
    action = msg["action"]
    if action == "set_challenge":
        scope = msg.get("scope", "all")
        if scope != "all" and not isinstance(scope, list):
            raise protocol.ProtocolError("E_SCHEMA", "scope must be \"all\" or a player list")
        service.set_challenge(session_id, scope, _require(msg, "label_index"))
    elif action == "set_pause":
        service.set_pause(session_id, _require(msg, "flag"))
    elif action == "set_reveal":
        service.set_reveal(session_id, _require(msg, "reveal"))
    elif action == "set_heatmap":
        service.set_heatmap(session_id, _require(msg, "flag"))
    elif action == "set_dataset_unlock":
        service.set_dataset_unlock(session_id, _require(msg, "flag"))
    elif action == "end_session":
        log.info("session ended by teacher session=%s", session_id)
        service.end_session(session_id)
    else:  # unreachable: the codec enforces the enum
        raise protocol.ProtocolError("E_SCHEMA", f"unknown control action {action!r}")


def _check_rate(conn: Connection, limit: float) -> None:
    if limit <= 0:
        return
    now = time.monotonic()
    window = conn.frame_times
    while window and now - window[0] > 1.0:
        window.popleft()
    if len(window) >= limit:
        raise GameError("E_RATE_LIMITED", f"more than {limit:g} frames/s")
    window.append(now)
