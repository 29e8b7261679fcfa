"""Command line entry points.

    breakable-machine serve --model net.bmn --dataset ./data [--port 8080]
                            [--bind 0.0.0.0] [--reveal n|hidden]
                            [--max-players n] [--rate-limit n] [--ui dir]
                            [--log-file path]
    breakable-machine make-model --labels a,b,c --out net.bmn [--seed 0]

BM_LOG_LEVEL controls verbosity (DEBUG/INFO/WARNING/ERROR). The log is
structural events only; it never contains player names or image data.
"""

from __future__ import annotations

import argparse
import logging
import os
import secrets
import socket
import sys
import threading

from .dataset import scan_dataset
from .nn import ModelFormatError, bmnet_tiny, load_model, save_model
from .scoring import ModelScorer
from .session import GameService, SessionConfig


def _parse_reveal(text: str):
    if text == "hidden":
        return "hidden"
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("reveal must be a non-negative integer or 'hidden'")
    if value < 0:
        raise argparse.ArgumentTypeError("reveal must be a non-negative integer or 'hidden'")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="breakable-machine")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the classroom game server")
    serve.add_argument("--model", required=True, help="BMNet model file (.bmn)")
    serve.add_argument("--dataset", default=None, help="training-data directory (label subdirs)")
    serve.add_argument("--port", type=int, default=8080, help="port; 0 asks the OS")
    serve.add_argument("--bind", default="0.0.0.0", help="local interface to bind")
    serve.add_argument("--reveal", type=_parse_reveal, default="hidden",
                       help="how many top scores show numbers (default hidden)")
    serve.add_argument("--max-players", type=int, default=32)
    serve.add_argument("--rate-limit", type=float, default=5.0,
                       help="max frames per second per player (0 disables)")
    serve.add_argument("--ui", default=None, help="web UI bundle directory (default: autodetect)")
    serve.add_argument("--log-file", default="breakable-machine.log")

    make = sub.add_parser("make-model", help="write a seeded BMNet-Tiny model file")
    make.add_argument("--labels", required=True, help="comma-separated class labels")
    make.add_argument("--out", required=True)
    make.add_argument("--seed", type=int, default=0)
    return parser


def _setup_logging(log_file: str) -> None:
    level = getattr(logging, os.environ.get("BM_LOG_LEVEL", "INFO").upper(), logging.INFO)
    logger = logging.getLogger("breakable_machine")
    logger.setLevel(level)
    fmt = logging.Formatter("%(asctime)s %(levelname)s %(name)s %(message)s")
    fh = logging.FileHandler(log_file)
    fh.setFormatter(fmt)
    sh = logging.StreamHandler(sys.stderr)
    sh.setFormatter(fmt)
    logger.addHandler(fh)
    logger.addHandler(sh)


def _advertised_host(bind: str) -> str:
    if bind not in ("0.0.0.0", "::"):
        return bind
    # Learn the LAN-facing interface address; a UDP connect sends no packets.
    try:
        with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
            s.connect(("10.254.254.254", 1))
            return s.getsockname()[0]
    except OSError:
        return "127.0.0.1"


def find_ui_dir(explicit: str | None) -> str | None:
    if explicit:
        return explicit
    env = os.environ.get("BM_UI_DIR")
    if env:
        return env
    here = os.path.dirname(os.path.abspath(__file__))
    for candidate in (
        os.path.join(os.getcwd(), "frontend", "dist"),
        os.path.abspath(os.path.join(here, "..", "..", "frontend", "dist")),
    ):
        if os.path.isfile(os.path.join(candidate, "index.html")):
            return candidate
    return None


def cmd_serve(args) -> int:
    import uvicorn

    from .server import ServerSettings, create_app

    _setup_logging(args.log_file)
    log = logging.getLogger("breakable_machine.server")

    try:
        with open(args.model, "rb") as fh:
            model = load_model(fh.read())
    except OSError as exc:
        print(f"error: cannot read model file {args.model}: {exc}", file=sys.stderr)
        return 2
    except ModelFormatError as exc:
        print(f"error: bad model file {args.model}: {exc}", file=sys.stderr)
        return 2

    manifest = None
    if args.dataset is not None:
        try:
            manifest = scan_dataset(args.dataset, model.labels)
        except FileNotFoundError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2

    service = GameService(ModelScorer(model), model.labels, input_size=model.input_size)
    session = service.create_session(SessionConfig(reveal=args.reveal,
                                                   max_players=args.max_players))
    credential = secrets.token_urlsafe(12)
    settings = ServerSettings(
        teacher_credential=credential,
        active_session_id=session.session_id,
        rate_limit=args.rate_limit,
        ui_dir=find_ui_dir(args.ui),
    )
    app = create_app(service, manifest, settings)

    config = uvicorn.Config(app, host=args.bind, port=args.port, log_level="warning")
    server = uvicorn.Server(config)

    def announce():
        while not server.started:
            if getattr(server, "should_exit", False):
                return
            threading.Event().wait(0.05)
        sock = server.servers[0].sockets[0]
        port = sock.getsockname()[1]
        base = f"http://{_advertised_host(args.bind)}:{port}"
        service.base_url = base
        print(f"breakable-machine serving on {base}", flush=True)
        print(f"teacher url: {base}/?role=teacher", flush=True)
        print(f"teacher credential: {credential}", flush=True)
        print(f"student join url: {base}/join/{session.join_token}", flush=True)
        print(f"session id: {session.session_id}", flush=True)
        log.info("server started sessions=%d", len(service.session_ids()))

    threading.Thread(target=announce, daemon=True).start()
    try:
        server.run()
    except KeyboardInterrupt:
        pass
    return 0


def cmd_make_model(args) -> int:
    labels = [s.strip() for s in args.labels.split(",") if s.strip()]
    if not labels:
        print("error: --labels must name at least one class", file=sys.stderr)
        return 2
    model = bmnet_tiny(labels, seed=args.seed)
    with open(args.out, "wb") as fh:
        fh.write(save_model(model))
    print(f"wrote {args.out}: input {model.input_size}px, "
          f"{model.feature_channels}x{model.feature_size}x{model.feature_size} features, "
          f"{len(labels)} labels")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        return cmd_serve(args)
    if args.command == "make-model":
        return cmd_make_model(args)
    raise AssertionError(args.command)


if __name__ == "__main__":
    sys.exit(main())
