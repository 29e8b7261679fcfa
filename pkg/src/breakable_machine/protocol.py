"""Wire protocol: JSON frames validated against the shipped schema.

One message is one UTF-8 JSON object with a "type" discriminator and a
per-sender, per-connection strictly increasing "seq". decode(encode(m))
returns m for every schema-valid message; unknown fields pass through
untouched so newer peers can extend messages without breaking older ones.
Fields of kind "bytes" hold raw bytes in memory and base64 text on the wire.
"""

from __future__ import annotations

import base64
import binascii
import importlib.resources
import json

SCHEMA: dict = json.loads(
    importlib.resources.files("breakable_machine").joinpath("schema.json").read_text()
)
PROTOCOL_VERSION: str = SCHEMA["protocol_version"]
MAX_FRAME_BYTES: int = SCHEMA["max_frame_bytes"]
ERROR_CODES: dict = SCHEMA["error_codes"]
MESSAGES: dict = SCHEMA["messages"]


class ProtocolError(Exception):
    def __init__(self, code: str, detail: str):
        super().__init__(f"{code}: {detail}")
        self.code = code
        self.detail = detail


def version_compatible(version: str) -> bool:
    """Major versions must match; minor differences are tolerated."""
    if not isinstance(version, str) or "." not in version:
        return False
    return version.split(".", 1)[0] == PROTOCOL_VERSION.split(".", 1)[0]


def _kind_ok(kind: str, value) -> bool:
    if kind == "string":
        return isinstance(value, str)
    if kind == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == "float":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "bool":
        return isinstance(value, bool)
    if kind == "bytes":
        return isinstance(value, (bytes, bytearray))
    if kind == "float_list":
        return isinstance(value, list) and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        )
    if kind == "string_list":
        return isinstance(value, list) and all(isinstance(v, str) for v in value)
    if kind == "object":
        return isinstance(value, dict)
    if kind == "object_list":
        return isinstance(value, list) and all(isinstance(v, dict) for v in value)
    raise AssertionError(f"schema declares unknown kind {kind!r}")


def _validate(msg: dict, wire_bytes_as_text: bool, direction: str | None) -> dict:
    """Checks the envelope and declared fields; returns the type's field specs."""
    if not isinstance(msg, dict):
        raise ProtocolError("E_SCHEMA", "frame is not a JSON object")
    mtype = msg.get("type")
    if not isinstance(mtype, str):
        raise ProtocolError("E_SCHEMA", "missing message type")
    spec = MESSAGES.get(mtype)
    if spec is None:
        raise ProtocolError("E_UNKNOWN_TYPE", f"unknown message type {mtype!r}")
    if direction is not None and spec["direction"] != direction:
        raise ProtocolError("E_SCHEMA", f"{mtype!r} is not a {direction} message")
    seq = msg.get("seq")
    if not isinstance(seq, int) or isinstance(seq, bool) or seq < 0:
        raise ProtocolError("E_SCHEMA", "seq must be a non-negative integer")
    for name, field in spec["fields"].items():
        if name not in msg:
            if field["required"]:
                raise ProtocolError("E_SCHEMA", f"{mtype}: missing required field {name!r}")
            continue
        value = msg[name]
        kinds = field["kind"] if isinstance(field["kind"], list) else [field["kind"]]
        if wire_bytes_as_text:
            kinds = ["string" if k == "bytes" else k for k in kinds]
        if not any(_kind_ok(k, value) for k in kinds):
            raise ProtocolError("E_SCHEMA", f"{mtype}: field {name!r} has the wrong kind")
        enum = field.get("enum")
        if enum is not None and value not in enum:
            raise ProtocolError("E_SCHEMA", f"{mtype}: field {name!r} must be one of {enum}")
    return spec["fields"]


def _bytes_fields(fields: dict) -> list[str]:
    return [n for n, f in fields.items() if f["kind"] == "bytes"]


def encode(msg: dict) -> bytes:
    """Serializes a schema-valid message to one wire frame."""
    fields = _validate(msg, wire_bytes_as_text=False, direction=None)
    out = dict(msg)
    for name in _bytes_fields(fields):
        if name in out:
            out[name] = base64.b64encode(bytes(out[name])).decode("ascii")
    try:
        data = json.dumps(out, sort_keys=True, separators=(",", ":")).encode("utf-8")
    except (TypeError, ValueError) as exc:
        raise ProtocolError("E_SCHEMA", f"unencodable message content: {exc}") from exc
    if len(data) > MAX_FRAME_BYTES:
        raise ProtocolError("E_OVERSIZE", f"frame of {len(data)} bytes exceeds {MAX_FRAME_BYTES}")
    return data


def decode(data: bytes | str, direction: str | None = None) -> dict:
    """Parses and validates one wire frame; returns the message dict.

    direction, when given ("c2s" or "s2c"), also rejects messages that a
    peer of the other side must never send.
    """
    if isinstance(data, str):
        data = data.encode("utf-8")
    if len(data) > MAX_FRAME_BYTES:
        raise ProtocolError("E_OVERSIZE", f"frame of {len(data)} bytes exceeds {MAX_FRAME_BYTES}")
    try:
        msg = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError("E_SCHEMA", f"malformed frame: {exc}") from exc
    fields = _validate(msg, wire_bytes_as_text=True, direction=direction)
    for name in _bytes_fields(fields):
        if name in msg:
            try:
                msg[name] = base64.b64decode(msg[name].encode("ascii"), validate=True)
            except (binascii.Error, UnicodeEncodeError) as exc:
                raise ProtocolError("E_SCHEMA", f"field {name!r} is not valid base64") from exc
    return msg


class SequenceGuard:
    """Asserts that received sequence numbers strictly increase."""

    def __init__(self):
        self.last: int | None = None

    def check(self, seq: int) -> None:
        if self.last is not None and seq <= self.last:
            raise ProtocolError("E_SEQ", f"seq {seq} does not increase past {self.last}")
        self.last = seq
