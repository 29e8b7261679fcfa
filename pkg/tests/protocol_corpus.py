"""Random schema-valid message generator; drives the round-trip tests."""

import random
import string

from breakable_machine.protocol import MESSAGES, PROTOCOL_VERSION


def _rand_string(rng: random.Random) -> str:
    n = rng.randint(0, 24)
    return "".join(rng.choice(string.printable[:94]) for _ in range(n))


def _rand_value(rng: random.Random, kind: str, enum=None):
    if enum is not None:
        return rng.choice(enum)
    if kind == "string":
        return _rand_string(rng)
    if kind == "int":
        return rng.randint(-(2**31), 2**31)
    if kind == "float":
        return rng.choice([rng.uniform(-1e6, 1e6), float(rng.randint(-5, 5)), 0.0, 1.0])
    if kind == "bool":
        return rng.random() < 0.5
    if kind == "bytes":
        return rng.randbytes(rng.randint(0, 64))
    if kind == "float_list":
        return [rng.uniform(0, 1) for _ in range(rng.randint(0, 49))]
    if kind == "string_list":
        return [_rand_string(rng) for _ in range(rng.randint(0, 5))]
    if kind == "object":
        return {_rand_string(rng) or "k": _rand_value(rng, "string") for _ in range(rng.randint(0, 4))}
    if kind == "object_list":
        return [_rand_value(rng, "object") for _ in range(rng.randint(0, 4))]
    raise AssertionError(kind)


def generate_message(rng: random.Random, mtype: str | None = None) -> dict:
    if mtype is None:
        mtype = rng.choice(sorted(MESSAGES))
    spec = MESSAGES[mtype]
    msg = {"type": mtype, "seq": rng.randint(0, 10**9)}
    for name, field in spec["fields"].items():
        if not field["required"] and rng.random() < 0.35:
            continue
        kinds = field["kind"] if isinstance(field["kind"], list) else [field["kind"]]
        kind = rng.choice(kinds)
        value = _rand_value(rng, kind, field.get("enum"))
        if name == "protocol_version":
            value = PROTOCOL_VERSION
        msg[name] = value
    if rng.random() < 0.3:  # forward-compat: unknown fields must round-trip
        msg["x_" + _rand_string(rng).replace(" ", "_")[:8]] = _rand_value(rng, "string")
    return msg
