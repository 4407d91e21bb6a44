"""Unified SBI framing: newline-delimited JSON over TCP.

Requests are ``{"rpc-id": n, "rpc": name, ...}``. Replies echo the id with
either ``reply`` or ``error``; notifications arrive unsolicited as
``{"notification": {"port", "kind", "dbm", "ts"}}``.
"""

from __future__ import annotations

import asyncio
import json
from dataclasses import dataclass, field

from ..model import InternalConnection

RPCS = ("edit-config", "get", "subscribe", "hello")
STREAM_LIMIT = 1 << 22


def encode(obj) -> bytes:
    return json.dumps(obj, separators=(",", ":")).encode() + b"\n"


async def read_json(reader: asyncio.StreamReader):
    """Next decoded frame, or None at EOF. Raises ValueError on garbage."""
    line = await reader.readline()
    if not line:
        return None
    return json.loads(line)


@dataclass
class DeviceState:
    connections: list[InternalConnection] = field(default_factory=list)
    power: dict[str, float] = field(default_factory=dict)
    wavelength: dict[str, float] = field(default_factory=dict)

    def to_wire(self) -> dict:
        power = []
        for port in sorted(self.power):
            entry = {"port": port, "dbm": self.power[port]}
            if port in self.wavelength:
                entry["wavelength"] = self.wavelength[port]
            power.append(entry)
        return {"connections": [c.to_dict() for c in sorted(self.connections)], "power": power}

    @classmethod
    def from_wire(cls, reply: dict) -> "DeviceState":
        state = cls([InternalConnection.from_dict(c) for c in reply.get("connections", [])])
        for entry in reply.get("power", []):
            state.power[entry["port"]] = entry["dbm"]
            if entry.get("wavelength") is not None:
                state.wavelength[entry["port"]] = entry["wavelength"]
        return state

    def names(self) -> set[str]:
        return {c.name for c in self.connections}


def edit_payload(create=(), delete=(), monitor=(), alarm=()) -> dict:
    body: dict = {}
    if create:
        body["create"] = [c.to_dict() for c in create]
    if delete:
        body["delete"] = list(delete)
    if monitor:
        body["monitor"] = list(monitor)
    if alarm:
        body["alarm"] = list(alarm)
    return body
