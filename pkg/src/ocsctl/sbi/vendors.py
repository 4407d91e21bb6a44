"""Converters from unified operations to the three emulated vendor protocols.

Every vendor protocol is line oriented and answers each request line with
exactly one reply unit; event lines may be interleaved at any point.
Cross-connect changes are grouped between a begin and a commit marker so
the device applies them as one configuration.

Vendor A (text)::

    XC ADD <name> <rx> <tx> | XC DEL <name> | XC LIST | PWR <port>
    ALARM <port> HI|LO <dbm> | MON <port> ON [<nm>] | MON <port> OFF
    BEGIN | COMMIT
    -> OK [<value>] | ERR <reason>; XC LIST precedes OK with "<name> <rx> <tx>" lines
    async: EVT <port> HI|LO <dbm>

Vendor B (JSON lines)::

    {"op": "connect", "label", "in", "out"} | {"op": "disconnect", "label"}
    {"op": "list"} | {"op": "power", "port"} | {"op": "alarm", "port", "hi"?, "lo"?}
    {"op": "monitor", "port", "enabled", "wavelength"?} | {"op": "begin"} | {"op": "commit"}
    -> {"ok": true, ...} | {"ok": false, "reason"}
    async: {"event": "alarm", "port", "level": "hi"|"lo", "dbm"}

Vendor C (path strings)::

    SET /xc/<name> rx=<p> tx=<p> | DEL /xc/<name> | GET /xc | GET /power/<port>
    SET /alarm/<port> hi=<dbm> lo=<dbm> | SET /monitor/<port> enabled=true|false wl=<nm>
    POST /tx/begin | POST /tx/commit
    -> "200 [<body>]" | "<4xx> <reason>"; GET /xc body is "name,rx,tx;name,rx,tx"
    async: NOTIFY /alarm/<port> level=hi|lo dbm=<dbm>
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..errors import RpcError
from ..model import InternalConnection, NotificationKind

LEVELS = {"hi": NotificationKind.SIGNAL_DETECTED, "lo": NotificationKind.SIGNAL_DEGRADED}


def fmt(value: float) -> str:
    return f"{float(value):g}"


@dataclass
class UnifiedEdit:
    create: list[InternalConnection] = field(default_factory=list)
    delete: list[str] = field(default_factory=list)
    monitor: list[dict] = field(default_factory=list)
    alarm: list[dict] = field(default_factory=list)

    @classmethod
    def from_payload(cls, payload: dict) -> "UnifiedEdit":
        unknown = set(payload) - {"create", "delete", "monitor", "alarm"}
        if unknown:
            raise RpcError(f"unknown edit-config sections {sorted(unknown)}")
        try:
            edit = cls(
                create=[InternalConnection(c["name"], c["rx"], c["tx"]) for c in payload.get("create", [])],
                delete=[str(n) for n in payload.get("delete", [])],
                monitor=[dict(m) for m in payload.get("monitor", [])],
                alarm=[dict(a) for a in payload.get("alarm", [])],
            )
        except (KeyError, TypeError) as exc:
            raise RpcError(f"malformed edit-config payload: {exc}") from None
        for item in edit.monitor + edit.alarm:
            if "port" not in item:
                raise RpcError("monitor/alarm entries need a port")
        for c in edit.create:
            for token in (c.name, c.rx_port, c.tx_port):
                if not isinstance(token, str) or not token or any(ch.isspace() or ch in ",;" for ch in token):
                    raise RpcError(f"bad token {token!r} in connection")
        return edit

    @property
    def touches_xc(self) -> bool:
        return bool(self.create or self.delete)


@dataclass
class ReplyUnit:
    ok: bool
    reason: str = ""
    value: object = None


class Converter:
    vendor = "?"

    def edit_lines(self, edit: UnifiedEdit) -> list[str]:
        raise NotImplementedError

    def list_lines(self) -> list[str]:
        raise NotImplementedError

    def parse_list(self, unit: ReplyUnit) -> list[InternalConnection]:
        raise NotImplementedError

    def power_lines(self, port: str) -> list[str]:
        raise NotImplementedError

    def parse_power(self, unit: ReplyUnit) -> float:
        return float(unit.value)

    def feed(self, line: str):
        """Classify one incoming line.

        Returns ("event", (port, kind, dbm)), ("reply", ReplyUnit), or
        (None, None) while a multi-line reply is still accumulating.
        """
        raise NotImplementedError


class VendorAConverter(Converter):
    vendor = "A"

    def __init__(self):
        self._rows: list[str] = []

    def edit_lines(self, edit: UnifiedEdit) -> list[str]:
        lines = []
        for m in edit.monitor:
            if m.get("enabled", True):
                wl = m.get("wavelength")
                lines.append(f"MON {m['port']} ON" + (f" {fmt(wl)}" if wl is not None else ""))
            else:
                lines.append(f"MON {m['port']} OFF")
        for a in edit.alarm:
            if a.get("high") is not None:
                lines.append(f"ALARM {a['port']} HI {fmt(a['high'])}")
            if a.get("low") is not None:
                lines.append(f"ALARM {a['port']} LO {fmt(a['low'])}")
        xc = [f"XC DEL {name}" for name in edit.delete]
        xc += [f"XC ADD {c.name} {c.rx_port} {c.tx_port}" for c in edit.create]
        if xc:
            lines += ["BEGIN", *xc, "COMMIT"]
        return lines

    def list_lines(self) -> list[str]:
        return ["XC LIST"]

    def parse_list(self, unit: ReplyUnit) -> list[InternalConnection]:
        conns = []
        for row in unit.value or []:
            name, rx, tx = row.split()
            conns.append(InternalConnection(name, rx, tx))
        return conns

    def power_lines(self, port: str) -> list[str]:
        return [f"PWR {port}"]

    def feed(self, line: str):
        if line.startswith("EVT "):
            _, port, level, dbm = line.split()
            return "event", (port, LEVELS[level.lower()], float(dbm))
        if line == "OK" or line.startswith("OK "):
            rows, self._rows = self._rows, []
            rest = line[3:].strip()
            return "reply", ReplyUnit(True, value=rows if rows or not rest else rest)
        if line.startswith("ERR"):
            self._rows = []
            return "reply", ReplyUnit(False, line[3:].strip() or "error")
        self._rows.append(line)
        return None, None


class VendorBConverter(Converter):
    vendor = "B"

    @staticmethod
    def _dump(obj: dict) -> str:
        return json.dumps(obj, separators=(",", ":"))

    def edit_lines(self, edit: UnifiedEdit) -> list[str]:
        lines = []
        for m in edit.monitor:
            body = {"op": "monitor", "port": m["port"], "enabled": bool(m.get("enabled", True))}
            if m.get("wavelength") is not None:
                body["wavelength"] = m["wavelength"]
            lines.append(self._dump(body))
        for a in edit.alarm:
            body = {"op": "alarm", "port": a["port"]}
            if a.get("high") is not None:
                body["hi"] = a["high"]
            if a.get("low") is not None:
                body["lo"] = a["low"]
            lines.append(self._dump(body))
        xc = [self._dump({"op": "disconnect", "label": n}) for n in edit.delete]
        xc += [self._dump({"op": "connect", "label": c.name, "in": c.rx_port, "out": c.tx_port}) for c in edit.create]
        if xc:
            lines += [self._dump({"op": "begin"}), *xc, self._dump({"op": "commit"})]
        return lines

    def list_lines(self) -> list[str]:
        return [self._dump({"op": "list"})]

    def parse_list(self, unit: ReplyUnit) -> list[InternalConnection]:
        return [InternalConnection(x["label"], x["in"], x["out"]) for x in unit.value.get("xc", [])]

    def power_lines(self, port: str) -> list[str]:
        return [self._dump({"op": "power", "port": port})]

    def parse_power(self, unit: ReplyUnit) -> float:
        return float(unit.value["dbm"])

    def feed(self, line: str):
        obj = json.loads(line)
        if "event" in obj:
            return "event", (obj["port"], LEVELS[obj["level"]], float(obj["dbm"]))
        if obj.get("ok"):
            return "reply", ReplyUnit(True, value=obj)
        return "reply", ReplyUnit(False, obj.get("reason", "error"))


class VendorCConverter(Converter):
    vendor = "C"

    def edit_lines(self, edit: UnifiedEdit) -> list[str]:
        lines = []
        for m in edit.monitor:
            line = f"SET /monitor/{m['port']} enabled={'true' if m.get('enabled', True) else 'false'}"
            if m.get("wavelength") is not None:
                line += f" wl={fmt(m['wavelength'])}"
            lines.append(line)
        for a in edit.alarm:
            parts = []
            if a.get("high") is not None:
                parts.append(f"hi={fmt(a['high'])}")
            if a.get("low") is not None:
                parts.append(f"lo={fmt(a['low'])}")
            if parts:
                lines.append(f"SET /alarm/{a['port']} " + " ".join(parts))
        xc = [f"DEL /xc/{n}" for n in edit.delete]
        xc += [f"SET /xc/{c.name} rx={c.rx_port} tx={c.tx_port}" for c in edit.create]
        if xc:
            lines += ["POST /tx/begin", *xc, "POST /tx/commit"]
        return lines

    def list_lines(self) -> list[str]:
        return ["GET /xc"]

    def parse_list(self, unit: ReplyUnit) -> list[InternalConnection]:
        body = unit.value or ""
        return [InternalConnection(*entry.split(",")) for entry in body.split(";") if entry]

    def power_lines(self, port: str) -> list[str]:
        return [f"GET /power/{port}"]

    def parse_power(self, unit: ReplyUnit) -> float:
        key, _, value = str(unit.value).partition("=")
        return float(value)

    def feed(self, line: str):
        if line.startswith("NOTIFY /alarm/"):
            path, *params = line[len("NOTIFY "):].split()
            fields = dict(p.split("=", 1) for p in params)
            return "event", (path[len("/alarm/"):], LEVELS[fields["level"]], float(fields["dbm"]))
        status, _, body = line.partition(" ")
        if status == "200":
            return "reply", ReplyUnit(True, value=body)
        return "reply", ReplyUnit(False, f"{status} {body}".strip())


CONVERTERS: dict[str, type[Converter]] = {"A": VendorAConverter, "B": VendorBConverter, "C": VendorCConverter}


def converter_for(vendor: str) -> Converter:
    try:
        return CONVERTERS[vendor.upper()]()
    except KeyError:
        raise ValueError(f"unknown vendor {vendor!r}") from None
