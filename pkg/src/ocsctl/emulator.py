"""Emulated OCS fleet used as the test substrate.

``OcsDevice`` is the vendor-neutral device model. It holds port exclusivity,
delete-by-name, the power monitor, edge-triggered alarms, the configuration
latency and fault modes. ``OcsEmulator`` serves it over one vendor protocol
(grammar in :mod:`ocsctl.sbi.vendors`). ``TerminalEmulator`` is a two-port
endpoint that speaks the unified SBI directly. ``OpticalPlant`` moves light
through the fleet (lossless, dark ports at -99 dBm). ``Fleet`` wires all of
it together from a topology document.

Fault injection, power changes and snapshots are in-process calls only and
are never reachable over a vendor port.
"""

from __future__ import annotations

import asyncio
import enum
import json
import logging
import random
import time
from dataclasses import dataclass, field
from typing import Callable

from .errors import RpcError
from .model import DARK_DBM, THRESHOLD_MAX_DBM, THRESHOLD_MIN_DBM, NotificationKind
from .sbi.server import UnifiedServer
from .sbi.translator import Translator
from .sbi.vendors import fmt

log = logging.getLogger(__name__)

# a terminal raises loss-of-signal on its receivers below this level
TERMINAL_LOS_DBM = -30.0


class FaultMode(str, enum.Enum):
    NONE = "NONE"
    SERVER_DOWN = "SERVER_DOWN"
    TIMEOUT_ALL = "TIMEOUT_ALL"
    LIE_ON_APPLY = "LIE_ON_APPLY"


@dataclass(frozen=True)
class LatencyModel:
    kind: str = "fixed"
    mean: float = 0.0
    std: float = 0.0

    @classmethod
    def fixed(cls, seconds: float) -> "LatencyModel":
        return cls("fixed", seconds, 0.0)

    @classmethod
    def normal(cls, mean: float, std: float) -> "LatencyModel":
        return cls("normal", mean, std)

    @classmethod
    def parse(cls, text: str) -> "LatencyModel":
        """``normal:0.7:0.07``, ``fixed:0.5`` or a bare number of seconds."""
        parts = text.split(":")
        if parts[0] == "normal" and len(parts) == 3:
            return cls.normal(float(parts[1]), float(parts[2]))
        if parts[0] == "fixed" and len(parts) == 2:
            return cls.fixed(float(parts[1]))
        if len(parts) == 1:
            return cls.fixed(float(parts[0]))
        raise ValueError(f"bad latency model {text!r}")

    def sample(self, rng: random.Random) -> float:
        if self.kind == "normal":
            return max(0.0, rng.gauss(self.mean, self.std))
        return self.mean


@dataclass
class EmulatorProfile:
    vendor: str = "A"
    latency: LatencyModel = field(default_factory=LatencyModel)
    fault_mode: FaultMode = FaultMode.NONE
    port_powers: dict[str, float] = field(default_factory=dict)
    seed: object = 0


class DeviceError(Exception):
    pass


EventListener = Callable[[str, str, float], None]


class OcsDevice:
    def __init__(self, device_id: str, tx_ports, rx_ports, latency: LatencyModel | None = None, seed=0):
        self.device_id = device_id
        self.tx_ports = frozenset(tx_ports)
        self.rx_ports = frozenset(rx_ports)
        self.latency = latency or LatencyModel()
        self.rng = random.Random(f"{seed}:{device_id}")
        self.connections: dict[str, tuple[str, str]] = {}
        self.monitors: dict[str, dict] = {}
        self.alarms: dict[str, dict] = {}
        self.power: dict[str, float] = {p: DARK_DBM for p in self.tx_ports | self.rx_ports}
        self.lie = False
        self.listeners: set[EventListener] = set()
        self.on_change: Callable[[], None] | None = None
        self.applied_latencies: list[float] = []
        self.requests = 0
        self._lock: asyncio.Lock | None = None

    def reseed(self, seed) -> None:
        self.rng = random.Random(seed)

    @property
    def lock(self) -> asyncio.Lock:
        if self._lock is None:
            self._lock = asyncio.Lock()
        return self._lock

    def _port(self, port: str) -> str:
        if port not in self.power:
            raise DeviceError(f"unknown port {port}")
        return port

    def validate(self, ops: list[tuple]) -> dict[str, tuple[str, str]]:
        """Return the connection table after ``ops``; raise if any op is invalid."""
        table = dict(self.connections)
        for op in ops:
            if op[0] == "del":
                if op[1] not in table:
                    raise DeviceError(f"no connection named {op[1]}")
                del table[op[1]]
            else:
                _, name, rx, tx = op
                if name in table:
                    raise DeviceError(f"connection {name} exists")
                if rx not in self.rx_ports:
                    raise DeviceError(f"{rx} is not an Rx port")
                if tx not in self.tx_ports:
                    raise DeviceError(f"{tx} is not a Tx port")
                for other, (orx, otx) in table.items():
                    if orx == rx:
                        raise DeviceError(f"busy: {rx} used by {other}")
                    if otx == tx:
                        raise DeviceError(f"busy: {tx} used by {other}")
                table[name] = (rx, tx)
        return table

    async def commit(self, ops: list[tuple]) -> None:
        """Apply cross-connect ops as one configuration after the sampled latency."""
        if not ops:
            return
        async with self.lock:
            delay = self.latency.sample(self.rng)
            self.applied_latencies.append(delay)
            if delay:
                await asyncio.sleep(delay)
            table = self.validate(ops)
            if self.lie:
                return
            self.connections = table
        if self.on_change is not None:
            self.on_change()

    def set_monitor(self, port: str, enabled: bool, wavelength: float | None = None) -> None:
        self._port(port)
        self.monitors[port] = {"enabled": bool(enabled), "wavelength": wavelength}

    def monitored(self, port: str) -> bool:
        return self.monitors.get(port, {}).get("enabled", False)

    def set_alarm(self, port: str, high: float | None = None, low: float | None = None) -> None:
        self._port(port)
        if not self.monitored(port):
            raise DeviceError(f"monitor disabled on {port}")
        for value in (high, low):
            if value is not None and not THRESHOLD_MIN_DBM <= value <= THRESHOLD_MAX_DBM:
                raise DeviceError(f"threshold {value} out of range")
        entry = self.alarms.setdefault(port, {"high": None, "low": None})
        if high is not None:
            entry["high"] = float(high)
        if low is not None:
            entry["low"] = float(low)

    def read_power(self, port: str) -> float:
        self._port(port)
        if not self.monitored(port):
            raise DeviceError(f"monitor disabled on {port}")
        return self.power[port]

    def set_power(self, port: str, dbm: float) -> None:
        old = self.power[self._port(port)]
        self.power[port] = dbm
        if old == dbm or not self.monitored(port):
            return
        alarm = self.alarms.get(port, {})
        high, low = alarm.get("high"), alarm.get("low")
        if high is not None and old < high <= dbm:
            self._emit(port, "hi", dbm)
        if low is not None and old > low >= dbm:
            self._emit(port, "lo", dbm)

    def _emit(self, port: str, level: str, dbm: float) -> None:
        for listener in list(self.listeners):
            listener(port, level, dbm)

    def snapshot(self) -> dict:
        return {
            "connections": sorted([name, rx, tx] for name, (rx, tx) in self.connections.items()),
        }


# -- vendor protocol servers -------------------------------------------------

class _Conn:
    def __init__(self):
        self.staged: list[tuple] | None = None


class VendorProtocol:
    """Server side of a vendor grammar; one reply unit per request line."""

    def __init__(self, device: OcsDevice):
        self.device = device

    async def handle(self, line: str, conn: _Conn) -> list[str]:
        raise NotImplementedError

    def event_line(self, port: str, level: str, dbm: float) -> str:
        raise NotImplementedError

    async def _xc(self, ops: list[tuple], conn: _Conn) -> None:
        if conn.staged is not None:
            conn.staged.extend(ops)
        else:
            await self.device.commit(ops)

    async def _commit(self, conn: _Conn) -> None:
        if conn.staged is None:
            raise DeviceError("no open transaction")
        ops, conn.staged = conn.staged, None
        await self.device.commit(ops)


class VendorAProtocol(VendorProtocol):
    async def handle(self, line: str, conn: _Conn) -> list[str]:
        words = line.split()
        try:
            return await self._handle(words, conn)
        except DeviceError as exc:
            return [f"ERR {exc}"]
        except (IndexError, ValueError):
            return [f"ERR syntax: {line}"]

    async def _handle(self, w: list[str], conn: _Conn) -> list[str]:
        d = self.device
        if w[:2] == ["XC", "ADD"] and len(w) == 5:
            await self._xc([("add", w[2], w[3], w[4])], conn)
        elif w[:2] == ["XC", "DEL"] and len(w) == 3:
            await self._xc([("del", w[2])], conn)
        elif w == ["XC", "LIST"]:
            return [f"{n} {rx} {tx}" for n, (rx, tx) in sorted(d.connections.items())] + ["OK"]
        elif w[0] == "PWR" and len(w) == 2:
            return [f"OK {fmt(d.read_power(w[1]))}"]
        elif w[0] == "ALARM" and len(w) == 4 and w[2] in ("HI", "LO"):
            value = float(w[3])
            d.set_alarm(w[1], high=value if w[2] == "HI" else None, low=value if w[2] == "LO" else None)
        elif w[0] == "MON" and len(w) in (3, 4) and w[2] in ("ON", "OFF"):
            d.set_monitor(w[1], w[2] == "ON", float(w[3]) if len(w) == 4 else None)
        elif w == ["BEGIN"]:
            conn.staged = []
        elif w == ["COMMIT"]:
            await self._commit(conn)
        else:
            return [f"ERR syntax: {' '.join(w)}"]
        return ["OK"]

    def event_line(self, port, level, dbm):
        return f"EVT {port} {level.upper()} {fmt(dbm)}"


class VendorBProtocol(VendorProtocol):
    async def handle(self, line: str, conn: _Conn) -> list[str]:
        try:
            req = json.loads(line)
            reply = await self._handle(req, conn)
        except DeviceError as exc:
            reply = {"ok": False, "reason": str(exc)}
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            reply = {"ok": False, "reason": f"bad request: {exc}"}
        return [json.dumps(reply, separators=(",", ":"))]

    async def _handle(self, req: dict, conn: _Conn) -> dict:
        d = self.device
        op = req["op"]
        if op == "connect":
            await self._xc([("add", req["label"], req["in"], req["out"])], conn)
        elif op == "disconnect":
            await self._xc([("del", req["label"])], conn)
        elif op == "list":
            return {"ok": True, "xc": [{"label": n, "in": rx, "out": tx} for n, (rx, tx) in sorted(d.connections.items())]}
        elif op == "power":
            return {"ok": True, "dbm": d.read_power(req["port"])}
        elif op == "alarm":
            d.set_alarm(req["port"], high=req.get("hi"), low=req.get("lo"))
        elif op == "monitor":
            d.set_monitor(req["port"], req.get("enabled", True), req.get("wavelength"))
        elif op == "begin":
            conn.staged = []
        elif op == "commit":
            await self._commit(conn)
        else:
            return {"ok": False, "reason": f"unknown op {op}"}
        return {"ok": True}

    def event_line(self, port, level, dbm):
        return json.dumps({"event": "alarm", "port": port, "level": level, "dbm": dbm}, separators=(",", ":"))


class VendorCProtocol(VendorProtocol):
    async def handle(self, line: str, conn: _Conn) -> list[str]:
        try:
            return [await self._handle(line, conn)]
        except DeviceError as exc:
            text = str(exc)
            code = "409" if text.startswith("busy") or "exists" in text else "404" if "no " in text or "unknown" in text else "400"
            return [f"{code} {text}"]
        except (ValueError, KeyError, IndexError):
            return [f"400 bad request: {line}"]

    async def _handle(self, line: str, conn: _Conn) -> str:
        d = self.device
        verb, path, *params = line.split()
        fields = dict(p.split("=", 1) for p in params)
        if verb == "SET" and path.startswith("/xc/"):
            await self._xc([("add", path[4:], fields["rx"], fields["tx"])], conn)
        elif verb == "DEL" and path.startswith("/xc/"):
            await self._xc([("del", path[4:])], conn)
        elif verb == "GET" and path == "/xc":
            body = ";".join(f"{n},{rx},{tx}" for n, (rx, tx) in sorted(d.connections.items()))
            return f"200 {body}".rstrip()
        elif verb == "GET" and path.startswith("/power/"):
            return f"200 dbm={fmt(d.read_power(path[7:]))}"
        elif verb == "SET" and path.startswith("/alarm/"):
            hi, lo = fields.get("hi"), fields.get("lo")
            d.set_alarm(path[7:], high=float(hi) if hi else None, low=float(lo) if lo else None)
        elif verb == "SET" and path.startswith("/monitor/"):
            wl = fields.get("wl")
            d.set_monitor(path[9:], fields.get("enabled", "true") == "true", float(wl) if wl else None)
        elif verb == "POST" and path == "/tx/begin":
            conn.staged = []
        elif verb == "POST" and path == "/tx/commit":
            await self._commit(conn)
        else:
            return f"400 unsupported {verb} {path}"
        return "200"

    def event_line(self, port, level, dbm):
        return f"NOTIFY /alarm/{port} level={level} dbm={fmt(dbm)}"


PROTOCOLS = {"A": VendorAProtocol, "B": VendorBProtocol, "C": VendorCProtocol}


class OcsEmulator:
    def __init__(self, device_id: str, tx_ports, rx_ports, profile: EmulatorProfile | None = None,
                 host: str = "127.0.0.1", port: int = 0):
        self.profile = profile or EmulatorProfile()
        self.device = OcsDevice(device_id, tx_ports, rx_ports, self.profile.latency, self.profile.seed)
        for p, dbm in self.profile.port_powers.items():
            self.device.power[p] = dbm
        self.protocol = PROTOCOLS[self.profile.vendor.upper()](self.device)
        self.host = host
        self.port = port
        self._server: asyncio.base_events.Server | None = None
        self._writers: set[asyncio.StreamWriter] = set()
        self.fault_mode = FaultMode.NONE
        self._initial_fault = FaultMode(self.profile.fault_mode)

    @property
    def device_id(self) -> str:
        return self.device.device_id

    @property
    def address(self) -> tuple[str, int]:
        return self.host, self.port

    async def start(self) -> None:
        await self._listen()
        if self._initial_fault is not FaultMode.NONE:
            await self.set_fault(self._initial_fault)

    async def _listen(self) -> None:
        self._server = await asyncio.start_server(self._handle, self.host, self.port, reuse_address=True)
        self.port = self._server.sockets[0].getsockname()[1]

    async def _close_server(self) -> None:
        if self._server is not None:
            self._server.close()
            for writer in list(self._writers):
                writer.close()
            await self._server.wait_closed()
            self._server = None

    async def stop(self) -> None:
        await self._close_server()

    async def set_fault(self, mode: FaultMode | str) -> None:
        mode = FaultMode(mode)
        previous, self.fault_mode = self.fault_mode, mode
        self.device.lie = mode is FaultMode.LIE_ON_APPLY
        if mode is FaultMode.SERVER_DOWN and previous is not FaultMode.SERVER_DOWN:
            await self._close_server()
        elif mode is not FaultMode.SERVER_DOWN and previous is FaultMode.SERVER_DOWN:
            await self._listen()

    def set_port_power(self, port: str, dbm: float) -> None:
        self.device.set_power(port, dbm)

    def snapshot(self) -> dict:
        return self.device.snapshot()

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        self._writers.add(writer)
        conn = _Conn()

        def listener(port, level, dbm):
            if not writer.is_closing():
                writer.write((self.protocol.event_line(port, level, dbm) + "\n").encode())

        self.device.listeners.add(listener)
        try:
            while True:
                raw = await reader.readline()
                if not raw:
                    break
                line = raw.decode().strip()
                if not line:
                    continue
                self.device.requests += 1
                if self.fault_mode is FaultMode.TIMEOUT_ALL:
                    continue
                replies = await self.protocol.handle(line, conn)
                if self.fault_mode is FaultMode.TIMEOUT_ALL:
                    continue
                writer.write("".join(r + "\n" for r in replies).encode())
        except (ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            self.device.listeners.discard(listener)
            self._writers.discard(writer)
            writer.close()


# -- terminals ---------------------------------------------------------------

class TerminalEmulator:
    """Endpoint with a laser on its Tx ports and LOS alarms on its Rx ports."""

    def __init__(self, terminal_id: str, tx_ports=(), rx_ports=(), host: str = "127.0.0.1", port: int = 0):
        self.terminal_id = terminal_id
        self.tx_ports = frozenset(tx_ports)
        self.rx_ports = frozenset(rx_ports)
        self.launch_dbm: float | None = None
        self.power: dict[str, float] = {p: DARK_DBM for p in self.rx_ports}
        self.monitors = {p: True for p in self.rx_ports}
        self.alarms = {p: {"high": None, "low": TERMINAL_LOS_DBM} for p in self.rx_ports}
        self.server = UnifiedServer(self, host, port)
        self.on_change: Callable[[], None] | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self.server.address

    async def start(self) -> None:
        await self.server.start()

    async def stop(self) -> None:
        await self.server.stop()

    def set_laser(self, dbm: float | None) -> None:
        self.launch_dbm = dbm
        if self.on_change is not None:
            self.on_change()

    def set_power(self, port: str, dbm: float) -> None:
        old = self.power.get(port, DARK_DBM)
        self.power[port] = dbm
        if old == dbm or not self.monitors.get(port):
            return
        alarm = self.alarms.get(port, {})
        high, low = alarm.get("high"), alarm.get("low")
        if high is not None and old < high <= dbm:
            self.server.publish(port, NotificationKind.SIGNAL_DETECTED.value, dbm)
        if low is not None and old > low >= dbm:
            self.server.publish(port, NotificationKind.SIGNAL_DEGRADED.value, dbm)

    async def edit_config(self, payload: dict) -> None:
        if payload.get("create") or payload.get("delete"):
            raise RpcError("terminals have no internal connections")
        for m in payload.get("monitor", []):
            if m["port"] not in self.rx_ports:
                raise RpcError(f"unknown port {m['port']}")
            self.monitors[m["port"]] = bool(m.get("enabled", True))
        for a in payload.get("alarm", []):
            if a["port"] not in self.rx_ports:
                raise RpcError(f"unknown port {a['port']}")
            entry = self.alarms.setdefault(a["port"], {"high": None, "low": None})
            for key in ("high", "low"):
                if a.get(key) is not None:
                    entry[key] = float(a[key])

    async def get(self) -> dict:
        return {
            "connections": [],
            "power": [{"port": p, "dbm": self.power[p]} for p in sorted(self.rx_ports) if self.monitors.get(p)],
        }

    async def hello(self) -> None:
        return None


# -- light -------------------------------------------------------------------

class OpticalPlant:
    """Lossless light propagation over the strands of a topology."""

    def __init__(self, links: list[dict]):
        self.links = {l["id"]: l for l in links}
        self._from = {(l["src"], l["src_port"]): l for l in links}
        self.devices: dict[str, OcsDevice] = {}
        self.terminals: dict[str, TerminalEmulator] = {}
        self.pulled: set[str] = set()

    def pull(self, link_id: str) -> None:
        self.pulled.add(link_id)
        self.recompute()

    def plug(self, link_id: str) -> None:
        self.pulled.discard(link_id)
        self.recompute()

    def trace(self) -> dict[tuple[str, str], float]:
        lit: dict[tuple[str, str], float] = {}
        for tid, term in sorted(self.terminals.items()):
            if term.launch_dbm is None:
                continue
            for port in sorted(term.tx_ports):
                link = self._from.get((tid, port))
                seen: set[str] = set()
                while link is not None and link["id"] not in seen and link["id"] not in self.pulled:
                    seen.add(link["id"])
                    node, rx = link["dst"], link["dst_port"]
                    lit[(node, rx)] = max(lit.get((node, rx), DARK_DBM), term.launch_dbm)
                    device = self.devices.get(node)
                    if device is None:
                        break
                    tx = next((t for r, t in device.connections.values() if r == rx), None)
                    if tx is None:
                        break
                    lit[(node, tx)] = max(lit.get((node, tx), DARK_DBM), term.launch_dbm)
                    link = self._from.get((node, tx))
        return lit

    def recompute(self) -> None:
        lit = self.trace()
        for did, device in self.devices.items():
            for port in device.power:
                device.set_power(port, lit.get((did, port), DARK_DBM))
        for tid, term in self.terminals.items():
            for port in term.rx_ports:
                term.set_power(port, lit.get((tid, port), DARK_DBM))


class Fleet:
    """Emulators, translators and terminals for a whole topology document.

    ``topology`` is the controller-facing document: every switch and
    terminal address is rewritten to where its unified SBI endpoint actually
    listens. Switches may carry a ``vendor`` key; otherwise vendors A, B, C
    are assigned round-robin in id order.
    """

    def __init__(self, topology: dict, latency: LatencyModel | dict | None = None,
                 vendors: dict[str, str] | None = None, faults: dict[str, FaultMode] | None = None,
                 seed=0, host: str = "127.0.0.1"):
        self.source = topology
        self.latency = latency or LatencyModel()
        self.vendors = dict(vendors or {})
        self.faults = dict(faults or {})
        self.seed = seed
        self.host = host
        self.emulators: dict[str, OcsEmulator] = {}
        self.translators: dict[str, Translator] = {}
        self.terminals: dict[str, TerminalEmulator] = {}
        self.plant = OpticalPlant(topology.get("links", []))
        self.topology: dict = {}

    def vendor_of(self, ocs_id: str) -> str:
        return self.emulators[ocs_id].profile.vendor

    def _latency_for(self, ocs_id: str) -> LatencyModel:
        if isinstance(self.latency, dict):
            return self.latency.get(ocs_id, LatencyModel())
        return self.latency

    async def start(self) -> dict:
        switches = sorted(self.source.get("switches", []), key=lambda s: s["id"])
        out_switches = []
        for i, sw in enumerate(switches):
            vendor = self.vendors.get(sw["id"]) or sw.get("vendor") or "ABC"[i % 3]
            profile = EmulatorProfile(vendor=vendor, latency=self._latency_for(sw["id"]), seed=self.seed)
            emu = OcsEmulator(sw["id"], sw["tx_ports"], sw["rx_ports"], profile, self.host, 0)
            await emu.start()
            emu.device.on_change = self.plant.recompute
            self.plant.devices[sw["id"]] = emu.device
            tr = Translator(vendor, self.host, emu.port, self.host, int(sw.get("port") or 0) if sw.get("bind") else 0)
            await tr.start()
            self.emulators[sw["id"]] = emu
            self.translators[sw["id"]] = tr
            out_switches.append({"id": sw["id"], "host": self.host, "port": tr.address[1],
                                 "tx_ports": list(sw["tx_ports"]), "rx_ports": list(sw["rx_ports"])})
        links = self.source.get("links", [])
        out_terminals = []
        for term in sorted(self.source.get("terminals", []), key=lambda t: t["id"]):
            tid = term["id"]
            tx = [l["src_port"] for l in links if l["src"] == tid]
            rx = [l["dst_port"] for l in links if l["dst"] == tid]
            emu = TerminalEmulator(tid, tx, rx, self.host, int(term.get("port") or 0) if term.get("bind") else 0)
            await emu.start()
            emu.on_change = self.plant.recompute
            self.plant.terminals[tid] = emu
            self.terminals[tid] = emu
            out_terminals.append({"id": tid, "host": self.host, "port": emu.address[1]})
        for ocs_id, mode in self.faults.items():
            await self.emulators[ocs_id].set_fault(mode)
        self.topology = {
            "switches": out_switches,
            "terminals": out_terminals,
            "links": [{k: l[k] for k in ("id", "src", "dst", "src_port", "dst_port")} for l in links],
        }
        return self.topology

    async def stop(self) -> None:
        for tr in self.translators.values():
            await tr.stop()
        for emu in self.emulators.values():
            await emu.stop()
        for term in self.terminals.values():
            await term.stop()

    async def __aenter__(self) -> "Fleet":
        await self.start()
        return self

    async def __aexit__(self, *exc) -> None:
        await self.stop()

    # -- control side channel ---------------------------------------------

    async def set_fault(self, ocs_id: str, mode: FaultMode | str) -> None:
        await self.emulators[ocs_id].set_fault(mode)

    async def clear_faults(self) -> None:
        for emu in self.emulators.values():
            if emu.fault_mode is not FaultMode.NONE:
                await emu.set_fault(FaultMode.NONE)

    def set_laser(self, terminal_id: str, dbm: float | None) -> None:
        self.terminals[terminal_id].set_laser(dbm)

    def set_lasers(self, levels: dict[str, float | None]) -> None:
        for tid, dbm in levels.items():
            self.terminals[tid].launch_dbm = dbm
        self.plant.recompute()

    def pull(self, link_id: str) -> None:
        self.plant.pull(link_id)

    def plug(self, link_id: str) -> None:
        self.plant.plug(link_id)

    def snapshot(self) -> dict[str, dict]:
        return {ocs: emu.snapshot() for ocs, emu in sorted(self.emulators.items())}

    def reseed(self, seed_for: Callable[[str], object]) -> None:
        for ocs, emu in self.emulators.items():
            emu.device.reseed(seed_for(ocs))

    def total_requests(self) -> int:
        return sum(emu.device.requests for emu in self.emulators.values())

    def clock(self) -> float:
        return time.time()
