"""Per-device translator: unified SBI north, one vendor protocol south.

Pipeline for an edit: the unified server hands the payload to the
datastore, the change subscriber passes the change to the converter, and the
resulting vendor lines are sent to the device. The datastore is only
committed once the device accepts. Reads always go to the device, so ``get``
reports what the device actually applied, not the datastore copy.
"""

from __future__ import annotations

import asyncio
import copy
import logging
import time
from typing import Callable

from ..errors import RpcError
from .protocol import STREAM_LIMIT
from .server import UnifiedServer
from .vendors import Converter, ReplyUnit, UnifiedEdit, converter_for

log = logging.getLogger(__name__)

VENDOR_TIMEOUT = 10.0


class VendorSession:
    """A persistent connection to a vendor device.

    Requests are serialized. On a timeout or disconnect the connection is
    dropped, so a late reply can never be matched to a later request.
    """

    def __init__(self, converter: Converter, host: str, port: int,
                 on_event: Callable | None = None, timeout: float = VENDOR_TIMEOUT):
        self.converter = converter
        self.host = host
        self.port = port
        self.on_event = on_event
        self.timeout = timeout
        self._lock = asyncio.Lock()
        self._replies: asyncio.Queue = asyncio.Queue()
        self._writer: asyncio.StreamWriter | None = None
        self._task: asyncio.Task | None = None
        self._reconnect: asyncio.Task | None = None
        self._closed = False

    @property
    def connected(self) -> bool:
        return self._writer is not None and not self._writer.is_closing()

    async def connect(self) -> None:
        if self.connected:
            return
        try:
            reader, writer = await asyncio.wait_for(
                asyncio.open_connection(self.host, self.port, limit=STREAM_LIMIT), self.timeout
            )
        except (OSError, asyncio.TimeoutError) as exc:
            raise RpcError(f"vendor device {self.host}:{self.port} unreachable: {exc!r}") from None
        self._writer = writer
        self._replies = asyncio.Queue()
        self._task = asyncio.get_running_loop().create_task(self._read_loop(reader, writer, self._replies))

    async def _read_loop(self, reader, writer, replies: asyncio.Queue) -> None:
        try:
            while True:
                raw = await reader.readline()
                if not raw:
                    break
                line = raw.decode().rstrip("\r\n")
                if not line:
                    continue
                try:
                    kind, value = self.converter.feed(line)
                except (ValueError, KeyError) as exc:
                    log.warning("unparseable vendor line %r: %s", line, exc)
                    continue
                if kind == "event":
                    if self.on_event is not None:
                        self.on_event(*value)
                elif kind == "reply":
                    replies.put_nowait(value)
        except (ConnectionError, asyncio.IncompleteReadError, asyncio.LimitOverrunError):
            pass
        finally:
            replies.put_nowait(None)
            if self._writer is writer:
                self._writer = None
                writer.close()
                self._schedule_reconnect()

    def _schedule_reconnect(self) -> None:
        # keep a session up so asynchronous vendor events are not missed
        if self._closed or self.on_event is None:
            return
        if self._reconnect is None or self._reconnect.done():
            self._reconnect = asyncio.get_running_loop().create_task(self._reconnect_loop())

    async def _reconnect_loop(self) -> None:
        while not self._closed and not self.connected:
            await asyncio.sleep(0.2)
            if self._lock.locked():
                continue
            try:
                async with self._lock:
                    await self.connect()
            except RpcError:
                pass

    def _abort(self) -> None:
        writer, self._writer = self._writer, None
        if writer is not None:
            writer.close()
        self._schedule_reconnect()

    async def request(self, lines: list[str]) -> list[ReplyUnit]:
        if not lines:
            return []
        async with self._lock:
            await self.connect()
            replies = self._replies
            self._writer.write("".join(line + "\n" for line in lines).encode())
            units = []
            deadline = time.monotonic() + self.timeout
            try:
                for _ in lines:
                    unit = await asyncio.wait_for(replies.get(), max(0.0, deadline - time.monotonic()))
                    if unit is None:
                        raise RpcError("vendor device closed the connection")
                    units.append(unit)
            except asyncio.TimeoutError:
                self._abort()
                raise RpcError(f"vendor device timed out after {self.timeout:.1f}s") from None
            except RpcError:
                self._abort()
                raise
            return units

    async def close(self) -> None:
        self._closed = True
        if self._reconnect is not None:
            self._reconnect.cancel()
        if self._writer is not None:
            self._writer.close()
        if self._task is not None:
            self._task.cancel()
            try:
                await self._task
            except (asyncio.CancelledError, Exception):
                pass


class Datastore:
    """The translator's copy of the configured (intended) device model."""

    def __init__(self):
        self.connections: dict[str, dict] = {}
        self.monitor: dict[str, dict] = {}
        self.alarm: dict[str, dict] = {}

    def applied(self, edit: UnifiedEdit) -> "Datastore":
        new = copy.deepcopy(self)
        for name in edit.delete:
            new.connections.pop(name, None)
        for c in edit.create:
            new.connections[c.name] = c.to_dict()
        for m in edit.monitor:
            new.monitor[m["port"]] = {"enabled": bool(m.get("enabled", True)), "wavelength": m.get("wavelength")}
        for a in edit.alarm:
            entry = new.alarm.setdefault(a["port"], {"high": None, "low": None})
            for key in ("high", "low"):
                if a.get(key) is not None:
                    entry[key] = a[key]
        return new


class Translator:
    """Unified-SBI front end for a single vendor device."""

    def __init__(self, converter: Converter | str, vendor_host: str, vendor_port: int,
                 host: str = "127.0.0.1", port: int = 0, vendor_timeout: float = VENDOR_TIMEOUT):
        self.converter = converter_for(converter) if isinstance(converter, str) else converter
        self.datastore = Datastore()
        self.server = UnifiedServer(self, host, port)
        self.vendor = VendorSession(self.converter, vendor_host, vendor_port, self._on_vendor_event, vendor_timeout)
        self._lock = asyncio.Lock()
        self._subscribers: list[Callable[[UnifiedEdit], object]] = [self._push_to_device]

    @property
    def address(self) -> tuple[str, int]:
        return self.server.address

    async def start(self) -> None:
        await self.server.start()
        try:
            await self.vendor.connect()
        except RpcError:
            log.info("vendor device not reachable yet at %s:%s", self.vendor.host, self.vendor.port)

    async def stop(self) -> None:
        await self.server.stop()
        await self.vendor.close()

    def _on_vendor_event(self, port: str, kind, dbm: float) -> None:
        self.server.publish(port, kind.value, dbm)

    async def _push_to_device(self, edit: UnifiedEdit) -> None:
        units = await self.vendor.request(self.converter.edit_lines(edit))
        for unit in units:
            if not unit.ok:
                raise RpcError(unit.reason)

    # -- backend interface ---------------------------------------------------

    async def edit_config(self, payload: dict) -> None:
        edit = UnifiedEdit.from_payload(payload)
        async with self._lock:
            staged = self.datastore.applied(edit)
            for subscriber in self._subscribers:
                await subscriber(edit)
            self.datastore = staged

    async def get(self) -> dict:
        async with self._lock:
            monitored = sorted(p for p, m in self.datastore.monitor.items() if m["enabled"])
            lines = self.converter.list_lines()
            for port in monitored:
                lines += self.converter.power_lines(port)
            units = await self.vendor.request(lines)
        for unit in units:
            if not unit.ok:
                raise RpcError(unit.reason)
        conns = self.converter.parse_list(units[0])
        power = []
        for port, unit in zip(monitored, units[1:]):
            entry = {"port": port, "dbm": self.converter.parse_power(unit)}
            wl = self.datastore.monitor[port].get("wavelength")
            if wl is not None:
                entry["wavelength"] = wl
            power.append(entry)
        return {"connections": [c.to_dict() for c in sorted(conns)], "power": power}

    async def hello(self) -> None:
        units = await self.vendor.request(self.converter.list_lines())
        if not units[0].ok:
            raise RpcError(units[0].reason)
