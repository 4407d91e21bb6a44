"""Controller-side session to one device speaking the unified SBI."""

from __future__ import annotations

import asyncio
import itertools
import logging
import time
from typing import Callable

from ..errors import RpcError, SbiError, SbiTimeout, SessionClosed
from ..model import ConfigPayload, Notification, NotificationKind
from .protocol import STREAM_LIMIT, DeviceState, encode, read_json

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 3.0

NotificationSink = Callable[[Notification], None]
LostSink = Callable[[str], None]


class DeviceClient:
    """One session per device; opened lazily and reopened after a drop.

    Replies are matched by rpc-id, and the device answers in request order.
    Notifications are handed to every subscribed sink off the RPC path.
    After a reconnect the device subscription is renewed.
    """

    def __init__(self, device_id: str, host: str, port: int, timeout: float = DEFAULT_TIMEOUT):
        self.device_id = device_id
        self.host = host
        self.port = port
        self.timeout = timeout
        self._ids = itertools.count(1)
        self._pending: dict[int, asyncio.Future] = {}
        self._reader: asyncio.StreamReader | None = None
        self._writer: asyncio.StreamWriter | None = None
        self._reader_task: asyncio.Task | None = None
        self._connect_lock = asyncio.Lock()
        self._sinks: dict[int, tuple[NotificationSink, LostSink | None]] = {}
        self._sink_ids = itertools.count(1)
        self._device_subscribed = False
        self._closed = False
        self.rpc_count = 0

    @property
    def connected(self) -> bool:
        return self._writer is not None and not self._writer.is_closing()

    async def _ensure_connected(self, timeout: float) -> None:
        if self.connected:
            return
        async with self._connect_lock:
            if self.connected:
                return
            if self._closed:
                raise SessionClosed(f"{self.device_id}: client closed")
            try:
                reader, writer = await asyncio.wait_for(
                    asyncio.open_connection(self.host, self.port, limit=STREAM_LIMIT), timeout
                )
            except asyncio.TimeoutError:
                raise SbiTimeout(f"{self.device_id}: connect timed out") from None
            except OSError as exc:
                raise SessionClosed(f"{self.device_id}: cannot connect to {self.host}:{self.port}: {exc}") from None
            self._reader, self._writer = reader, writer
            self._reader_task = asyncio.get_running_loop().create_task(self._read_loop(reader))
            self._device_subscribed = False
        if self._sinks:
            await self._subscribe_device(timeout)

    async def _read_loop(self, reader: asyncio.StreamReader) -> None:
        try:
            while True:
                try:
                    frame = await read_json(reader)
                except ValueError:
                    log.warning("%s: dropping malformed frame", self.device_id)
                    continue
                if frame is None:
                    break
                if "notification" in frame:
                    self._deliver(frame["notification"])
                    continue
                fut = self._pending.pop(frame.get("rpc-id"), None)
                if fut is None or fut.done():
                    continue
                if "error" in frame:
                    fut.set_exception(RpcError(frame["error"].get("message", "rpc-error")))
                else:
                    fut.set_result(frame.get("reply"))
        except (ConnectionError, asyncio.IncompleteReadError, asyncio.LimitOverrunError):
            pass
        finally:
            self._drop()

    def _drop(self) -> None:
        writer, self._writer = self._writer, None
        if writer is not None:
            writer.close()
        self._device_subscribed = False
        pending, self._pending = self._pending, {}
        for fut in pending.values():
            if not fut.done():
                fut.set_exception(SessionClosed(f"{self.device_id}: session lost"))
        if not self._closed:
            for _, lost in list(self._sinks.values()):
                if lost is not None:
                    lost(self.device_id)

    def _deliver(self, body: dict) -> None:
        try:
            n = Notification(
                ocs_id=self.device_id,
                port=body["port"],
                kind=NotificationKind(body["kind"]),
                measured_dbm=float(body["dbm"]),
                timestamp=float(body.get("ts", time.time())),
            )
        except (KeyError, ValueError, TypeError):
            log.warning("%s: malformed notification %r", self.device_id, body)
            return
        for sink, _ in list(self._sinks.values()):
            sink(n)

    async def call(self, rpc: str, payload: dict | None = None, timeout: float | None = None):
        timeout = self.timeout if timeout is None else timeout
        deadline = time.monotonic() + timeout
        await self._ensure_connected(timeout)
        rid = next(self._ids)
        fut = asyncio.get_running_loop().create_future()
        self._pending[rid] = fut
        frame = {"rpc-id": rid, "rpc": rpc}
        if payload is not None:
            frame["payload"] = payload
        self.rpc_count += 1
        try:
            self._writer.write(encode(frame))
            return await asyncio.wait_for(fut, max(0.0, deadline - time.monotonic()))
        except asyncio.TimeoutError:
            raise SbiTimeout(f"{self.device_id}: {rpc} timed out after {timeout:.2f}s") from None
        except (ConnectionError, AttributeError) as exc:
            raise SessionClosed(f"{self.device_id}: {exc}") from None
        finally:
            self._pending.pop(rid, None)

    # -- operations -----------------------------------------------------------

    async def edit_config(self, payload: ConfigPayload | dict, timeout: float | None = None) -> None:
        body = payload.to_wire() if isinstance(payload, ConfigPayload) else payload
        await self.call("edit-config", body, timeout)

    async def get_state(self, timeout: float | None = None) -> DeviceState:
        reply = await self.call("get", None, timeout)
        return DeviceState.from_wire(reply or {})

    async def configure_monitor(self, port: str, enabled: bool = True, wavelength: float | None = None) -> None:
        await self.call("edit-config", {"monitor": [{"port": port, "enabled": enabled, "wavelength": wavelength}]})

    async def configure_alarm(self, port: str, high: float | None = None, low: float | None = None) -> None:
        await self.call("edit-config", {"alarm": [{"port": port, "high": high, "low": low}]})

    async def hello(self, timeout: float | None = None) -> bool:
        try:
            return await self.call("hello", None, timeout) == "ok"
        except SbiError:
            return False

    async def _subscribe_device(self, timeout: float) -> None:
        if self._device_subscribed:
            return
        self._device_subscribed = True
        try:
            await self.call("subscribe", None, timeout)
        except SbiError:
            self._device_subscribed = False
            raise

    async def subscribe(self, sink: NotificationSink, lost: LostSink | None = None, keep: bool = False) -> int:
        """Register ``sink``. With ``keep`` the sink survives a failed first
        attempt and the device subscription is renewed on the next connect."""
        handle = next(self._sink_ids)
        self._sinks[handle] = (sink, lost)
        try:
            await self._ensure_connected(self.timeout)
            await self._subscribe_device(self.timeout)
        except SbiError:
            if not keep:
                del self._sinks[handle]
            raise
        return handle

    def unsubscribe(self, handle: int) -> None:
        self._sinks.pop(handle, None)

    async def close(self) -> None:
        self._closed = True
        if self._writer is not None:
            self._writer.close()
        if self._reader_task is not None:
            self._reader_task.cancel()
            try:
                await self._reader_task
            except (asyncio.CancelledError, Exception):
                pass
        self._writer = None
