"""Northbound service: newline-delimited JSON over TCP.

Request ``{"id", "method", "params"}``; reply ``{"id", "result"}`` or
``{"id", "error": {"code", "message"}}``. Requests on one connection run
concurrently and replies carry the request id, so they may come back out
of order.
"""

from __future__ import annotations

import asyncio
import inspect
import itertools
import json
import logging
import socket

from .controller import METHODS, Controller
from .errors import InvalidRange, NbiError, PathOperFailed, from_wire

log = logging.getLogger(__name__)

STREAM_LIMIT = 1 << 24


def _frame(obj) -> bytes:
    return json.dumps(obj, separators=(",", ":")).encode() + b"\n"


class NbiServer:
    def __init__(self, controller: Controller, host: str = "127.0.0.1", port: int = 0):
        self.controller = controller
        self.host = host
        self.port = port
        self._server: asyncio.base_events.Server | None = None
        self._writers: set[asyncio.StreamWriter] = set()

    @property
    def address(self) -> tuple[str, int]:
        return self.host, self.port

    async def start(self) -> None:
        self._server = await asyncio.start_server(self._handle, self.host, self.port,
                                                  limit=STREAM_LIMIT, reuse_address=True)
        self.port = self._server.sockets[0].getsockname()[1]

    async def stop(self) -> None:
        if self._server is not None:
            self._server.close()
            for writer in list(self._writers):
                writer.close()
            await self._server.wait_closed()
            self._server = None

    async def serve_forever(self) -> None:
        await self.start()
        async with self._server:
            await self._server.serve_forever()

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        self._writers.add(writer)
        tasks: set[asyncio.Task] = set()
        try:
            while True:
                try:
                    line = await reader.readline()
                except (ConnectionError, asyncio.LimitOverrunError, ValueError):
                    break
                if not line:
                    break
                if not line.strip():
                    continue
                task = asyncio.get_running_loop().create_task(self._answer(line, writer))
                tasks.add(task)
                task.add_done_callback(tasks.discard)
            if tasks:
                await asyncio.gather(*tasks, return_exceptions=True)
        finally:
            self._writers.discard(writer)
            writer.close()

    async def _answer(self, line: bytes, writer: asyncio.StreamWriter) -> None:
        reply = await self.handle_line(line)
        if not writer.is_closing():
            writer.write(_frame(reply))

    async def handle_line(self, line: bytes | str) -> dict:
        try:
            frame = json.loads(line)
        except ValueError:
            return {"id": None, "error": InvalidRange("malformed frame").to_wire()}
        if not isinstance(frame, dict):
            return {"id": None, "error": InvalidRange("frame must be an object").to_wire()}
        rid = frame.get("id")
        try:
            result = await self.dispatch(frame.get("method"), frame.get("params", {}))
        except NbiError as exc:
            return {"id": rid, "error": exc.to_wire()}
        except Exception as exc:
            log.exception("request %r failed", rid)
            return {"id": rid, "error": PathOperFailed(f"internal error: {exc!r}").to_wire()}
        return {"id": rid, "result": result}

    async def dispatch(self, method, params) -> dict:
        name = METHODS.get(method) if isinstance(method, str) else None
        if name is None:
            raise InvalidRange(f"unknown method {method!r}")
        if params is None:
            params = {}
        if not isinstance(params, dict):
            raise InvalidRange("params must be an object")
        handler = getattr(self.controller, name)
        try:
            inspect.signature(handler).bind(**params)
        except TypeError as exc:
            raise InvalidRange(f"{method}: {exc}") from None
        return await handler(**params)


class AsyncNbiClient:
    def __init__(self, host: str, port: int, timeout: float = 60.0):
        self.host = host
        self.port = port
        self.timeout = timeout
        self._ids = itertools.count(1)
        self._pending: dict[int, asyncio.Future] = {}
        self._writer: asyncio.StreamWriter | None = None
        self._task: asyncio.Task | None = None

    async def connect(self) -> "AsyncNbiClient":
        reader, self._writer = await asyncio.open_connection(self.host, self.port, limit=STREAM_LIMIT)
        self._task = asyncio.get_running_loop().create_task(self._read(reader))
        return self

    async def _read(self, reader) -> None:
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                frame = json.loads(line)
                fut = self._pending.pop(frame.get("id"), None)
                if fut is not None and not fut.done():
                    fut.set_result(frame)
        finally:
            for fut in self._pending.values():
                if not fut.done():
                    fut.set_exception(ConnectionError("controller closed the connection"))

    async def raw(self, method: str, params: dict | None = None) -> dict:
        rid = next(self._ids)
        fut = asyncio.get_running_loop().create_future()
        self._pending[rid] = fut
        self._writer.write(_frame({"id": rid, "method": method, "params": params or {}}))
        return await asyncio.wait_for(fut, self.timeout)

    async def call(self, method: str, **params) -> dict:
        frame = await self.raw(method, params)
        if "error" in frame:
            raise from_wire(frame["error"])
        return frame["result"]

    async def close(self) -> None:
        if self._writer is not None:
            self._writer.close()
        if self._task is not None:
            self._task.cancel()
            try:
                await self._task
            except (asyncio.CancelledError, Exception):
                pass


class NbiClient:
    """Blocking client: one request at a time."""

    def __init__(self, host: str, port: int, timeout: float = 60.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.sock.settimeout(timeout)
        self._file = self.sock.makefile("rb")
        self._ids = itertools.count(1)

    def raw(self, method: str, params: dict | None = None) -> dict:
        rid = next(self._ids)
        self.sock.sendall(_frame({"id": rid, "method": method, "params": params or {}}))
        while True:
            line = self._file.readline()
            if not line:
                raise ConnectionError("controller closed the connection")
            frame = json.loads(line)
            if frame.get("id") == rid:
                return frame

    def call(self, method: str, **params) -> dict:
        frame = self.raw(method, params)
        if "error" in frame:
            raise from_wire(frame["error"])
        return frame["result"]

    def close(self) -> None:
        self._file.close()
        self.sock.close()

    def __enter__(self) -> "NbiClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
